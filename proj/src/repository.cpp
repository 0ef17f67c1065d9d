#include "melodia/repository.hpp"

#include <nlohmann/json.hpp>

#include "melodia/io.hpp"

namespace melodia {

using nlohmann::json;

std::string RepoKey::describe() const {
    return "step " + std::to_string(step_t) + ", layer " + std::to_string(layer) + ", head " +
           std::to_string(head);
}

AttentionRepository::AttentionRepository(RepoGeometry geometry, uint64_t schedule_hash,
                                         uint64_t codec_id, uint64_t model_hash, int t_start,
                                         std::vector<int> expected_steps)
    : geometry_(geometry),
      schedule_hash_(schedule_hash),
      codec_id_(codec_id),
      model_hash_(model_hash),
      t_start_(t_start),
      expected_steps_(std::move(expected_steps)) {
    require(geometry_.tokens >= 1 && geometry_.head_dim >= 1 && geometry_.layers >= 1 &&
                geometry_.heads >= 1,
            ErrorCode::invalid_argument, "repository geometry must be positive");
}

void AttentionRepository::put(const RepoKey& key, const Eigen::MatrixXf& q,
                              const Eigen::MatrixXf& k) {
    require(key.layer >= 1 && key.layer <= geometry_.layers, ErrorCode::out_of_range,
            "put: layer outside [1," + std::to_string(geometry_.layers) + "]");
    require(key.head >= 0 && key.head < geometry_.heads, ErrorCode::out_of_range,
            "put: head outside [0," + std::to_string(geometry_.heads) + ")");
    require(!records_.count(key), ErrorCode::invalid_argument,
            "put: duplicate record for " + key.describe());
    const auto check_shape = [&](const Eigen::MatrixXf& m, const char* what) {
        if (m.rows() != geometry_.tokens || m.cols() != geometry_.head_dim) {
            fail(ErrorCode::mismatch,
                 std::string("put: ") + what + " shape " + std::to_string(m.rows()) + "x" +
                     std::to_string(m.cols()) + " does not match repository geometry " +
                     std::to_string(geometry_.tokens) + "x" + std::to_string(geometry_.head_dim));
        }
    };
    check_shape(q, "Q");
    check_shape(k, "K");
    records_.emplace(key, Record{q, k});
}

SaOverride AttentionRepository::get(const RepoKey& key) const {
    const auto it = records_.find(key);
    if (it == records_.end()) {
        fail(ErrorCode::not_found,
             "repository has no record for " + key.describe() +
                 " (schedule mismatch between capture and edit?)");
    }
    SaOverride ovr;
    ovr.q = it->second.q;
    ovr.k = it->second.k;
    ovr.heads = 1;
    ovr.source_step = key.step_t;
    ovr.source_layer = key.layer;
    return ovr;
}

std::vector<RepoKey> AttentionRepository::missing_keys() const {
    std::vector<RepoKey> missing;
    for (int t : expected_steps_) {
        for (int layer = 1; layer <= geometry_.layers; ++layer) {
            for (int head = 0; head < geometry_.heads; ++head) {
                const RepoKey key{t, layer, head};
                if (!records_.count(key)) missing.push_back(key);
            }
        }
    }
    return missing;
}

uint64_t AttentionRepository::record_bytes() const {
    uint64_t total = 0;
    for (const auto& [key, rec] : records_) {
        (void)key;
        total += 4ull * static_cast<uint64_t>(rec.q.size());
        total += 4ull * static_cast<uint64_t>(rec.k.size());
    }
    return total;
}

void AttentionRepository::save(const std::filesystem::path& path) const {
    const auto missing = missing_keys();
    if (!missing.empty()) {
        std::string names;
        for (size_t i = 0; i < missing.size() && i < 8; ++i) {
            names += (i ? "; " : "") + missing[i].describe();
        }
        if (missing.size() > 8) names += "; ...";
        fail(ErrorCode::invalid_argument,
             "save: repository incomplete, " + std::to_string(missing.size()) +
                 " records missing: " + names);
    }

    json key_list = json::array();
    for (const auto& [key, rec] : records_) {
        (void)rec;
        key_list.push_back({key.step_t, key.layer, key.head});
    }
    json header = {
        {"schedule_hash", schedule_hash_},
        {"codec_id", codec_id_},
        {"model_hash", model_hash_},
        {"t_start", t_start_},
        {"geometry",
         {{"tokens", geometry_.tokens},
          {"head_dim", geometry_.head_dim},
          {"layers", geometry_.layers},
          {"heads", geometry_.heads}}},
        {"steps", expected_steps_},
        {"keys", key_list},
    };
    const std::string htext = header.dump();

    io::Writer w;
    w.tag("MREP");
    w.u32(static_cast<uint32_t>(htext.size()));
    w.bytes(htext.data(), htext.size());
    for (const auto& [key, rec] : records_) {
        (void)key;
        w.matrix(rec.q);
        w.matrix(rec.k);
    }
    io::write_file_atomic(path, w.buffer());
}

AttentionRepository AttentionRepository::load(const std::filesystem::path& path) {
    io::Reader r(io::read_file(path));
    r.expect_tag("MREP", path.string());
    const uint32_t hlen = r.u32();
    const json header = json::parse(r.str(hlen));

    RepoGeometry geom;
    geom.tokens = header.at("geometry").at("tokens").get<int>();
    geom.head_dim = header.at("geometry").at("head_dim").get<int>();
    geom.layers = header.at("geometry").at("layers").get<int>();
    geom.heads = header.at("geometry").at("heads").get<int>();

    AttentionRepository repo(geom, header.at("schedule_hash").get<uint64_t>(),
                             header.at("codec_id").get<uint64_t>(),
                             header.at("model_hash").get<uint64_t>(),
                             header.at("t_start").get<int>(),
                             header.at("steps").get<std::vector<int>>());
    for (const auto& k : header.at("keys")) {
        const RepoKey key{k.at(0).get<int>(), k.at(1).get<int>(), k.at(2).get<int>()};
        const Eigen::MatrixXf q = r.matrix(geom.tokens, geom.head_dim);
        const Eigen::MatrixXf kk = r.matrix(geom.tokens, geom.head_dim);
        repo.put(key, q, kk);
    }
    require(repo.complete(), ErrorCode::format_error, "loaded repository is incomplete");
    return repo;
}

HookSet::CaptureSink make_repository_sink(AttentionRepository& repo) {
    return [&repo](const AttentionEvent& event) {
        if (event.kind != AttentionKind::self_attn || event.q == nullptr || event.k == nullptr)
            return;
        const int hd = static_cast<int>(event.q->cols()) / event.heads;
        for (int h = 0; h < event.heads; ++h) {
            repo.put(RepoKey{event.timestep, event.layer, h},
                     event.q->middleCols(h * hd, hd), event.k->middleCols(h * hd, hd));
        }
    };
}

HookSet::OverrideSupplier make_repository_supplier(const AttentionRepository& repo) {
    return [&repo](int layer, int timestep) {
        const auto& geom = repo.geometry();
        SaOverride ovr;
        ovr.heads = geom.heads;
        ovr.source_step = timestep;
        ovr.source_layer = layer;
        ovr.q.resize(geom.tokens, geom.heads * geom.head_dim);
        ovr.k.resize(geom.tokens, geom.heads * geom.head_dim);
        for (int h = 0; h < geom.heads; ++h) {
            const SaOverride one = repo.get(RepoKey{timestep, layer, h});
            ovr.q.middleCols(h * geom.head_dim, geom.head_dim) = one.q;
            ovr.k.middleCols(h * geom.head_dim, geom.head_dim) = one.k;
        }
        return ovr;
    };
}

}  // namespace melodia
