#include <doctest.h>

#include "fixtures.hpp"
#include "melodia/io.hpp"
#include "melodia/repository.hpp"

using namespace melodia;

namespace {

AttentionRepository make_repo(const std::vector<int>& steps, int layers = 16, int heads = 4,
                              int tokens = 64, int head_dim = 16) {
    RepoGeometry geom{tokens, head_dim, layers, heads};
    return AttentionRepository(geom, 0x5eed, 0xc0dec, 0x30de1, steps.empty() ? 0 : steps.back(),
                               steps);
}

void fill(AttentionRepository& repo, uint64_t seed = 3) {
    Rng rng(seed);
    const auto& geom = repo.geometry();
    for (int t : repo.expected_steps()) {
        for (int layer = 1; layer <= geom.layers; ++layer) {
            for (int head = 0; head < geom.heads; ++head) {
                Eigen::MatrixXf q(geom.tokens, geom.head_dim), k(geom.tokens, geom.head_dim);
                for (int r = 0; r < geom.tokens; ++r)
                    for (int c = 0; c < geom.head_dim; ++c) {
                        q(r, c) = static_cast<float>(rng.normal());
                        k(r, c) = static_cast<float>(rng.normal());
                    }
                repo.put({t, layer, head}, q, k);
            }
        }
    }
}

std::vector<int> steps_of(int count, int stride = 20) {
    std::vector<int> steps;
    for (int i = 0; i < count; ++i) steps.push_back(i * stride);
    return steps;
}

}  // namespace

TEST_CASE("repository: put stores, duplicates and bad shapes are rejected") {
    AttentionRepository repo = make_repo(steps_of(2), 2, 2, 8, 4);
    const Eigen::MatrixXf q = Eigen::MatrixXf::Random(8, 4);
    const Eigen::MatrixXf k = Eigen::MatrixXf::Random(8, 4);
    repo.put({0, 1, 0}, q, k);
    CHECK(repo.record_count() == 1);
    CHECK_THROWS_WITH_AS(repo.put({0, 1, 0}, q, k), doctest::Contains("duplicate"), Error);
    const Eigen::MatrixXf wrong = Eigen::MatrixXf::Random(6, 4);
    CHECK_THROWS_WITH_AS(repo.put({0, 1, 1}, wrong, k), doctest::Contains("8x4"), Error);
}

TEST_CASE("repository: get returns stored tensors bit-identically with provenance") {
    AttentionRepository repo = make_repo(steps_of(1), 2, 2, 8, 4);
    const Eigen::MatrixXf q = Eigen::MatrixXf::Random(8, 4);
    const Eigen::MatrixXf k = Eigen::MatrixXf::Random(8, 4);
    repo.put({0, 2, 1}, q, k);
    const SaOverride ovr = repo.get({0, 2, 1});
    CHECK(ovr.q == q);
    CHECK(ovr.k == k);
    CHECK(ovr.source_step == 0);
    CHECK(ovr.source_layer == 2);
}

TEST_CASE("repository: missing key error names step, layer and head") {
    AttentionRepository repo = make_repo(steps_of(1), 2, 2, 8, 4);
    CHECK_THROWS_WITH_AS(repo.get({40, 1, 0}), doctest::Contains("step 40, layer 1, head 0"),
                         Error);
}

TEST_CASE("repository: save requires completeness and lists what is missing") {
    const auto dir = fixtures::scratch_dir("repo_incomplete");
    AttentionRepository repo = make_repo(steps_of(2), 2, 2, 8, 4);
    fill(repo);
    repo.erase({20, 2, 1});
    CHECK_FALSE(repo.complete());
    CHECK_THROWS_WITH_AS(repo.save(dir / "repo.mrep"),
                         doctest::Contains("step 20, layer 2, head 1"), Error);
}

TEST_CASE("repository: byte-exact round trip") {
    const auto dir = fixtures::scratch_dir("repo_rt");
    AttentionRepository repo = make_repo(steps_of(3), 4, 2, 16, 8);
    fill(repo);
    repo.save(dir / "repo.mrep");
    const AttentionRepository back = AttentionRepository::load(dir / "repo.mrep");
    CHECK(back.record_count() == repo.record_count());
    CHECK(back.schedule_hash() == repo.schedule_hash());
    CHECK(back.codec_id() == repo.codec_id());
    CHECK(back.model_hash() == repo.model_hash());
    for (const auto& [key, rec] : repo.records()) {
        const SaOverride ovr = back.get(key);
        CHECK(ovr.q == rec.q);
        CHECK(ovr.k == rec.k);
    }
    // second save of the loaded repository is byte-identical
    back.save(dir / "repo2.mrep");
    CHECK(io::read_file(dir / "repo.mrep") == io::read_file(dir / "repo2.mrep"));
}

TEST_CASE("repository: footprint matches the closed-form record count") {
    AttentionRepository repo = make_repo(steps_of(50), 16, 4, 64, 16);
    fill(repo, 1);
    // 50 steps x 16 layers x 4 heads records of 2 * 64 * 16 floats
    CHECK(repo.record_bytes() == 26214400ull);
    // exact accounting against the live buffers
    uint64_t measured = 0;
    for (const auto& [key, rec] : repo.records()) {
        measured += 4ull * static_cast<uint64_t>(rec.q.size() + rec.k.size());
    }
    CHECK(repo.record_bytes() == measured);
    CHECK(repo.memory_footprint() == measured + 12ull * repo.record_count());
}

TEST_CASE("repository: empty repository has index-only footprint") {
    AttentionRepository repo = make_repo({});
    CHECK(repo.record_bytes() == 0);
    CHECK(repo.memory_footprint() == 0);
}

TEST_CASE("repository: footprint is linear in the number of steps") {
    AttentionRepository ten = make_repo(steps_of(10), 4, 2, 16, 8);
    AttentionRepository twenty = make_repo(steps_of(20), 4, 2, 16, 8);
    fill(ten);
    fill(twenty);
    CHECK(twenty.memory_footprint() == 2 * ten.memory_footprint());
}

TEST_CASE("repository: loaded files must be complete") {
    const auto dir = fixtures::scratch_dir("repo_load_bad");
    AttentionRepository repo = make_repo(steps_of(2), 2, 2, 8, 4);
    fill(repo);
    repo.save(dir / "repo.mrep");
    auto bytes = io::read_file(dir / "repo.mrep");
    bytes.resize(bytes.size() - 16);
    io::write_file_atomic(dir / "short.mrep", bytes);
    CHECK_THROWS_AS(AttentionRepository::load(dir / "short.mrep"), Error);
}

TEST_CASE("repository sink and supplier round trip through hook plumbing") {
    AttentionRepository repo = make_repo(steps_of(1), 1, 2, 8, 4);
    HookSet hooks;
    hooks.add_capture_all_layers(AttentionKind::self_attn, make_repository_sink(repo));

    AttentionEvent event;
    const Eigen::MatrixXf q = Eigen::MatrixXf::Random(8, 8);
    const Eigen::MatrixXf k = Eigen::MatrixXf::Random(8, 8);
    AttentionMap map;
    event.layer = 1;
    event.kind = AttentionKind::self_attn;
    event.timestep = 0;
    event.q = &q;
    event.k = &k;
    event.heads = 2;
    event.map = &map;
    hooks.emit(event);
    CHECK(repo.record_count() == 2);  // one per head
    CHECK(repo.complete());

    const auto supplier = make_repository_supplier(repo);
    const SaOverride ovr = supplier(1, 0);
    CHECK(ovr.q == q);
    CHECK(ovr.k == k);
    CHECK(ovr.heads == 2);
}
