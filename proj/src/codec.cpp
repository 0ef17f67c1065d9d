#include "melodia/codec.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "melodia/io.hpp"

namespace melodia {

using nlohmann::json;

Eigen::MatrixXf random_orthogonal(int dim, uint64_t seed) {
    Rng rng(mix_seed(seed, 0x6f727468));
    Eigen::MatrixXd g(dim, dim);
    for (int r = 0; r < dim; ++r)
        for (int c = 0; c < dim; ++c) g(r, c) = rng.normal();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ();
    const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
    // sign-fix so the factorization (and hence the codec) is unique
    for (int c = 0; c < dim; ++c) {
        if (r(c, c) < 0.0) q.col(c) = -q.col(c);
    }
    return q.cast<float>();
}

namespace {

uint64_t projection_hash(const Eigen::MatrixXf& p) {
    // hash over the row-major f32 blob exactly as serialized
    io::Writer w;
    w.matrix(p);
    return fnv1a(w.buffer().data(), w.buffer().size());
}

}  // namespace

LatentCodec::LatentCodec(int patch_rows, int patch_cols, float norm_mean, float norm_scale,
                         uint64_t seed)
    : patch_rows_(patch_rows),
      patch_cols_(patch_cols),
      norm_mean_(norm_mean),
      norm_scale_(norm_scale),
      seed_(seed) {
    require(patch_rows >= 1 && patch_cols >= 1, ErrorCode::invalid_argument,
            "patch dims must be positive");
    require(norm_scale > 0.0f, ErrorCode::invalid_argument, "norm scale must be positive");
    projection_ = random_orthogonal(dim(), seed);
    codec_id_ = projection_hash(projection_);
}

Latent LatentCodec::encode(const MelSpectrogram& spec) const {
    const int frames = spec.frames();
    const int bins = spec.bins();
    require(frames % patch_rows_ == 0 && bins % patch_cols_ == 0, ErrorCode::mismatch,
            "spectrogram " + std::to_string(frames) + "x" + std::to_string(bins) +
                " not divisible by patch " + std::to_string(patch_rows_) + "x" +
                std::to_string(patch_cols_));
    const int grid_r = frames / patch_rows_;
    const int grid_c = bins / patch_cols_;
    const int d = dim();

    Latent out;
    out.codec_id = codec_id_;
    out.tokens.resize(grid_r * grid_c, d);
    Eigen::VectorXf patch(d);
    for (int gr = 0; gr < grid_r; ++gr) {
        for (int gc = 0; gc < grid_c; ++gc) {
            int i = 0;
            for (int r = 0; r < patch_rows_; ++r)
                for (int c = 0; c < patch_cols_; ++c)
                    patch(i++) = (spec.data(gr * patch_rows_ + r, gc * patch_cols_ + c) -
                                  norm_mean_) /
                                 norm_scale_;
            out.tokens.row(gr * grid_c + gc) = (projection_ * patch).transpose();
        }
    }
    return out;
}

LatentCodec::Decoded LatentCodec::decode(const Latent& latent,
                                         const SpectrogramParams& meta) const {
    require(latent.codec_id == codec_id_, ErrorCode::mismatch,
            "latent was produced by a different codec (id mismatch)");
    const int d = dim();
    require(latent.dim() == d, ErrorCode::mismatch, "latent dim does not match codec");

    const int n = latent.token_count();
    // infer a square-ish grid from the default geometry; meta carries frames
    const int grid_r = meta.frames / patch_rows_;
    const int grid_c = meta.bins / patch_cols_;
    require(grid_r * grid_c == n, ErrorCode::mismatch,
            "token count " + std::to_string(n) + " does not fit grid " +
                std::to_string(grid_r) + "x" + std::to_string(grid_c));

    Decoded out;
    out.raw.resize(meta.frames, meta.bins);
    for (int gr = 0; gr < grid_r; ++gr) {
        for (int gc = 0; gc < grid_c; ++gc) {
            const Eigen::VectorXf patch =
                projection_.transpose() * latent.tokens.row(gr * grid_c + gc).transpose();
            int i = 0;
            for (int r = 0; r < patch_rows_; ++r)
                for (int c = 0; c < patch_cols_; ++c)
                    out.raw(gr * patch_rows_ + r, gc * patch_cols_ + c) =
                        patch(i++) * norm_scale_ + norm_mean_;
        }
    }
    out.clamped.data = out.raw.cwiseMax(0.0f);
    out.clamped.sample_rate_hz = meta.sample_rate_hz;
    out.clamped.hop_samples = meta.hop_samples;
    out.clamped.mel_lo_hz = meta.mel_lo_hz;
    out.clamped.mel_hi_hz = meta.mel_hi_hz;
    return out;
}

std::string LatentCodec::header_json() const {
    json header = {
        {"patch_rows", patch_rows_}, {"patch_cols", patch_cols_},
        {"norm_mean", norm_mean_},   {"norm_scale", norm_scale_},
        {"seed", seed_},             {"codec_id", codec_id_},
    };
    return header.dump();
}

LatentCodec LatentCodec::from_header_and_blob(const std::string& header_json_text,
                                              const Eigen::MatrixXf& projection) {
    const json header = json::parse(header_json_text);
    LatentCodec codec;
    codec.patch_rows_ = header.at("patch_rows").get<int>();
    codec.patch_cols_ = header.at("patch_cols").get<int>();
    codec.norm_mean_ = header.at("norm_mean").get<float>();
    codec.norm_scale_ = header.at("norm_scale").get<float>();
    codec.seed_ = header.at("seed").get<uint64_t>();
    codec.projection_ = projection;
    codec.codec_id_ = projection_hash(projection);
    require(codec.codec_id_ == header.at("codec_id").get<uint64_t>(), ErrorCode::format_error,
            "codec blob does not match its recorded id");
    const int d = codec.dim();
    require(projection.rows() == d && projection.cols() == d, ErrorCode::format_error,
            "codec projection has wrong shape");
    const float ortho_err =
        (projection.transpose() * projection - Eigen::MatrixXf::Identity(d, d))
            .cwiseAbs()
            .maxCoeff();
    require(ortho_err < 1e-5f, ErrorCode::format_error, "codec projection is not orthogonal");
    return codec;
}

void LatentCodec::save(const std::filesystem::path& path) const {
    const std::string header = header_json();
    io::Writer w;
    w.tag("MCDC");
    w.u32(static_cast<uint32_t>(header.size()));
    w.bytes(header.data(), header.size());
    w.matrix(projection_);
    io::write_file_atomic(path, w.buffer());
}

LatentCodec LatentCodec::load(const std::filesystem::path& path) {
    io::Reader r(io::read_file(path));
    r.expect_tag("MCDC", path.string());
    const uint32_t hlen = r.u32();
    const std::string header = r.str(hlen);
    const json j = json::parse(header);
    const int pr = j.at("patch_rows").get<int>();
    const int pc = j.at("patch_cols").get<int>();
    const Eigen::MatrixXf projection = r.matrix(pr * pc, pr * pc);
    return from_header_and_blob(header, projection);
}

}  // namespace melodia
