#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>

#include "melodia/spectra.hpp"

namespace melodia {

struct Latent {
    Eigen::MatrixXf tokens;  // N x d
    uint64_t codec_id = 0;

    int token_count() const { return static_cast<int>(tokens.rows()); }
    int dim() const { return static_cast<int>(tokens.cols()); }
};

// Exactly invertible patch codec: per-patch flatten, scalar normalization,
// then a seeded orthogonal projection. Orthogonality makes the round trip an
// identity up to float error and encode an isometry of the normalized data.
class LatentCodec {
public:
    LatentCodec(int patch_rows, int patch_cols, float norm_mean, float norm_scale,
                uint64_t seed);

    Latent encode(const MelSpectrogram& spec) const;

    // Raw inverse is exact (may carry small negatives); `clamped` is the
    // rendering view with magnitudes floored at zero.
    struct Decoded {
        Eigen::MatrixXf raw;
        MelSpectrogram clamped;
    };
    Decoded decode(const Latent& latent, const SpectrogramParams& meta = SpectrogramParams{}) const;

    uint64_t id() const { return codec_id_; }
    int patch_rows() const { return patch_rows_; }
    int patch_cols() const { return patch_cols_; }
    int dim() const { return patch_rows_ * patch_cols_; }
    int token_count(int frames, int bins) const {
        return (frames / patch_rows_) * (bins / patch_cols_);
    }
    float norm_mean() const { return norm_mean_; }
    float norm_scale() const { return norm_scale_; }
    uint64_t seed() const { return seed_; }
    const Eigen::MatrixXf& projection() const { return projection_; }

    void save(const std::filesystem::path& path) const;
    static LatentCodec load(const std::filesystem::path& path);

    // checkpoint embeds codecs inline; these mirror save/load
    std::string header_json() const;
    static LatentCodec from_header_and_blob(const std::string& header_json,
                                            const Eigen::MatrixXf& projection);

private:
    LatentCodec() = default;

    int patch_rows_ = 8;
    int patch_cols_ = 8;
    float norm_mean_ = 0.0f;
    float norm_scale_ = 1.0f;
    uint64_t seed_ = 0;
    Eigen::MatrixXf projection_;  // d x d, orthogonal
    uint64_t codec_id_ = 0;
};

// seeded orthogonal matrix: QR of a Gaussian draw with the R-diagonal sign fix
Eigen::MatrixXf random_orthogonal(int dim, uint64_t seed);

}  // namespace melodia
