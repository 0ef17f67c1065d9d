#include "melodia/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

namespace melodia {

Eigen::VectorXf clip_embedding(const MelSpectrogram& spec) {
    const int frames = spec.frames();
    const int bins = spec.bins();
    const Eigen::ArrayXXf logm = (1.0f + spec.data.array()).log();

    Eigen::VectorXf out = Eigen::VectorXf::Zero(kEmbeddingDim);

    // 16 pooled band means over time
    const int bands = 16;
    for (int band = 0; band < bands; ++band) {
        const int b0 = band * bins / bands;
        const int b1 = std::max(b0 + 1, (band + 1) * bins / bands);
        out(band) = logm.block(0, b0, frames, b1 - b0).mean();
    }

    // spectral centroid and spread over mel bins (energy weighted)
    const float total = logm.sum();
    if (total > 1e-9f) {
        float centroid = 0.0f;
        for (int b = 0; b < bins; ++b) {
            centroid += static_cast<float>(b) * logm.col(b).sum();
        }
        centroid /= total;
        float spread = 0.0f;
        for (int b = 0; b < bins; ++b) {
            const float d = static_cast<float>(b) - centroid;
            spread += d * d * logm.col(b).sum();
        }
        out(16) = centroid / static_cast<float>(bins);
        out(17) = std::sqrt(spread / total) / static_cast<float>(bins);
        // tilt proxy: high-band to low-band energy ratio (log)
        const float low = logm.leftCols(bins / 2).sum();
        const float high = logm.rightCols(bins - bins / 2).sum();
        out(18) = std::log((high + 1e-6f) / (low + 1e-6f));
    }

    // onset statistics
    const OnsetEnvelope env = onset_envelope(spec);
    float mean_flux = 0.0f;
    for (float v : env.values) mean_flux += v;
    mean_flux /= static_cast<float>(env.values.size());
    float var_flux = 0.0f;
    float peak = 0.0f;
    for (float v : env.values) {
        var_flux += (v - mean_flux) * (v - mean_flux);
        peak = std::max(peak, v);
    }
    var_flux /= static_cast<float>(env.values.size());
    out(19) = mean_flux;
    out(20) = std::sqrt(var_flux);
    // attack sharpness: peak flux relative to mean
    out(21) = peak / (mean_flux + 1e-6f) / 16.0f;

    return out;
}

int AttributeClassifier::class_index(const std::string& label) const {
    for (size_t i = 0; i < classes.size(); ++i) {
        if (classes[i] == label) return static_cast<int>(i);
    }
    fail(ErrorCode::not_found, "unknown class '" + label + "'");
}

Eigen::VectorXf AttributeClassifier::probabilities(const MelSpectrogram& spec) const {
    Eigen::VectorXf x = clip_embedding(spec);
    x = (x - feature_mean).cwiseQuotient(feature_std);
    return net.probabilities(x);
}

AttributeClassifier train_attribute_classifier(const std::vector<MelSpectrogram>& clips,
                                               const std::vector<std::string>& labels,
                                               uint64_t seed) {
    require(clips.size() == labels.size() && !clips.empty(), ErrorCode::invalid_argument,
            "classifier training needs aligned clips and labels");

    AttributeClassifier clf;
    for (const auto& l : labels) {
        if (std::find(clf.classes.begin(), clf.classes.end(), l) == clf.classes.end()) {
            clf.classes.push_back(l);
        }
    }
    std::sort(clf.classes.begin(), clf.classes.end());
    const int num_classes = static_cast<int>(clf.classes.size());
    require(num_classes >= 2, ErrorCode::invalid_argument, "need at least 2 classes");

    // noise augmentation: uniform-label draws teach the net to stay
    // non-committal away from the data manifold
    const int noise_count = static_cast<int>(clips.size()) / 2;
    Rng rng(mix_seed(seed, 0x636c6673));
    std::vector<Eigen::VectorXf> features;
    std::vector<Eigen::VectorXf> targets;
    for (size_t i = 0; i < clips.size(); ++i) {
        features.push_back(clip_embedding(clips[i]));
        Eigen::VectorXf t = Eigen::VectorXf::Zero(num_classes);
        t(clf.class_index(labels[i])) = 1.0f;
        targets.push_back(t);
    }
    const int frames = clips[0].frames();
    const int bins = clips[0].bins();
    float data_peak = 0.0f;
    for (const auto& c : clips) data_peak = std::max(data_peak, c.data.maxCoeff());
    for (int i = 0; i < noise_count; ++i) {
        MelSpectrogram noise;
        noise.data.resize(frames, bins);
        for (int r = 0; r < frames; ++r)
            for (int c = 0; c < bins; ++c)
                noise.data(r, c) = static_cast<float>(rng.uniform()) * data_peak;
        noise.sample_rate_hz = clips[0].sample_rate_hz;
        noise.hop_samples = clips[0].hop_samples;
        noise.mel_lo_hz = clips[0].mel_lo_hz;
        noise.mel_hi_hz = clips[0].mel_hi_hz;
        features.push_back(clip_embedding(noise));
        targets.push_back(Eigen::VectorXf::Constant(num_classes, 1.0f / num_classes));
    }

    const int n = static_cast<int>(features.size());
    Eigen::MatrixXf x(n, kEmbeddingDim);
    Eigen::MatrixXf y(n, num_classes);
    for (int i = 0; i < n; ++i) {
        x.row(i) = features[static_cast<size_t>(i)].transpose();
        y.row(i) = targets[static_cast<size_t>(i)].transpose();
    }

    clf.feature_mean = x.colwise().mean().transpose();
    Eigen::VectorXf var =
        (x.rowwise() - clf.feature_mean.transpose()).array().square().colwise().mean();
    clf.feature_std = (var.array() + 1e-6f).sqrt();
    x = (x.rowwise() - clf.feature_mean.transpose()).array().rowwise() /
        clf.feature_std.transpose().array();

    MlpTrainOptions opts;
    opts.hidden = 48;
    opts.epochs = 400;
    opts.learning_rate = 1e-2f;
    opts.weight_decay = 1e-4f;
    opts.seed = seed;
    clf.net = train_mlp(x, y, opts);
    return clf;
}

double adherence_score(const MelSpectrogram& clip, const std::string& target_class,
                       const AttributeClassifier& classifier) {
    const int idx = classifier.class_index(target_class);
    return static_cast<double>(classifier.probabilities(clip)(idx));
}

// ---------------------------------------------------------------------------
// structure / chroma

namespace {

double envelope_correlation(const std::vector<float>& a, const std::vector<float>& b) {
    const double r = pearson(a, b);
    if (std::isnan(r)) {
        // zero-variance envelope(s): equal -> perfectly correlated, else none
        double max_diff = 0.0;
        for (size_t i = 0; i < a.size(); ++i) {
            max_diff = std::max(max_diff, std::abs(static_cast<double>(a[i]) - b[i]));
        }
        return max_diff < 1e-9 ? 1.0 : 0.0;
    }
    return r;
}

Eigen::MatrixXf pool_time(const Eigen::MatrixXf& logm, int factor) {
    const int frames = static_cast<int>(logm.rows());
    const int out_frames = (frames + factor - 1) / factor;
    Eigen::MatrixXf out(out_frames, logm.cols());
    for (int f = 0; f < out_frames; ++f) {
        const int f0 = f * factor;
        const int f1 = std::min(frames, f0 + factor);
        out.row(f) = logm.middleRows(f0, f1 - f0).colwise().mean();
    }
    return out;
}

}  // namespace

double structure_distance(const MelSpectrogram& source, const MelSpectrogram& edited) {
    require(source.frames() == edited.frames() && source.bins() == edited.bins(),
            ErrorCode::mismatch, "structure_distance: shape mismatch");
    const Eigen::MatrixXf la = (1.0f + source.data.array()).log().matrix();
    const Eigen::MatrixXf lb = (1.0f + edited.data.array()).log().matrix();

    double l1 = 0.0;
    for (int factor : {1, 2, 4}) {
        const Eigen::MatrixXf pa = pool_time(la, factor);
        const Eigen::MatrixXf pb = pool_time(lb, factor);
        l1 += static_cast<double>((pa - pb).cwiseAbs().mean()) / 3.0;
    }

    const OnsetEnvelope ea = onset_envelope(source);
    const OnsetEnvelope eb = onset_envelope(edited);
    const double corr = std::max(0.0, envelope_correlation(ea.values, eb.values));
    return 0.5 * l1 + 0.5 * (1.0 - corr);
}

double chroma_similarity(const MelSpectrogram& source, const MelSpectrogram& edited) {
    require(source.frames() == edited.frames(), ErrorCode::mismatch,
            "chroma_similarity: frame count mismatch");
    const ChromaMatrix ca = chroma(source);
    const ChromaMatrix cb = chroma(edited);
    double acc = 0.0;
    const int frames = source.frames();
    for (int f = 0; f < frames; ++f) {
        const float na = ca.data.row(f).norm();
        const float nb = cb.data.row(f).norm();
        if (na > 0.0f && nb > 0.0f) {
            acc += static_cast<double>(ca.data.row(f).dot(cb.data.row(f)) / (na * nb));
        }
    }
    return acc / frames;
}

// ---------------------------------------------------------------------------
// Fréchet distance over embedding statistics

FeatureStats feature_stats(const std::vector<Eigen::VectorXf>& embeddings) {
    require(!embeddings.empty(), ErrorCode::invalid_argument, "feature_stats: empty set");
    const Eigen::Index dim = embeddings[0].size();
    require(dim <= 32, ErrorCode::invalid_argument, "feature_stats: dim must be <= 32");
    FeatureStats s;
    s.mean = Eigen::VectorXd::Zero(dim);
    for (const auto& e : embeddings) s.mean += e.cast<double>();
    s.mean /= static_cast<double>(embeddings.size());
    s.cov = Eigen::MatrixXd::Zero(dim, dim);
    for (const auto& e : embeddings) {
        const Eigen::VectorXd d = e.cast<double>() - s.mean;
        s.cov += d * d.transpose();
    }
    s.cov /= static_cast<double>(embeddings.size());
    return s;
}

namespace {

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, const char* what) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    require(es.info() == Eigen::Success, ErrorCode::numeric_error,
            std::string(what) + ": eigendecomposition failed");
    Eigen::VectorXd ev = es.eigenvalues();
    const double floor_tol = -1e-6 * std::max(1.0, ev.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        require(ev(i) > floor_tol, ErrorCode::numeric_error,
                std::string(what) + ": matrix is not positive semidefinite");
        ev(i) = std::sqrt(std::max(0.0, ev(i)));
    }
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double frechet_feature_distance(const FeatureStats& a, const FeatureStats& b) {
    require(a.mean.size() == b.mean.size(), ErrorCode::mismatch,
            "frechet: dimension mismatch");
    const double mean_term = (a.mean - b.mean).squaredNorm();
    const Eigen::MatrixXd sqrt_a = psd_sqrt(a.cov, "frechet cov_a");
    // tr((cov_a cov_b)^(1/2)) = tr(sqrt(sqrt_a cov_b sqrt_a))
    const Eigen::MatrixXd inner = sqrt_a * b.cov * sqrt_a;
    const Eigen::MatrixXd sqrt_inner = psd_sqrt(inner, "frechet inner");
    const double trace_term = a.cov.trace() + b.cov.trace() - 2.0 * sqrt_inner.trace();
    return mean_term + std::max(0.0, trace_term);
}

// ---------------------------------------------------------------------------
// cohort composites

std::vector<double> zscore_minmax(const std::vector<double>& values) {
    require(!values.empty(), ErrorCode::invalid_argument, "zscore_minmax: empty input");
    for (double v : values) {
        require(std::isfinite(v), ErrorCode::numeric_error, "zscore_minmax: non-finite input");
    }
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(values.size());
    if (var <= 0.0) return std::vector<double>(values.size(), 0.5);

    const double sd = std::sqrt(var);
    std::vector<double> z(values.size());
    for (size_t i = 0; i < values.size(); ++i) z[i] = (values[i] - mean) / sd;
    const double lo = *std::min_element(z.begin(), z.end());
    const double hi = *std::max_element(z.begin(), z.end());
    if (hi <= lo) return std::vector<double>(values.size(), 0.5);
    for (auto& v : z) v = (v - lo) / (hi - lo);
    return z;
}

void MetricCohort::validate() const {
    require(methods.size() >= 2, ErrorCode::invalid_argument,
            "cohort composites need at least 2 methods");
    const size_t n = methods.size();
    require(adherence.size() == n && structure_distance.size() == n &&
                chroma_similarity.size() == n,
            ErrorCode::invalid_argument, "cohort columns must align with methods");
}

namespace {

std::vector<double> harmonic_mean(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> out(a.size());
    for (size_t i = 0; i < a.size(); ++i) {
        out[i] = (a[i] + b[i]) <= 0.0 ? 0.0 : 2.0 * a[i] * b[i] / (a[i] + b[i]);
    }
    return out;
}

}  // namespace

std::vector<double> asb(const MetricCohort& cohort) {
    cohort.validate();
    std::vector<double> neg_structure(cohort.structure_distance.size());
    for (size_t i = 0; i < neg_structure.size(); ++i) {
        neg_structure[i] = -cohort.structure_distance[i];
    }
    return harmonic_mean(zscore_minmax(cohort.adherence), zscore_minmax(neg_structure));
}

std::vector<double> amb(const MetricCohort& cohort) {
    cohort.validate();
    return harmonic_mean(zscore_minmax(cohort.adherence), zscore_minmax(cohort.chroma_similarity));
}

// ---------------------------------------------------------------------------
// correlation helpers

double pearson(const std::vector<float>& a, const std::vector<float>& b) {
    require(a.size() == b.size() && !a.empty(), ErrorCode::invalid_argument,
            "pearson: size mismatch");
    double ma = 0.0, mb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(a.size());
    mb /= static_cast<double>(a.size());
    double num = 0.0, va = 0.0, vb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma;
        const double db = b[i] - mb;
        num += da * db;
        va += da * da;
        vb += db * db;
    }
    if (va <= 0.0 || vb <= 0.0) return std::numeric_limits<double>::quiet_NaN();
    return num / std::sqrt(va * vb);
}

double log_mel_pearson(const MelSpectrogram& a, const MelSpectrogram& b) {
    require(a.frames() == b.frames() && a.bins() == b.bins(), ErrorCode::mismatch,
            "log_mel_pearson: shape mismatch");
    std::vector<float> va, vb;
    va.reserve(static_cast<size_t>(a.data.size()));
    vb.reserve(static_cast<size_t>(b.data.size()));
    for (int f = 0; f < a.frames(); ++f) {
        for (int c = 0; c < a.bins(); ++c) {
            va.push_back(std::log1p(a.data(f, c)));
            vb.push_back(std::log1p(b.data(f, c)));
        }
    }
    return pearson(va, vb);
}

}  // namespace melodia
