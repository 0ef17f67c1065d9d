#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "melodia/probing.hpp"
#include "melodia/spectra.hpp"

namespace melodia {

// Fixed 22-dim spectral embedding: 16 pooled log-mel band means plus
// centroid, spread, tilt, flux statistics and attack sharpness. Feeds both
// the attribute classifier and the Fréchet statistics.
constexpr int kEmbeddingDim = 22;

Eigen::VectorXf clip_embedding(const MelSpectrogram& spec);

// Small MLP over standardized embeddings. Training mixes in noise draws with
// uniform soft labels so junk input scores close to chance instead of
// saturating on an arbitrary class.
struct AttributeClassifier {
    std::vector<std::string> classes;
    Eigen::VectorXf feature_mean;
    Eigen::VectorXf feature_std;
    MlpProbe net;

    int class_index(const std::string& label) const;
    Eigen::VectorXf probabilities(const MelSpectrogram& spec) const;
};

AttributeClassifier train_attribute_classifier(const std::vector<MelSpectrogram>& clips,
                                               const std::vector<std::string>& labels,
                                               uint64_t seed);

// probability the classifier assigns to the target class; in [0,1]
double adherence_score(const MelSpectrogram& clip, const std::string& target_class,
                       const AttributeClassifier& classifier);

// 0.5 * multi-scale log-mel L1 (time pooling 1x/2x/4x) +
// 0.5 * (1 - onset-envelope correlation floored at 0); lower is better
double structure_distance(const MelSpectrogram& source, const MelSpectrogram& edited);

// mean framewise cosine similarity of chroma rows; zero rows contribute 0
double chroma_similarity(const MelSpectrogram& source, const MelSpectrogram& edited);

struct FeatureStats {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

FeatureStats feature_stats(const std::vector<Eigen::VectorXf>& embeddings);

// ||mu_a - mu_b||^2 + tr(cov_a + cov_b - 2 (cov_a cov_b)^(1/2)) via symmetric
// eigendecomposition
double frechet_feature_distance(const FeatureStats& a, const FeatureStats& b);

// z-score then min-max onto [0,1]; a degenerate cohort maps to all 0.5
std::vector<double> zscore_minmax(const std::vector<double>& values);

struct MetricCohort {
    std::vector<std::string> methods;
    std::vector<double> adherence;           // higher better
    std::vector<double> structure_distance;  // lower better
    std::vector<double> chroma_similarity;   // higher better
    std::vector<double> fad;                 // lower better

    void validate() const;
};

// harmonic mean of normalized adherence and normalized negated structure
// distance, per method over the cohort
std::vector<double> asb(const MetricCohort& cohort);
// harmonic mean of normalized adherence and normalized chroma similarity
std::vector<double> amb(const MetricCohort& cohort);

// correlation helpers shared by tests and harnesses
double pearson(const std::vector<float>& a, const std::vector<float>& b);
double log_mel_pearson(const MelSpectrogram& a, const MelSpectrogram& b);

}  // namespace melodia
