#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "melodia/denoiser.hpp"
#include "melodia/sampler.hpp"

namespace melodia {

struct ProbeSample {
    Eigen::VectorXf features;
    int label = 0;
    int layer = 0;
    AttentionKind kind = AttentionKind::cross_attn;
    std::string axis;
};

// One hidden layer (width 128) with a softmax head. Also reused by the
// metrics module as the attribute classifier network.
struct MlpProbe {
    Eigen::MatrixXf w1;  // hidden x in
    Eigen::MatrixXf b1;  // 1 x hidden
    Eigen::MatrixXf w2;  // classes x hidden
    Eigen::MatrixXf b2;  // 1 x classes
    uint64_t training_seed = 0;

    Eigen::VectorXf probabilities(const Eigen::VectorXf& x) const;
    int predict(const Eigen::VectorXf& x) const;
};

struct MlpTrainOptions {
    int hidden = 128;
    int epochs = 300;
    float learning_rate = 1e-2f;
    float weight_decay = 1e-4f;
    uint64_t seed = 0;
};

// Full-batch Adam on softmax cross-entropy against (possibly soft) target
// distributions. Deterministic per seed.
MlpProbe train_mlp(const Eigen::MatrixXf& features, const Eigen::MatrixXf& targets,
                   const MlpTrainOptions& options);

// ---------------------------------------------------------------------------
// map pooling

// head/step-averaged SA map (N x N) -> 16 x 16 block means, flattened
Eigen::VectorXf pool_sa_map(const Eigen::MatrixXf& mean_map);
// head/step-averaged CA map (N x M) -> column mean over the keyword span
Eigen::VectorXf pool_ca_map(const Eigen::MatrixXf& mean_map, int span_begin, int span_end);

// ---------------------------------------------------------------------------
// collection + probing protocol

struct ProbePrompt {
    std::string text;
    std::string keyword;  // the class word inside the template
    int label = 0;
};

struct ProbeOptions {
    int steps = 50;              // generation steps per prompt
    int sampled_steps = 8;       // evenly spaced steps whose maps are averaged
    float cfg_w = 5.5f;
    double split = 0.7;
    uint64_t seed = 0;
};

// Generates once per prompt, capturing maps at the sampled steps for each
// requested layer; features are head- and step-averaged, then pooled.
std::vector<ProbeSample> collect_maps(const Checkpoint& ckpt,
                                      const std::vector<ProbePrompt>& prompts,
                                      const std::vector<int>& layers, AttentionKind kind,
                                      const ProbeOptions& options);

struct ProbeEval {
    double overall_accuracy = 0.0;
    std::vector<double> per_class_recall;
    int test_count = 0;
};

// Stratified split, train on 70%, report on the held-out rest.
std::pair<MlpProbe, ProbeEval> train_probe(const std::vector<ProbeSample>& samples,
                                           int num_classes, double split, uint64_t seed);

struct ProbeReport {
    std::string axis;
    AttentionKind kind = AttentionKind::cross_attn;
    std::vector<std::string> classes;
    std::vector<int> layers;
    // recall[class][layer_index]; `average` over layers per class
    std::vector<std::vector<double>> recall;
    std::vector<double> class_average;
    std::vector<double> layer_accuracy;  // held-out overall accuracy per layer
    double mean_accuracy = 0.0;          // mean of layer_accuracy

    std::string to_json() const;
    std::string to_text() const;  // aligned table, layers 1,4,6,10,13,16 highlighted
};

struct ProbeReportPair {
    ProbeReport ca;
    ProbeReport sa;
};

// The full protocol for one attribute axis: per-layer probes for both kinds
// over template prompts of every class on that axis.
ProbeReportPair probe_all_layers(const Checkpoint& ckpt, const AttributeAxis& axis,
                                 const ProbeOptions& options, int prompts_per_class = 20);

}  // namespace melodia
