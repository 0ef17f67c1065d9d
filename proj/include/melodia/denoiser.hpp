#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "melodia/attention.hpp"
#include "melodia/codec.hpp"
#include "melodia/condition.hpp"
#include "melodia/spectra.hpp"

namespace melodia {

struct DenoiserConfig {
    int layers = 16;
    int token_dim = 64;   // d_eps
    int sa_dim = 64;      // d_s
    int ca_dim = 64;      // d_c
    int tau_dim = 64;     // d_tau
    int heads = 4;
    int hidden_dim = 128;
    int tokens = 64;      // N, fixed by the codec grid
    int total_timesteps = 1000;  // T
    float beta_lo = 1e-4f;
    float beta_hi = 2e-2f;

    void validate() const;
    std::string to_json() const;
    static DenoiserConfig from_json(const std::string& text);
    uint64_t hash() const;
};

struct FeedForwardParams {
    Eigen::MatrixXf w1;  // hidden x d
    Eigen::MatrixXf b1;  // 1 x hidden
    Eigen::MatrixXf w2;  // d x hidden
    Eigen::MatrixXf b2;  // 1 x d
};

// One pre-norm residual block: x += SA(ln1(x)); x += CA(ln2(x), tau);
// x += FF(ln3(x)).
struct BlockParams {
    Eigen::MatrixXf ln1_g, ln1_b;
    AttentionParams sa;
    Eigen::MatrixXf ln2_g, ln2_b;
    AttentionParams ca;
    Eigen::MatrixXf ln3_g, ln3_b;
    FeedForwardParams ff;
};

struct Parameters {
    std::vector<BlockParams> blocks;
    Eigen::MatrixXf pos_embed;    // N x d, learned
    Eigen::MatrixXf lnf_g, lnf_b;
    Eigen::MatrixXf head_w;       // d x d
    Eigen::MatrixXf head_b;       // 1 x d
};

struct NamedParam {
    std::string name;
    Eigen::MatrixXf* value;
};

struct TrainOptions {
    int steps = 2500;
    int batch_size = 8;
    float learning_rate = 3e-4f;
    int warmup_steps = 100;
    float cond_dropout = 0.1f;
    float adam_beta1 = 0.9f;
    float adam_beta2 = 0.999f;
    float adam_eps = 1e-8f;
    uint64_t seed = 1;

    std::string to_json() const;
    static TrainOptions from_json(const std::string& text);
};

struct Checkpoint {
    DenoiserConfig config;
    Parameters params;
    PromptVocabulary vocab;
    LatentCodec codec{8, 8, 0.0f, 1.0f, 0};
    uint64_t training_seed = 0;
    int trained_steps = 0;
    std::string training_recipe;  // optimizer + schedule, JSON
    std::vector<float> loss_curve;

    uint64_t model_hash() const;  // FNV over all trainable blobs
    std::vector<NamedParam> trainable();  // stable order, includes vocab rows
};

Checkpoint init_checkpoint(const DenoiserConfig& config, const std::vector<std::string>& vocab_words,
                           const LatentCodec& codec, uint64_t seed);

// sinusoidal embedding of the integer timestep, 1 x dim
Eigen::MatrixXf timestep_embedding(int t, int dim);

// ---------------------------------------------------------------------------
// forward / backward

struct LayerNormCache {
    Eigen::MatrixXf normalized;  // x_hat
    Eigen::VectorXf inv_std;
};

struct BlockCache {
    Eigen::MatrixXf x_in;
    LayerNormCache ln1, ln2, ln3;
    Eigen::MatrixXf ln1_out, ln2_out, ln3_out;
    AttentionTrace sa, ca;
    Eigen::MatrixXf ff_pre;   // pre-activation
    Eigen::MatrixXf ff_act;   // gelu(pre)
};

struct ForwardCache {
    Eigen::MatrixXf tokens_in;  // z + pos + time
    std::vector<BlockCache> blocks;
    LayerNormCache lnf;
    Eigen::MatrixXf lnf_in, lnf_out;
    Eigen::MatrixXf cond_rows;
    std::vector<int> cond_ids;  // -1 = null row
};

// eps_theta(z_t, t, y). Hooks observe exactly L SA and L CA events per call in
// layer order and never affect the numerics. `cache` may be null outside
// training.
Eigen::MatrixXf predict_noise(const Checkpoint& ckpt, const Eigen::MatrixXf& z, int t,
                              const PromptEmbedding& cond, const HookSet* hooks = nullptr,
                              ForwardCache* cache = nullptr);

struct GradBuffer {
    std::vector<Eigen::MatrixXf> grads;  // aligned with Checkpoint::trainable()

    static GradBuffer zeros_like(Checkpoint& ckpt);
    void reset();
};

// Backpropagates d_loss/d_eps through the cached forward pass, accumulating
// parameter gradients (including the conditioning rows used). Training path
// only: assumes no SA overrides were active.
void backprop(Checkpoint& ckpt, const ForwardCache& cache, const Eigen::MatrixXf& d_eps,
              GradBuffer& grads);

// One fixed training item: everything randomness already resolved.
struct TrainSample {
    Eigen::MatrixXf z0;
    int t = 0;
    Eigen::MatrixXf noise;
    std::vector<int> cond_ids;       // -1 = null embedding
    std::vector<std::string> cond_words;
};

// mean over samples of mean squared eps error; gradients accumulated if
// grads != nullptr. Exposed so gradient checks can drive it directly.
double training_loss(Checkpoint& ckpt, const std::vector<TrainSample>& batch,
                     GradBuffer* grads);

Checkpoint train(const std::vector<ManifestEntry>& manifest, const std::filesystem::path& clip_dir,
                 const DenoiserConfig& config, const TrainOptions& options);

// ---------------------------------------------------------------------------
// checkpoint container ("MLDM")

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace melodia
