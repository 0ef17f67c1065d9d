#include "melodia/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <sstream>

#include "melodia/io.hpp"
#include "melodia/sampler.hpp"

namespace melodia {

using nlohmann::json;

// ---------------------------------------------------------------------------
// config

void DenoiserConfig::validate() const {
    require(layers >= 1, ErrorCode::invalid_argument, "config: layers must be >= 1");
    require(token_dim >= 1 && sa_dim >= 1 && ca_dim >= 1 && tau_dim >= 1 && hidden_dim >= 1 &&
                tokens >= 1,
            ErrorCode::invalid_argument, "config: dims must be positive");
    require(heads >= 1 && sa_dim % heads == 0 && ca_dim % heads == 0,
            ErrorCode::invalid_argument, "config: head count must divide attention dims");
    require(sa_dim == token_dim && ca_dim == token_dim, ErrorCode::invalid_argument,
            "config: residual stream requires sa_dim == ca_dim == token_dim");
    require(total_timesteps >= 2, ErrorCode::invalid_argument, "config: T must be >= 2");
    require(beta_lo > 0.0f && beta_hi > beta_lo && beta_hi < 1.0f, ErrorCode::invalid_argument,
            "config: beta range must satisfy 0 < lo < hi < 1");
}

std::string DenoiserConfig::to_json() const {
    json j = {{"layers", layers},       {"token_dim", token_dim}, {"sa_dim", sa_dim},
              {"ca_dim", ca_dim},       {"tau_dim", tau_dim},     {"heads", heads},
              {"hidden_dim", hidden_dim}, {"tokens", tokens},
              {"total_timesteps", total_timesteps}, {"beta_lo", beta_lo}, {"beta_hi", beta_hi}};
    return j.dump();
}

DenoiserConfig DenoiserConfig::from_json(const std::string& text) {
    const json j = json::parse(text);
    DenoiserConfig c;
    c.layers = j.at("layers").get<int>();
    c.token_dim = j.at("token_dim").get<int>();
    c.sa_dim = j.at("sa_dim").get<int>();
    c.ca_dim = j.at("ca_dim").get<int>();
    c.tau_dim = j.at("tau_dim").get<int>();
    c.heads = j.at("heads").get<int>();
    c.hidden_dim = j.at("hidden_dim").get<int>();
    c.tokens = j.at("tokens").get<int>();
    c.total_timesteps = j.at("total_timesteps").get<int>();
    c.beta_lo = j.at("beta_lo").get<float>();
    c.beta_hi = j.at("beta_hi").get<float>();
    return c;
}

uint64_t DenoiserConfig::hash() const { return fnv1a_str(to_json()); }

std::string TrainOptions::to_json() const {
    json j = {{"optimizer", "adam"},
              {"steps", steps},
              {"batch_size", batch_size},
              {"learning_rate", learning_rate},
              {"warmup_steps", warmup_steps},
              {"cond_dropout", cond_dropout},
              {"adam_beta1", adam_beta1},
              {"adam_beta2", adam_beta2},
              {"adam_eps", adam_eps},
              {"seed", seed}};
    return j.dump();
}

TrainOptions TrainOptions::from_json(const std::string& text) {
    const json j = json::parse(text);
    TrainOptions o;
    o.steps = j.at("steps").get<int>();
    o.batch_size = j.at("batch_size").get<int>();
    o.learning_rate = j.at("learning_rate").get<float>();
    o.warmup_steps = j.at("warmup_steps").get<int>();
    o.cond_dropout = j.at("cond_dropout").get<float>();
    o.adam_beta1 = j.at("adam_beta1").get<float>();
    o.adam_beta2 = j.at("adam_beta2").get<float>();
    o.adam_eps = j.at("adam_eps").get<float>();
    o.seed = j.at("seed").get<uint64_t>();
    return o;
}

// ---------------------------------------------------------------------------
// init

namespace {

Eigen::MatrixXf gaussian(int rows, int cols, float std_dev, Rng& rng) {
    Eigen::MatrixXf m(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m(r, c) = std_dev * static_cast<float>(rng.normal());
    return m;
}

AttentionParams init_attention(int attn_dim, int q_src, int kv_src, int heads, Rng& rng) {
    AttentionParams p;
    p.w_q = gaussian(attn_dim, q_src, 0.05f, rng);
    p.w_k = gaussian(attn_dim, kv_src, 0.05f, rng);
    p.w_v = gaussian(attn_dim, kv_src, 0.05f, rng);
    p.heads = heads;
    return p;
}

}  // namespace

Checkpoint init_checkpoint(const DenoiserConfig& config, const std::vector<std::string>& vocab_words,
                           const LatentCodec& codec, uint64_t seed) {
    config.validate();
    Checkpoint ckpt;
    ckpt.config = config;
    ckpt.codec = codec;
    ckpt.training_seed = seed;
    ckpt.vocab = PromptVocabulary(vocab_words, config.tau_dim, seed);

    Rng rng(mix_seed(seed, 0x696e6974));
    const int d = config.token_dim;
    ckpt.params.blocks.resize(static_cast<size_t>(config.layers));
    for (auto& blk : ckpt.params.blocks) {
        blk.ln1_g = Eigen::MatrixXf::Ones(1, d);
        blk.ln1_b = Eigen::MatrixXf::Zero(1, d);
        blk.sa = init_attention(config.sa_dim, d, d, config.heads, rng);
        blk.ln2_g = Eigen::MatrixXf::Ones(1, d);
        blk.ln2_b = Eigen::MatrixXf::Zero(1, d);
        blk.ca = init_attention(config.ca_dim, d, config.tau_dim, config.heads, rng);
        blk.ln3_g = Eigen::MatrixXf::Ones(1, d);
        blk.ln3_b = Eigen::MatrixXf::Zero(1, d);
        blk.ff.w1 = gaussian(config.hidden_dim, d, 0.05f, rng);
        blk.ff.b1 = Eigen::MatrixXf::Zero(1, config.hidden_dim);
        blk.ff.w2 = gaussian(d, config.hidden_dim, 0.05f, rng);
        blk.ff.b2 = Eigen::MatrixXf::Zero(1, d);
    }
    ckpt.params.pos_embed = gaussian(config.tokens, d, 0.2f, rng);
    ckpt.params.lnf_g = Eigen::MatrixXf::Ones(1, d);
    ckpt.params.lnf_b = Eigen::MatrixXf::Zero(1, d);
    // zero head: the model starts out predicting zero noise
    ckpt.params.head_w = Eigen::MatrixXf::Zero(d, d);
    ckpt.params.head_b = Eigen::MatrixXf::Zero(1, d);
    return ckpt;
}

std::vector<NamedParam> Checkpoint::trainable() {
    std::vector<NamedParam> out;
    for (size_t i = 0; i < params.blocks.size(); ++i) {
        auto& blk = params.blocks[i];
        const std::string p = "block" + std::to_string(i + 1) + ".";
        out.push_back({p + "ln1_g", &blk.ln1_g});
        out.push_back({p + "ln1_b", &blk.ln1_b});
        out.push_back({p + "sa.w_q", &blk.sa.w_q});
        out.push_back({p + "sa.w_k", &blk.sa.w_k});
        out.push_back({p + "sa.w_v", &blk.sa.w_v});
        out.push_back({p + "ln2_g", &blk.ln2_g});
        out.push_back({p + "ln2_b", &blk.ln2_b});
        out.push_back({p + "ca.w_q", &blk.ca.w_q});
        out.push_back({p + "ca.w_k", &blk.ca.w_k});
        out.push_back({p + "ca.w_v", &blk.ca.w_v});
        out.push_back({p + "ln3_g", &blk.ln3_g});
        out.push_back({p + "ln3_b", &blk.ln3_b});
        out.push_back({p + "ff.w1", &blk.ff.w1});
        out.push_back({p + "ff.b1", &blk.ff.b1});
        out.push_back({p + "ff.w2", &blk.ff.w2});
        out.push_back({p + "ff.b2", &blk.ff.b2});
    }
    out.push_back({"pos_embed", &params.pos_embed});
    out.push_back({"lnf_g", &params.lnf_g});
    out.push_back({"lnf_b", &params.lnf_b});
    out.push_back({"head_w", &params.head_w});
    out.push_back({"head_b", &params.head_b});
    out.push_back({"vocab.table", &vocab.table()});
    out.push_back({"vocab.null", &vocab.null_embedding()});
    return out;
}

uint64_t Checkpoint::model_hash() const {
    io::Writer w;
    auto& self = const_cast<Checkpoint&>(*this);
    for (const auto& p : self.trainable()) w.matrix(*p.value);
    return fnv1a(w.buffer().data(), w.buffer().size());
}

Eigen::MatrixXf timestep_embedding(int t, int dim) {
    Eigen::MatrixXf pe(1, dim);
    const int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) /
                                     static_cast<double>(half));
        pe(0, i) = static_cast<float>(std::sin(t * freq));
        pe(0, half + i) = static_cast<float>(std::cos(t * freq));
    }
    if (dim % 2 == 1) pe(0, dim - 1) = 0.0f;
    return pe;
}

// ---------------------------------------------------------------------------
// layernorm + gelu

namespace {

constexpr float kLnEps = 1e-5f;

Eigen::MatrixXf layernorm(const Eigen::MatrixXf& x, const Eigen::MatrixXf& gamma,
                          const Eigen::MatrixXf& beta, LayerNormCache* cache) {
    const Eigen::VectorXf mu = x.rowwise().mean();
    Eigen::MatrixXf xhat = x.colwise() - mu;
    const Eigen::VectorXf inv_std =
        (xhat.array().square().rowwise().mean() + kLnEps).rsqrt();
    xhat.array().colwise() *= inv_std.array();
    Eigen::MatrixXf y =
        (xhat.array().rowwise() * gamma.row(0).array()).rowwise() + beta.row(0).array();
    if (cache != nullptr) {
        cache->normalized = std::move(xhat);
        cache->inv_std = inv_std;
    }
    return y;
}

// dy -> dx given the cache; accumulates dgamma/dbeta
Eigen::MatrixXf layernorm_backward(const Eigen::MatrixXf& dy, const LayerNormCache& cache,
                                   const Eigen::MatrixXf& gamma, Eigen::MatrixXf& dgamma,
                                   Eigen::MatrixXf& dbeta) {
    const Eigen::MatrixXf dxhat = dy.array().rowwise() * gamma.row(0).array();
    const Eigen::VectorXf m1 = dxhat.rowwise().mean();
    const Eigen::VectorXf m2 =
        (dxhat.array() * cache.normalized.array()).rowwise().mean();
    Eigen::MatrixXf dx =
        (dxhat.colwise() - m1).array() - cache.normalized.array().colwise() * m2.array();
    dx.array().colwise() *= cache.inv_std.array();
    dgamma += (dy.array() * cache.normalized.array()).colwise().sum().matrix();
    dbeta += dy.colwise().sum();
    return dx;
}

constexpr float kGeluScale = 0.7978845608028654f;  // sqrt(2/pi)
constexpr float kGeluCubic = 0.044715f;

Eigen::MatrixXf gelu(const Eigen::MatrixXf& u) {
    const auto a = (kGeluScale * (u.array() + kGeluCubic * u.array().cube())).tanh();
    return 0.5f * u.array() * (1.0f + a);
}

Eigen::MatrixXf gelu_grad(const Eigen::MatrixXf& u) {
    const auto arr = u.array();
    const auto a = (kGeluScale * (arr + kGeluCubic * arr.cube())).tanh();
    const auto sech2 = 1.0f - a.square();
    return 0.5f * (1.0f + a) +
           0.5f * arr * sech2 * kGeluScale * (1.0f + 3.0f * kGeluCubic * arr.square());
}

}  // namespace

// ---------------------------------------------------------------------------
// forward

Eigen::MatrixXf predict_noise(const Checkpoint& ckpt, const Eigen::MatrixXf& z, int t,
                              const PromptEmbedding& cond, const HookSet* hooks,
                              ForwardCache* cache) {
    const DenoiserConfig& cfg = ckpt.config;
    require(t >= 0 && t < cfg.total_timesteps, ErrorCode::out_of_range,
            "predict_noise: t=" + std::to_string(t) + " outside [0," +
                std::to_string(cfg.total_timesteps) + ")");
    require(z.rows() == cfg.tokens && z.cols() == cfg.token_dim, ErrorCode::mismatch,
            "predict_noise: latent shape does not match config");
    require(z.allFinite(), ErrorCode::numeric_error, "predict_noise: non-finite latent");
    require(cond.rows.cols() == cfg.tau_dim, ErrorCode::mismatch,
            "predict_noise: conditioning dim mismatch");

    Eigen::MatrixXf x = z + ckpt.params.pos_embed;
    x.rowwise() += timestep_embedding(t, cfg.token_dim).row(0);

    if (cache != nullptr) {
        cache->tokens_in = x;
        cache->blocks.assign(static_cast<size_t>(cfg.layers), BlockCache{});
        cache->cond_rows = cond.rows;
        cache->cond_ids = cond.token_ids;
    }

    for (int l = 0; l < cfg.layers; ++l) {
        const BlockParams& blk = ckpt.params.blocks[static_cast<size_t>(l)];
        BlockCache* bc = cache != nullptr ? &cache->blocks[static_cast<size_t>(l)] : nullptr;
        const int layer_index = l + 1;
        if (bc != nullptr) bc->x_in = x;

        Eigen::MatrixXf h = layernorm(x, blk.ln1_g, blk.ln1_b, bc ? &bc->ln1 : nullptr);
        std::optional<SaOverride> ovr;
        if (hooks != nullptr) ovr = hooks->query_override(layer_index, t);
        AttentionTrace sa = self_attention(h, blk.sa, ovr ? &*ovr : nullptr, hooks, layer_index, t);
        x += sa.output;
        if (bc != nullptr) {
            bc->ln1_out = std::move(h);
            bc->sa = std::move(sa);
        }

        Eigen::MatrixXf h2 = layernorm(x, blk.ln2_g, blk.ln2_b, bc ? &bc->ln2 : nullptr);
        AttentionTrace ca = cross_attention(h2, cond.rows, blk.ca, hooks, layer_index, t);
        x += ca.output;
        if (bc != nullptr) {
            bc->ln2_out = std::move(h2);
            bc->ca = std::move(ca);
        }

        Eigen::MatrixXf h3 = layernorm(x, blk.ln3_g, blk.ln3_b, bc ? &bc->ln3 : nullptr);
        Eigen::MatrixXf pre = (h3 * blk.ff.w1.transpose()).rowwise() + blk.ff.b1.row(0);
        Eigen::MatrixXf act = gelu(pre);
        x.noalias() += act * blk.ff.w2.transpose();
        x.rowwise() += blk.ff.b2.row(0);
        if (bc != nullptr) {
            bc->ln3_out = std::move(h3);
            bc->ff_pre = std::move(pre);
            bc->ff_act = std::move(act);
        }
    }

    Eigen::MatrixXf xf = layernorm(x, ckpt.params.lnf_g, ckpt.params.lnf_b,
                                   cache ? &cache->lnf : nullptr);
    Eigen::MatrixXf eps = (xf * ckpt.params.head_w.transpose()).rowwise() +
                          ckpt.params.head_b.row(0);
    if (cache != nullptr) {
        cache->lnf_in = std::move(x);
        cache->lnf_out = std::move(xf);
    }
    return eps;
}

// ---------------------------------------------------------------------------
// backward

GradBuffer GradBuffer::zeros_like(Checkpoint& ckpt) {
    GradBuffer g;
    for (const auto& p : ckpt.trainable()) {
        g.grads.emplace_back(Eigen::MatrixXf::Zero(p.value->rows(), p.value->cols()));
    }
    return g;
}

void GradBuffer::reset() {
    for (auto& g : grads) g.setZero();
}

namespace {

// Index bookkeeping matching Checkpoint::trainable(): 16 entries per block,
// then 5 globals, then the two vocabulary tables.
struct GradView {
    GradBuffer& buf;
    int per_block = 16;
    int layers;

    Eigen::MatrixXf& block(int l, int slot) {
        return buf.grads[static_cast<size_t>(l * per_block + slot)];
    }
    Eigen::MatrixXf& global(int slot) {
        return buf.grads[static_cast<size_t>(layers * per_block + slot)];
    }
};

// backward through one attention evaluation (no override case).
// Returns d_phi; accumulates dW and (for CA) d_tau.
Eigen::MatrixXf attention_backward(const AttentionTrace& trace, const Eigen::MatrixXf& phi,
                                   const Eigen::MatrixXf* tau, const AttentionParams& params,
                                   const Eigen::MatrixXf& d_out, Eigen::MatrixXf& dw_q,
                                   Eigen::MatrixXf& dw_k, Eigen::MatrixXf& dw_v,
                                   Eigen::MatrixXf* d_tau) {
    const int hd = params.head_dim();
    const Eigen::Index n = trace.q.rows();
    const Eigen::Index m = trace.k.rows();

    Eigen::MatrixXf dq = Eigen::MatrixXf::Zero(n, params.attn_dim());
    Eigen::MatrixXf dk = Eigen::MatrixXf::Zero(m, params.attn_dim());
    Eigen::MatrixXf dv = Eigen::MatrixXf::Zero(m, params.attn_dim());
    const float scale = 1.0f / std::sqrt(static_cast<float>(hd));

    for (int h = 0; h < params.heads; ++h) {
        const auto& map = trace.map.head_maps[static_cast<size_t>(h)];
        const auto vh = trace.v.middleCols(h * hd, hd);
        const auto dout_h = d_out.middleCols(h * hd, hd);

        Eigen::MatrixXf dmap = dout_h * vh.transpose();             // n x m
        dv.middleCols(h * hd, hd).noalias() = map.transpose() * dout_h;

        // softmax backward
        const Eigen::VectorXf row_dot = (map.array() * dmap.array()).rowwise().sum();
        const Eigen::MatrixXf dscore =
            map.array() * (dmap.colwise() - row_dot).array();
        dq.middleCols(h * hd, hd).noalias() = dscore * trace.k.middleCols(h * hd, hd) * scale;
        dk.middleCols(h * hd, hd).noalias() =
            dscore.transpose() * trace.q.middleCols(h * hd, hd) * scale;
    }

    dw_q.noalias() += dq.transpose() * phi;
    Eigen::MatrixXf d_phi = dq * params.w_q;
    if (tau == nullptr) {
        dw_k.noalias() += dk.transpose() * phi;
        dw_v.noalias() += dv.transpose() * phi;
        d_phi.noalias() += dk * params.w_k;
        d_phi.noalias() += dv * params.w_v;
    } else {
        dw_k.noalias() += dk.transpose() * (*tau);
        dw_v.noalias() += dv.transpose() * (*tau);
        d_tau->noalias() += dk * params.w_k;
        d_tau->noalias() += dv * params.w_v;
    }
    return d_phi;
}

}  // namespace

void backprop(Checkpoint& ckpt, const ForwardCache& cache, const Eigen::MatrixXf& d_eps,
              GradBuffer& grads) {
    const DenoiserConfig& cfg = ckpt.config;
    GradView gv{grads, 16, cfg.layers};
    const int g_pos = 0, g_lnf_g = 1, g_lnf_b = 2, g_head_w = 3, g_head_b = 4;
    Eigen::MatrixXf& d_vocab_table = grads.grads[static_cast<size_t>(cfg.layers * 16 + 5)];
    Eigen::MatrixXf& d_vocab_null = grads.grads[static_cast<size_t>(cfg.layers * 16 + 6)];

    // head
    gv.global(g_head_w).noalias() += d_eps.transpose() * cache.lnf_out;
    gv.global(g_head_b) += d_eps.colwise().sum();
    Eigen::MatrixXf dx = layernorm_backward(d_eps * ckpt.params.head_w, cache.lnf,
                                            ckpt.params.lnf_g, gv.global(g_lnf_g),
                                            gv.global(g_lnf_b));

    Eigen::MatrixXf d_tau = Eigen::MatrixXf::Zero(cache.cond_rows.rows(), cache.cond_rows.cols());

    for (int l = cfg.layers - 1; l >= 0; --l) {
        const BlockParams& blk = ckpt.params.blocks[static_cast<size_t>(l)];
        const BlockCache& bc = cache.blocks[static_cast<size_t>(l)];
        const int s_ln1_g = 0, s_ln1_b = 1, s_sa_q = 2, s_sa_k = 3, s_sa_v = 4;
        const int s_ln2_g = 5, s_ln2_b = 6, s_ca_q = 7, s_ca_k = 8, s_ca_v = 9;
        const int s_ln3_g = 10, s_ln3_b = 11, s_ff_w1 = 12, s_ff_b1 = 13, s_ff_w2 = 14,
                  s_ff_b2 = 15;

        // feed-forward stage: x_out = x_mid2 + gelu(ln3(x_mid2) W1^T + b1) W2^T
        {
            const Eigen::MatrixXf& d_ff_out = dx;
            gv.block(l, s_ff_w2).noalias() += d_ff_out.transpose() * bc.ff_act;
            gv.block(l, s_ff_b2) += d_ff_out.colwise().sum();
            Eigen::MatrixXf d_act = d_ff_out * blk.ff.w2;
            Eigen::MatrixXf d_pre = d_act.array() * gelu_grad(bc.ff_pre).array();
            gv.block(l, s_ff_w1).noalias() += d_pre.transpose() * bc.ln3_out;
            gv.block(l, s_ff_b1) += d_pre.colwise().sum();
            Eigen::MatrixXf d_h3 = d_pre * blk.ff.w1;
            dx += layernorm_backward(d_h3, bc.ln3, blk.ln3_g, gv.block(l, s_ln3_g),
                                     gv.block(l, s_ln3_b));
        }

        // cross-attention stage
        {
            Eigen::MatrixXf d_h2 = attention_backward(
                bc.ca, bc.ln2_out, &cache.cond_rows, blk.ca, dx, gv.block(l, s_ca_q),
                gv.block(l, s_ca_k), gv.block(l, s_ca_v), &d_tau);
            dx += layernorm_backward(d_h2, bc.ln2, blk.ln2_g, gv.block(l, s_ln2_g),
                                     gv.block(l, s_ln2_b));
        }

        // self-attention stage
        {
            Eigen::MatrixXf d_h1 =
                attention_backward(bc.sa, bc.ln1_out, nullptr, blk.sa, dx, gv.block(l, s_sa_q),
                                   gv.block(l, s_sa_k), gv.block(l, s_sa_v), nullptr);
            dx += layernorm_backward(d_h1, bc.ln1, blk.ln1_g, gv.block(l, s_ln1_g),
                                     gv.block(l, s_ln1_b));
        }
    }

    // input stage: tokens_in = z + pos_embed + time (broadcast)
    gv.global(g_pos) += dx;

    // scatter conditioning gradients back into the embedding tables
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(cache.cond_ids.size()); ++i) {
        const int id = cache.cond_ids[static_cast<size_t>(i)];
        if (id < 0) {
            d_vocab_null.row(0) += d_tau.row(i);
        } else {
            d_vocab_table.row(id) += d_tau.row(i);
        }
    }
}

// ---------------------------------------------------------------------------
// training

double training_loss(Checkpoint& ckpt, const std::vector<TrainSample>& batch, GradBuffer* grads) {
    require(!batch.empty(), ErrorCode::invalid_argument, "training_loss: empty batch");
    const NoiseSchedule schedule =
        NoiseSchedule::linear(ckpt.config.total_timesteps, ckpt.config.beta_lo, ckpt.config.beta_hi);
    double loss = 0.0;
    const double denom = static_cast<double>(batch.size());
    for (const auto& sample : batch) {
        const float ab = schedule.alpha_bar(sample.t);
        const Eigen::MatrixXf z_t =
            std::sqrt(ab) * sample.z0 + std::sqrt(1.0f - ab) * sample.noise;
        const PromptEmbedding cond = ckpt.vocab.embed_ids(sample.cond_ids, sample.cond_words);

        ForwardCache cache;
        const Eigen::MatrixXf eps_hat =
            predict_noise(ckpt, z_t, sample.t, cond, nullptr, grads ? &cache : nullptr);
        const Eigen::MatrixXf diff = eps_hat - sample.noise;
        const double sample_loss = static_cast<double>(diff.array().square().mean());
        loss += sample_loss / denom;
        if (grads != nullptr) {
            const float scale =
                2.0f / (static_cast<float>(diff.size()) * static_cast<float>(denom));
            backprop(ckpt, cache, scale * diff, *grads);
        }
    }
    return loss;
}

Checkpoint train(const std::vector<ManifestEntry>& manifest, const std::filesystem::path& clip_dir,
                 const DenoiserConfig& config, const TrainOptions& options) {
    require(!manifest.empty(), ErrorCode::invalid_argument, "train: empty dataset");
    require(options.steps >= 1, ErrorCode::invalid_argument, "train: steps must be >= 1");
    config.validate();

    // dataset statistics drive the codec normalization
    std::vector<MelSpectrogram> clips;
    clips.reserve(manifest.size());
    double sum = 0.0, sum_sq = 0.0;
    size_t count = 0;
    for (const auto& e : manifest) {
        clips.push_back(load_mspc(clip_dir / e.path));
        const auto& d = clips.back().data;
        sum += static_cast<double>(d.sum());
        sum_sq += static_cast<double>(d.array().square().sum());
        count += static_cast<size_t>(d.size());
    }
    const float mean = static_cast<float>(sum / static_cast<double>(count));
    const float var = static_cast<float>(sum_sq / static_cast<double>(count)) - mean * mean;
    const float scale = std::max(1e-3f, std::sqrt(std::max(var, 0.0f)));

    const int patch = 8;
    LatentCodec codec(patch, patch, mean, scale, options.seed);
    require(codec.token_count(clips[0].frames(), clips[0].bins()) == config.tokens &&
                codec.dim() == config.token_dim,
            ErrorCode::mismatch, "train: codec geometry does not match config");

    // vocabulary: every word appearing in any prompt
    std::vector<std::string> words;
    for (const auto& e : manifest) {
        std::istringstream in(e.prompt);
        std::string w;
        while (in >> w) {
            if (std::find(words.begin(), words.end(), w) == words.end()) words.push_back(w);
        }
    }
    std::sort(words.begin(), words.end());

    Checkpoint ckpt = init_checkpoint(config, words, codec, options.seed);
    ckpt.training_recipe = options.to_json();

    std::vector<Eigen::MatrixXf> latents;
    std::vector<std::vector<int>> prompt_ids;
    std::vector<std::vector<std::string>> prompt_words;
    for (size_t i = 0; i < manifest.size(); ++i) {
        latents.push_back(codec.encode(clips[i]).tokens);
        prompt_ids.push_back(ckpt.vocab.tokenize(manifest[i].prompt));
        std::vector<std::string> ws;
        std::istringstream in(manifest[i].prompt);
        std::string w;
        while (in >> w) ws.push_back(w);
        prompt_words.push_back(std::move(ws));
    }

    GradBuffer grads = GradBuffer::zeros_like(ckpt);
    GradBuffer m = GradBuffer::zeros_like(ckpt);
    GradBuffer v = GradBuffer::zeros_like(ckpt);
    auto named = ckpt.trainable();

    Rng rng(mix_seed(options.seed, 0x7472696e));
    ckpt.loss_curve.reserve(static_cast<size_t>(options.steps));

    for (int step = 0; step < options.steps; ++step) {
        std::vector<TrainSample> batch;
        batch.reserve(static_cast<size_t>(options.batch_size));
        for (int b = 0; b < options.batch_size; ++b) {
            TrainSample s;
            const auto idx =
                static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(manifest.size()) - 1));
            s.z0 = latents[idx];
            s.t = static_cast<int>(rng.uniform_int(0, config.total_timesteps - 1));
            s.noise.resize(config.tokens, config.token_dim);
            for (int r = 0; r < config.tokens; ++r)
                for (int c = 0; c < config.token_dim; ++c)
                    s.noise(r, c) = static_cast<float>(rng.normal());
            if (rng.bernoulli(options.cond_dropout)) {
                s.cond_ids = {-1};
                s.cond_words = {"<null>"};
            } else {
                s.cond_ids = prompt_ids[idx];
                s.cond_words = prompt_words[idx];
            }
            batch.push_back(std::move(s));
        }

        grads.reset();
        const double loss = training_loss(ckpt, batch, &grads);
        if (!std::isfinite(loss)) {
            fail(ErrorCode::numeric_error,
                 "train: loss diverged (non-finite) at step " + std::to_string(step) +
                     "; last finite loss " +
                     (ckpt.loss_curve.empty() ? std::string("n/a")
                                              : std::to_string(ckpt.loss_curve.back())));
        }
        ckpt.loss_curve.push_back(static_cast<float>(loss));

        const float warm = options.warmup_steps > 0
                               ? std::min(1.0f, static_cast<float>(step + 1) /
                                                    static_cast<float>(options.warmup_steps))
                               : 1.0f;
        const float lr = options.learning_rate * warm;
        const float b1 = options.adam_beta1;
        const float b2 = options.adam_beta2;
        const float bc1 = 1.0f - std::pow(b1, static_cast<float>(step + 1));
        const float bc2 = 1.0f - std::pow(b2, static_cast<float>(step + 1));
        for (size_t p = 0; p < named.size(); ++p) {
            auto& g = grads.grads[p];
            auto& mp = m.grads[p];
            auto& vp = v.grads[p];
            mp = b1 * mp + (1.0f - b1) * g;
            vp = b2 * vp + (1.0f - b2) * g.cwiseProduct(g);
            const auto m_hat = mp.array() / bc1;
            const auto v_hat = vp.array() / bc2;
            named[p].value->array() -= lr * m_hat / (v_hat.sqrt() + options.adam_eps);
        }
    }

    ckpt.training_seed = options.seed;
    ckpt.trained_steps = options.steps;
    return ckpt;
}

// ---------------------------------------------------------------------------
// checkpoint container

namespace {
constexpr uint32_t kCheckpointVersion = 1;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    auto& self = const_cast<Checkpoint&>(ckpt);
    const auto named = self.trainable();

    json param_manifest = json::array();
    for (const auto& p : named) {
        param_manifest.push_back({{"name", p.name},
                                  {"rows", p.value->rows()},
                                  {"cols", p.value->cols()}});
    }
    json header = {
        {"config", json::parse(ckpt.config.to_json())},
        {"config_hash", ckpt.config.hash()},
        {"vocab_words", ckpt.vocab.words()},
        {"training_seed", ckpt.training_seed},
        {"trained_steps", ckpt.trained_steps},
        {"training_recipe", ckpt.training_recipe},
        {"loss_curve_len", ckpt.loss_curve.size()},
        {"codec_header", ckpt.codec.header_json()},
        {"params", param_manifest},
    };
    const std::string htext = header.dump();

    io::Writer w;
    w.tag("MLDM");
    w.u32(kCheckpointVersion);
    w.u32(static_cast<uint32_t>(htext.size()));
    w.bytes(htext.data(), htext.size());
    for (float v : ckpt.loss_curve) w.f32(v);
    w.matrix(ckpt.codec.projection());
    for (const auto& p : named) w.matrix(*p.value);
    io::write_file_atomic(path, w.buffer());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    io::Reader r(io::read_file(path));
    r.expect_tag("MLDM", path.string());
    const uint32_t version = r.u32();
    require(version == kCheckpointVersion, ErrorCode::format_error,
            "checkpoint version " + std::to_string(version) + " unsupported (expected " +
                std::to_string(kCheckpointVersion) + ")");
    const uint32_t hlen = r.u32();
    const json header = json::parse(r.str(hlen));

    const DenoiserConfig config = DenoiserConfig::from_json(header.at("config").dump());
    require(config.hash() == header.at("config_hash").get<uint64_t>(), ErrorCode::mismatch,
            "checkpoint config hash mismatch");

    const size_t curve_len = header.at("loss_curve_len").get<size_t>();
    std::vector<float> curve(curve_len);
    for (size_t i = 0; i < curve_len; ++i) curve[i] = r.f32();

    const std::string codec_header = header.at("codec_header").get<std::string>();
    const int pr = json::parse(codec_header).at("patch_rows").get<int>();
    const int pc = json::parse(codec_header).at("patch_cols").get<int>();
    const Eigen::MatrixXf projection = r.matrix(pr * pc, pr * pc);
    const LatentCodec codec = LatentCodec::from_header_and_blob(codec_header, projection);

    Checkpoint ckpt = init_checkpoint(config, header.at("vocab_words").get<std::vector<std::string>>(),
                                      codec, header.at("training_seed").get<uint64_t>());
    ckpt.trained_steps = header.at("trained_steps").get<int>();
    ckpt.training_recipe = header.at("training_recipe").get<std::string>();
    ckpt.loss_curve = std::move(curve);

    const auto named = ckpt.trainable();
    const json& param_manifest = header.at("params");
    require(param_manifest.size() == named.size(), ErrorCode::format_error,
            "checkpoint parameter manifest size mismatch");
    for (size_t i = 0; i < named.size(); ++i) {
        const json& entry = param_manifest[i];
        require(entry.at("name").get<std::string>() == named[i].name, ErrorCode::format_error,
                "checkpoint parameter order mismatch at '" + named[i].name + "'");
        const auto rows = entry.at("rows").get<Eigen::Index>();
        const auto cols = entry.at("cols").get<Eigen::Index>();
        require(rows == named[i].value->rows() && cols == named[i].value->cols(),
                ErrorCode::format_error, "checkpoint parameter shape mismatch at '" +
                                             named[i].name + "'");
        *named[i].value = r.matrix(static_cast<int>(rows), static_cast<int>(cols));
    }
    return ckpt;
}

}  // namespace melodia
