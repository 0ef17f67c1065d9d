#include "melodia/sampler.hpp"

#include <cmath>

namespace melodia {

NoiseSchedule NoiseSchedule::linear(int total_timesteps, float beta_lo, float beta_hi) {
    require(total_timesteps >= 2, ErrorCode::invalid_argument, "schedule: T must be >= 2");
    require(beta_lo > 0.0f && beta_hi > beta_lo && beta_hi < 1.0f, ErrorCode::invalid_argument,
            "schedule: need 0 < beta_lo < beta_hi < 1");
    NoiseSchedule s;
    s.betas_.resize(static_cast<size_t>(total_timesteps));
    s.alpha_bars_.resize(static_cast<size_t>(total_timesteps) + 1);
    s.alpha_bars_[0] = 1.0;
    double acc = 1.0;
    for (int t = 1; t <= total_timesteps; ++t) {
        const float beta = beta_lo + (beta_hi - beta_lo) * static_cast<float>(t - 1) /
                                         static_cast<float>(total_timesteps - 1);
        s.betas_[static_cast<size_t>(t - 1)] = beta;
        acc *= 1.0 - static_cast<double>(beta);
        s.alpha_bars_[static_cast<size_t>(t)] = acc;
    }
    return s;
}

float NoiseSchedule::beta(int t) const {
    require(t >= 1 && t <= total_timesteps(), ErrorCode::out_of_range, "beta: t out of range");
    return betas_[static_cast<size_t>(t - 1)];
}

float NoiseSchedule::alpha_bar(int t) const {
    return static_cast<float>(alpha_bar_d(t));
}

double NoiseSchedule::alpha_bar_d(int t) const {
    require(t >= 0 && t <= total_timesteps(), ErrorCode::out_of_range,
            "alpha_bar: t out of range");
    return alpha_bars_[static_cast<size_t>(t)];
}

bool TimestepSchedule::contains(int t) const {
    for (int s : steps) {
        if (s == t) return true;
    }
    return false;
}

int TimestepSchedule::round_down(int t_start) const {
    int best = 0;
    for (int s : steps) {
        if (s <= t_start && s > best) best = s;
    }
    return best;
}

std::vector<int> TimestepSchedule::steps_up_to(int t_start) const {
    std::vector<int> out;
    for (auto it = steps.rbegin(); it != steps.rend(); ++it) {
        if (*it <= t_start) out.push_back(*it);
    }
    return out;
}

ScheduleBundle build_schedule(int total_timesteps, int inference_steps, float beta_lo,
                              float beta_hi) {
    require(inference_steps >= 1 && inference_steps <= total_timesteps,
            ErrorCode::invalid_argument,
            "build_schedule: need 1 <= S <= T, got S=" + std::to_string(inference_steps));
    ScheduleBundle b;
    b.noise = NoiseSchedule::linear(total_timesteps, beta_lo, beta_hi);
    b.timesteps.total_timesteps = total_timesteps;
    // uniform stride, descending, ending at 0
    for (int i = 1; i <= inference_steps; ++i) {
        const int t = static_cast<int>((static_cast<int64_t>(inference_steps - i) *
                                        total_timesteps) /
                                       inference_steps);
        b.timesteps.steps.push_back(t);
    }
    uint64_t h = fnv1a_u64(static_cast<uint64_t>(total_timesteps));
    h = fnv1a_u64(static_cast<uint64_t>(inference_steps), h);
    uint32_t lo_bits = 0, hi_bits = 0;
    std::memcpy(&lo_bits, &beta_lo, 4);
    std::memcpy(&hi_bits, &beta_hi, 4);
    h = fnv1a_u64((static_cast<uint64_t>(hi_bits) << 32) | lo_bits, h);
    for (int t : b.timesteps.steps) h = fnv1a_u64(static_cast<uint64_t>(t), h);
    b.timesteps.schedule_hash = h;
    return b;
}

ScheduleBundle build_schedule_for(const Checkpoint& ckpt, int inference_steps) {
    return build_schedule(ckpt.config.total_timesteps, inference_steps, ckpt.config.beta_lo,
                          ckpt.config.beta_hi);
}

namespace {

Eigen::MatrixXd ddim_step(const Eigen::MatrixXd& z, const Eigen::MatrixXd& eps_hat, int t_from,
                          int t_to, const NoiseSchedule& schedule) {
    require(z.rows() == eps_hat.rows() && z.cols() == eps_hat.cols(), ErrorCode::mismatch,
            "ddim step: shape mismatch");
    require(z.allFinite() && eps_hat.allFinite(), ErrorCode::numeric_error,
            "ddim step: non-finite inputs");
    const double ab_from = schedule.alpha_bar_d(t_from);
    const double ab_to = schedule.alpha_bar_d(t_to);
    // z_to = sqrt(ab_to) * x0_hat + sqrt(1 - ab_to) * eps_hat
    const Eigen::MatrixXd x0_hat = (z - std::sqrt(1.0 - ab_from) * eps_hat) / std::sqrt(ab_from);
    return std::sqrt(ab_to) * x0_hat + std::sqrt(1.0 - ab_to) * eps_hat;
}

}  // namespace

Eigen::MatrixXd ddim_reverse_step(const Eigen::MatrixXd& z_t, const Eigen::MatrixXd& eps_hat,
                                  int t, int t_prev, const NoiseSchedule& schedule) {
    require(t_prev < t, ErrorCode::invalid_argument, "reverse step requires t_prev < t");
    return ddim_step(z_t, eps_hat, t, t_prev, schedule);
}

Eigen::MatrixXf ddim_reverse_step(const Eigen::MatrixXf& z_t, const Eigen::MatrixXf& eps_hat,
                                  int t, int t_prev, const NoiseSchedule& schedule) {
    return ddim_reverse_step(Eigen::MatrixXd(z_t.cast<double>()),
                             Eigen::MatrixXd(eps_hat.cast<double>()), t, t_prev, schedule)
        .cast<float>();
}

Eigen::MatrixXd ddim_inversion_step(const Eigen::MatrixXd& z_t, const Eigen::MatrixXd& eps_hat,
                                    int t, int t_next, const NoiseSchedule& schedule) {
    require(t_next >= t, ErrorCode::invalid_argument, "inversion step requires t_next >= t");
    if (t_next == t) return z_t;
    return ddim_step(z_t, eps_hat, t, t_next, schedule);
}

Eigen::MatrixXf ddim_inversion_step(const Eigen::MatrixXf& z_t, const Eigen::MatrixXf& eps_hat,
                                    int t, int t_next, const NoiseSchedule& schedule) {
    return ddim_inversion_step(Eigen::MatrixXd(z_t.cast<double>()),
                               Eigen::MatrixXd(eps_hat.cast<double>()), t, t_next, schedule)
        .cast<float>();
}

Eigen::MatrixXf gaussian_latent(int rows, int cols, uint64_t seed) {
    Rng rng(mix_seed(seed, 0x7a6c6174));
    Eigen::MatrixXf z(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) z(r, c) = static_cast<float>(rng.normal());
    return z;
}

namespace {

void require_trained(const Checkpoint& ckpt) {
    require(ckpt.trained_steps > 0, ErrorCode::invalid_argument,
            "checkpoint has no recorded training steps");
}

// noise estimate with classifier-free guidance; hooks: capture follows the
// conditional branch, overrides apply to whichever branches run
Eigen::MatrixXf guided_eps(const Checkpoint& ckpt, const Eigen::MatrixXf& z, int t,
                           const PromptEmbedding& cond, const PromptEmbedding& uncond,
                           float cfg_w, const HookSet* hooks) {
    const int t_eval = std::min(t, ckpt.config.total_timesteps - 1);
    if (cfg_w == 0.0f) return predict_noise(ckpt, z, t_eval, uncond, hooks);
    if (cfg_w == 1.0f) return predict_noise(ckpt, z, t_eval, cond, hooks);
    const Eigen::MatrixXf eps_cond = predict_noise(ckpt, z, t_eval, cond, hooks);
    // capture sinks must not fire twice per step: the unconditional branch
    // only sees override suppliers
    HookSet overrides_only;
    const HookSet* uncond_hooks = nullptr;
    if (hooks != nullptr) {
        for (int layer = 1; layer <= ckpt.config.layers; ++layer) {
            if (hooks->has_override(layer)) {
                overrides_only.set_override(
                    layer, [hooks](int l, int ts) { return *hooks->query_override(l, ts); });
            }
        }
        if (!overrides_only.empty()) uncond_hooks = &overrides_only;
    }
    const Eigen::MatrixXf eps_uncond = predict_noise(ckpt, z, t_eval, uncond, uncond_hooks);
    return cfg_combine(eps_cond, eps_uncond, cfg_w);
}

}  // namespace

Latent sample(const Checkpoint& ckpt, const std::string& prompt, float cfg_w,
              const ScheduleBundle& schedule, uint64_t seed, const HookSet* hooks) {
    require_trained(ckpt);
    require(cfg_w >= 0.0f, ErrorCode::invalid_argument, "cfg_w must be >= 0");
    const PromptEmbedding cond = ckpt.vocab.embed(prompt);
    const PromptEmbedding uncond = ckpt.vocab.null_prompt();

    const int total = ckpt.config.total_timesteps;
    Eigen::MatrixXf z = gaussian_latent(ckpt.config.tokens, ckpt.config.token_dim, seed);

    int t_cur = total;
    for (int t_next : schedule.timesteps.steps) {
        const Eigen::MatrixXf eps = guided_eps(ckpt, z, t_cur, cond, uncond, cfg_w, hooks);
        z = ddim_reverse_step(z, eps, t_cur, t_next, schedule.noise);
        t_cur = t_next;
    }

    Latent out;
    out.tokens = std::move(z);
    out.codec_id = ckpt.codec.id();
    return out;
}

InversionResult invert_partial(const Checkpoint& ckpt, const Latent& z0, int t_start,
                               const ScheduleBundle& schedule, const HookSet* hooks) {
    require_trained(ckpt);
    require(t_start >= 0 && t_start <= ckpt.config.total_timesteps, ErrorCode::out_of_range,
            "t_start must lie in [0, T]");
    require(z0.codec_id == ckpt.codec.id(), ErrorCode::mismatch,
            "latent codec does not match checkpoint codec");

    InversionResult result;
    result.t_start_requested = t_start;
    result.t_start_effective = schedule.timesteps.round_down(t_start);
    result.z = z0;

    if (result.t_start_effective == 0) return result;  // nothing to do, empty capture

    const PromptEmbedding uncond = ckpt.vocab.null_prompt();
    const std::vector<int> ascent = schedule.timesteps.steps_up_to(result.t_start_effective);

    Eigen::MatrixXf z = z0.tokens;
    for (size_t i = 0; i + 1 < ascent.size(); ++i) {
        const int t = ascent[i];
        const int t_next = ascent[i + 1];
        const Eigen::MatrixXf eps = predict_noise(ckpt, z, t, uncond, hooks);
        z = ddim_inversion_step(z, eps, t, t_next, schedule.noise);
        result.visited_steps.push_back(t);
    }
    // capture-only evaluation at the arrival step so the edit pass has a
    // stored record for every step it revisits
    const int t_arrival = ascent.back();
    (void)predict_noise(ckpt, z, std::min(t_arrival, ckpt.config.total_timesteps - 1), uncond,
                        hooks);
    result.visited_steps.push_back(t_arrival);

    result.z.tokens = std::move(z);
    return result;
}

Latent reverse_from(const Checkpoint& ckpt, const Latent& z_start, int t_start_effective,
                    const std::string& prompt, float cfg_w, const ScheduleBundle& schedule,
                    const HookSet* hooks) {
    require_trained(ckpt);
    require(z_start.codec_id == ckpt.codec.id(), ErrorCode::mismatch,
            "latent codec does not match checkpoint codec");
    require(t_start_effective == 0 || schedule.timesteps.contains(t_start_effective),
            ErrorCode::mismatch, "t_start_effective must be a scheduled step");

    const PromptEmbedding cond = prompt.empty() ? ckpt.vocab.null_prompt() : ckpt.vocab.embed(prompt);
    const PromptEmbedding uncond = ckpt.vocab.null_prompt();

    const std::vector<int> descent = [&] {
        std::vector<int> up = schedule.timesteps.steps_up_to(t_start_effective);
        return std::vector<int>(up.rbegin(), up.rend());
    }();

    Eigen::MatrixXf z = z_start.tokens;
    for (size_t i = 0; i + 1 < descent.size(); ++i) {
        const int t = descent[i];
        const int t_prev = descent[i + 1];
        const Eigen::MatrixXf eps = guided_eps(ckpt, z, t, cond, uncond, cfg_w, hooks);
        z = ddim_reverse_step(z, eps, t, t_prev, schedule.noise);
    }

    Latent out;
    out.tokens = std::move(z);
    out.codec_id = ckpt.codec.id();
    return out;
}

}  // namespace melodia
