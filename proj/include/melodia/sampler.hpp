#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "melodia/codec.hpp"
#include "melodia/condition.hpp"
#include "melodia/denoiser.hpp"

namespace melodia {

// Linear-beta forward process. alpha_bar(0) == 1 exactly: the state at t = 0
// is the clean latent, states at t >= 1 carry noise.
class NoiseSchedule {
public:
    static NoiseSchedule linear(int total_timesteps, float beta_lo, float beta_hi);

    int total_timesteps() const { return static_cast<int>(betas_.size()); }
    float beta(int t) const;         // t in [1, T]
    float alpha_bar(int t) const;    // t in [0, T]
    double alpha_bar_d(int t) const;

private:
    std::vector<float> betas_;        // betas_[t-1] = beta_t
    std::vector<double> alpha_bars_;  // alpha_bars_[t] = prod_{s<=t} (1 - beta_s)
};

// S inference steps drawn descending from [0, T) with uniform stride;
// step_hash binds repositories to the exact trajectory grid.
struct TimestepSchedule {
    std::vector<int> steps;  // strictly decreasing, last entry 0
    int total_timesteps = 0;
    uint64_t schedule_hash = 0;

    int step_count() const { return static_cast<int>(steps.size()); }
    bool contains(int t) const;
    // largest scheduled step <= t_start (0 if t_start < all steps)
    int round_down(int t_start) const;
    // scheduled steps <= t_start, ascending
    std::vector<int> steps_up_to(int t_start) const;
};

struct ScheduleBundle {
    NoiseSchedule noise;
    TimestepSchedule timesteps;
};

ScheduleBundle build_schedule(int total_timesteps, int inference_steps, float beta_lo = 1e-4f,
                              float beta_hi = 2e-2f);
ScheduleBundle build_schedule_for(const Checkpoint& ckpt, int inference_steps);

// Deterministic DDIM update from t to t_prev < t with a frozen noise
// estimate. Arithmetic runs in double; the double overloads expose the exact
// algebra for verification.
Eigen::MatrixXf ddim_reverse_step(const Eigen::MatrixXf& z_t, const Eigen::MatrixXf& eps_hat,
                                  int t, int t_prev, const NoiseSchedule& schedule);
Eigen::MatrixXd ddim_reverse_step(const Eigen::MatrixXd& z_t, const Eigen::MatrixXd& eps_hat,
                                  int t, int t_prev, const NoiseSchedule& schedule);

// Mirror update toward higher noise (t_next > t), same algebra.
Eigen::MatrixXf ddim_inversion_step(const Eigen::MatrixXf& z_t, const Eigen::MatrixXf& eps_hat,
                                    int t, int t_next, const NoiseSchedule& schedule);
Eigen::MatrixXd ddim_inversion_step(const Eigen::MatrixXd& z_t, const Eigen::MatrixXd& eps_hat,
                                    int t, int t_next, const NoiseSchedule& schedule);

// Full conditional generation from seeded Gaussian noise. The conditional
// branch carries any capture hooks; overrides apply to both branches.
Latent sample(const Checkpoint& ckpt, const std::string& prompt, float cfg_w,
              const ScheduleBundle& schedule, uint64_t seed, const HookSet* hooks = nullptr);

struct InversionResult {
    Latent z;                     // latent at the effective start step
    int t_start_requested = 0;
    int t_start_effective = 0;    // rounded down to the schedule grid
    std::vector<int> visited_steps;  // ascending, every step with captured SA
};

// Partial DDIM inversion of a clean latent up to t_start under the null
// embedding with no guidance. Hooks see SA/CA events at every visited step,
// including one capture-only evaluation at the arrival step.
InversionResult invert_partial(const Checkpoint& ckpt, const Latent& z0, int t_start,
                               const ScheduleBundle& schedule, const HookSet* hooks = nullptr);

// Reverse (denoising) pass from an intermediate latent at t_start_effective
// down to 0 under `prompt` with guidance cfg_w. Used by the editor; hooks
// (and their overrides) are applied to both guidance branches.
Latent reverse_from(const Checkpoint& ckpt, const Latent& z_start, int t_start_effective,
                    const std::string& prompt, float cfg_w, const ScheduleBundle& schedule,
                    const HookSet* hooks = nullptr);

Eigen::MatrixXf gaussian_latent(int rows, int cols, uint64_t seed);

}  // namespace melodia
