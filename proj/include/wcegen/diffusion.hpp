#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <vector>

#include "wcegen/tensors.hpp"

namespace wce {

enum class ScheduleKind { Linear };

/// Discrete DDPM noise schedule. Timesteps are 1-based: t ∈ {1..T}.
class NoiseSchedule {
public:
    /// Custom schedule; betas must lie in [0, 1). `model_timesteps[i]` is the
    /// timestep fed to the denoiser at step i + 1 (identity when empty).
    static NoiseSchedule from_betas(std::vector<double> betas, std::vector<int> model_timesteps = {});

    int T() const { return static_cast<int>(beta_.size()); }
    double beta(int t) const { return beta_.at(index(t)); }
    double alpha(int t) const { return alpha_.at(index(t)); }
    double alpha_bar(int t) const { return alpha_bar_.at(index(t)); }
    int model_timestep(int t) const { return model_t_.at(index(t)); }

    const std::vector<double>& betas() const { return beta_; }
    const std::vector<double>& alpha_bars() const { return alpha_bar_; }

    /// Evenly strided sub-schedule of `steps` timesteps with betas recomputed
    /// from the kept alpha_bar values, so ancestral sampling stays exact.
    NoiseSchedule respaced(int steps) const;

    /// alpha_bar per batch element, shaped [B,1,1,1].
    torch::Tensor alpha_bar_at(const torch::Tensor& t, const torch::TensorOptions& options) const;

    friend bool operator==(const NoiseSchedule&, const NoiseSchedule&) = default;

private:
    std::size_t index(int t) const;

    std::vector<double> beta_;
    std::vector<double> alpha_;
    std::vector<double> alpha_bar_;
    std::vector<int> model_t_;
};

/// Linear betas from beta_start to beta_end. Throws BadRange unless
/// T >= 1 and 0 < beta_start <= beta_end < 1.
NoiseSchedule make_schedule(int T, double beta_start, double beta_end,
                            ScheduleKind kind = ScheduleKind::Linear);

/// ε-prediction network: (z_t, t as int64 [B], masks) -> ε̂ shaped like z_t.
using EpsModel = std::function<torch::Tensor(const torch::Tensor&, const torch::Tensor&, const CondMaps&)>;

/// sqrt(ᾱ_t)·z0 + sqrt(1−ᾱ_t)·ε, with t an int64 tensor of shape [B].
torch::Tensor q_sample(const torch::Tensor& z0, const torch::Tensor& t, const torch::Tensor& eps,
                       const NoiseSchedule& sched);
torch::Tensor q_sample(const torch::Tensor& z0, int t, const torch::Tensor& eps,
                       const NoiseSchedule& sched);

/// Draws t ~ U{1..T} per element and ε ~ N(0, I) from `gen`, returns the
/// mean squared error between ε and the model's prediction.
torch::Tensor ddpm_loss(const EpsModel& model, const torch::Tensor& z0, const CondMaps& cond,
                        const NoiseSchedule& sched, torch::Generator& gen);

/// Per-element counter-based noise: element b at counter k draws from a
/// generator keyed by (seeds[b], k), independent of batch composition.
class NoiseStreams {
public:
    explicit NoiseStreams(std::vector<std::uint64_t> seeds) : seeds_(std::move(seeds)) {}
    std::size_t size() const { return seeds_.size(); }
    /// Stacked draw of shape [B, element_shape...].
    torch::Tensor normal(std::uint64_t counter, torch::IntArrayRef element_shape,
                         const torch::TensorOptions& options) const;

private:
    std::vector<std::uint64_t> seeds_;
};

/// One ancestral step z_t -> z_{t-1} with σ_t² = β_t; no noise at t = 1.
torch::Tensor p_sample_step(const EpsModel& model, const torch::Tensor& z_t, int t,
                            const CondMaps& cond, const NoiseSchedule& sched,
                            const NoiseStreams& noise);

/// Ancestral sampling from z_T ~ N(0, I); one latent per seed.
/// `cond` must have one entry per seed. `latent_shape` is [C,h,w].
torch::Tensor sample_loop(const EpsModel& model, const CondMaps& cond, const NoiseSchedule& sched,
                          const std::vector<std::uint64_t>& seeds,
                          torch::IntArrayRef latent_shape);

}  // namespace wce
