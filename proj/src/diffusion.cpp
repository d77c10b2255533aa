#include "wcegen/diffusion.hpp"

#include <cmath>
#include <sstream>

#include "wcegen/errors.hpp"
#include "wcegen/rng.hpp"

namespace wce {
namespace {

constexpr std::uint64_t kSamplingDomain = 0x5A3B'1E00ull;
constexpr std::uint64_t kInitCounter = 0;

}  // namespace

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas, std::vector<int> model_timesteps) {
    if (betas.empty()) throw BadRange("schedule needs at least one timestep");
    for (double b : betas)
        if (!(b >= 0.0 && b < 1.0)) throw BadRange("betas must lie in [0, 1)");
    if (!model_timesteps.empty() && model_timesteps.size() != betas.size())
        throw BadRange("model_timesteps must match the number of betas");

    NoiseSchedule s;
    s.beta_ = std::move(betas);
    s.alpha_.resize(s.beta_.size());
    s.alpha_bar_.resize(s.beta_.size());
    // Cumulative product accumulated in log space.
    double log_acc = 0.0;
    for (std::size_t i = 0; i < s.beta_.size(); ++i) {
        s.alpha_[i] = 1.0 - s.beta_[i];
        log_acc += std::log1p(-s.beta_[i]);
        s.alpha_bar_[i] = std::exp(log_acc);
    }
    if (model_timesteps.empty()) {
        s.model_t_.resize(s.beta_.size());
        for (std::size_t i = 0; i < s.model_t_.size(); ++i) s.model_t_[i] = static_cast<int>(i) + 1;
    } else {
        s.model_t_ = std::move(model_timesteps);
    }
    return s;
}

std::size_t NoiseSchedule::index(int t) const {
    if (t < 1 || t > T()) {
        std::ostringstream os;
        os << "timestep " << t << " outside [1, " << T() << "]";
        throw TimestepOutOfRange(os.str());
    }
    return static_cast<std::size_t>(t - 1);
}

NoiseSchedule NoiseSchedule::respaced(int steps) const {
    if (steps < 1 || steps > T()) {
        std::ostringstream os;
        os << "respaced step count " << steps << " outside [1, " << T() << "]";
        throw BadRange(os.str());
    }
    if (steps == T()) return *this;
    std::vector<int> keep(steps);
    for (int i = 0; i < steps; ++i) {
        // Evenly spaced, always ending on T.
        keep[i] = static_cast<int>(std::lround(1.0 + (T() - 1.0) * i / std::max(1, steps - 1)));
    }
    if (steps == 1) keep[0] = T();
    std::vector<double> betas;
    std::vector<int> model_t;
    double prev = 1.0;
    for (int t : keep) {
        const double ab = alpha_bar(t);
        betas.push_back(1.0 - ab / prev);
        model_t.push_back(model_timestep(t));
        prev = ab;
    }
    return from_betas(std::move(betas), std::move(model_t));
}

torch::Tensor NoiseSchedule::alpha_bar_at(const torch::Tensor& t, const torch::TensorOptions& options) const {
    auto t_cpu = t.to(torch::kInt64).contiguous();
    const int64_t n = t_cpu.numel();
    auto out = torch::empty({n}, torch::TensorOptions().dtype(torch::kFloat64));
    auto* dst = out.data_ptr<double>();
    const auto* src = t_cpu.data_ptr<int64_t>();
    for (int64_t i = 0; i < n; ++i) dst[i] = alpha_bar(static_cast<int>(src[i]));
    return out.to(options).view({n, 1, 1, 1});
}

NoiseSchedule make_schedule(int T, double beta_start, double beta_end, ScheduleKind kind) {
    if (T < 1) throw BadRange("T must be >= 1");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
        std::ostringstream os;
        os << "need 0 < beta_start <= beta_end < 1, got [" << beta_start << ", " << beta_end << "]";
        throw BadRange(os.str());
    }
    std::vector<double> betas(T);
    switch (kind) {
        case ScheduleKind::Linear:
            for (int i = 0; i < T; ++i)
                betas[i] = T == 1 ? beta_start : beta_start + (beta_end - beta_start) * i / (T - 1.0);
            break;
    }
    return NoiseSchedule::from_betas(std::move(betas));
}

torch::Tensor q_sample(const torch::Tensor& z0, const torch::Tensor& t, const torch::Tensor& eps,
                       const NoiseSchedule& sched) {
    if (!z0.sizes().equals(eps.sizes())) throw ShapeError("q_sample: z0 and eps shapes differ");
    if (t.numel() != z0.size(0)) throw ShapeError("q_sample: need one timestep per batch element");
    const auto ab = sched.alpha_bar_at(t, z0.options());
    return ab.sqrt() * z0 + (1.0 - ab).sqrt() * eps;
}

torch::Tensor q_sample(const torch::Tensor& z0, int t, const torch::Tensor& eps,
                       const NoiseSchedule& sched) {
    if (!z0.sizes().equals(eps.sizes())) throw ShapeError("q_sample: z0 and eps shapes differ");
    const double ab = sched.alpha_bar(t);
    return std::sqrt(ab) * z0 + std::sqrt(1.0 - ab) * eps;
}

torch::Tensor ddpm_loss(const EpsModel& model, const torch::Tensor& z0, const CondMaps& cond,
                        const NoiseSchedule& sched, torch::Generator& gen) {
    const int64_t batch = z0.size(0);
    const auto t = torch::randint(1, sched.T() + 1, {batch}, gen, torch::kInt64);
    const auto eps = torch::randn(z0.sizes(), gen, z0.options());
    const auto z_t = q_sample(z0, t, eps, sched);
    auto model_t = t.clone();
    auto* mt = model_t.data_ptr<int64_t>();
    for (int64_t i = 0; i < batch; ++i) mt[i] = sched.model_timestep(static_cast<int>(mt[i]));
    const auto eps_hat = model(z_t, model_t, cond);
    if (!eps_hat.sizes().equals(eps.sizes())) throw ShapeError("model output shape differs from z_t");
    return (eps - eps_hat).pow(2).mean();
}

torch::Tensor NoiseStreams::normal(std::uint64_t counter, torch::IntArrayRef element_shape,
                                   const torch::TensorOptions& options) const {
    std::vector<torch::Tensor> parts;
    parts.reserve(seeds_.size());
    for (std::uint64_t seed : seeds_) {
        auto gen = make_generator(stream_key(seed, counter, kSamplingDomain));
        parts.push_back(torch::randn(element_shape, gen, options.dtype(torch::kFloat32)).to(options));
    }
    return torch::stack(parts);
}

torch::Tensor p_sample_step(const EpsModel& model, const torch::Tensor& z_t, int t,
                            const CondMaps& cond, const NoiseSchedule& sched,
                            const NoiseStreams& noise) {
    const double beta = sched.beta(t);
    const double alpha = sched.alpha(t);
    const double alpha_bar = sched.alpha_bar(t);
    const int64_t batch = z_t.size(0);
    const auto t_model = torch::full({batch}, sched.model_timestep(t), torch::kInt64);
    const auto eps_hat = model(z_t, t_model, cond);
    const double coef = alpha_bar < 1.0 ? beta / std::sqrt(1.0 - alpha_bar) : 0.0;
    auto mean = (z_t - coef * eps_hat) / std::sqrt(alpha);
    if (t == 1) return mean;
    if (static_cast<int64_t>(noise.size()) != batch)
        throw ShapeError("need one noise stream per batch element");
    return mean + std::sqrt(beta) * noise.normal(static_cast<std::uint64_t>(t),
                                                 z_t.sizes().slice(1), z_t.options());
}

torch::Tensor sample_loop(const EpsModel& model, const CondMaps& cond, const NoiseSchedule& sched,
                          const std::vector<std::uint64_t>& seeds, torch::IntArrayRef latent_shape) {
    if (seeds.empty()) throw ShapeError("sample_loop needs at least one seed");
    if (cond.batch() != static_cast<int64_t>(seeds.size()))
        throw ShapeError("sample_loop: condition batch must match the number of seeds");
    torch::NoGradGuard no_grad;
    const NoiseStreams streams(seeds);
    auto z = streams.normal(kInitCounter, latent_shape, torch::kFloat32);
    for (int t = sched.T(); t >= 1; --t) z = p_sample_step(model, z, t, cond, sched, streams);
    return z;
}

}  // namespace wce
