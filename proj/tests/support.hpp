#pragma once

#include <torch/torch.h>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <string>
#include <unistd.h>
#include <vector>

#include "wcegen/rng.hpp"
#include "wcegen/unet.hpp"
#include "wcegen/autoencoder.hpp"

namespace testing {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "t") {
        static std::atomic<int> counter{0};
        path_ = fs::temp_directory_path() /
                ("wcegen_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

inline std::string read_bytes(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

inline void write_text(const fs::path& p, const std::string& text) {
    std::ofstream os(p, std::ios::binary);
    os << text;
}

/// levels 2, base width 8, two latent channels.
inline wce::UNetConfig tiny_unet(int latent_channels = 2) {
    wce::UNetConfig c;
    c.levels = 2;
    c.latent_channels = latent_channels;
    c.base_channels = 8;
    c.channel_multipliers = {1, 2};
    c.time_embed_dim = 32;
    c.mask_embed_channels = 4;
    c.norm_groups = 4;
    c.plan = wce::InjectionPlan::standard(2);
    return c;
}

inline wce::AEConfig tiny_ae(int factor = 2, int latent_channels = 2) {
    wce::AEConfig c;
    c.downsample_factor = factor;
    c.latent_channels = latent_channels;
    c.hidden_widths.clear();
    for (int f = factor, w = 8; f >= 1; f /= 2, w *= 2) c.hidden_widths.push_back(w);
    return c;
}

struct GradCheck {
    int checked = 0;
    double max_rel_error = 0.0;
};

/// Compares autograd gradients of `loss` with central differences at `count`
/// parameter entries drawn uniformly over all scalar parameters. `loss` must
/// be a deterministic function of the module's parameters.
inline GradCheck finite_difference_check(torch::nn::Module& module, const std::function<torch::Tensor()>& loss,
                                         int count, std::uint64_t seed, double h = 1e-6, double floor = 1e-7) {
    for (auto& p : module.parameters())
        if (p.grad().defined()) p.mutable_grad().zero_();
    loss().backward();

    auto params = module.parameters();
    std::vector<int64_t> offsets{0};
    for (const auto& p : params) offsets.push_back(offsets.back() + p.numel());
    wce::Rng rng(seed);

    GradCheck out;
    torch::NoGradGuard no_grad;
    for (int i = 0; i < count; ++i) {
        const auto flat = static_cast<int64_t>(rng.next() % static_cast<std::uint64_t>(offsets.back()));
        std::size_t k = 0;
        while (offsets[k + 1] <= flat) ++k;
        auto view = params[k].view(-1);
        const int64_t j = flat - offsets[k];
        // Parameters outside the graph (e.g. an embedder the plan never uses) have no grad.
        const auto& g = params[k].grad();
        const double analytic = g.defined() ? g.view(-1)[j].item<double>() : 0.0;
        const double orig = view[j].item<double>();
        view[j] = orig + h;
        const double up = loss().item<double>();
        view[j] = orig - h;
        const double down = loss().item<double>();
        view[j] = orig;
        const double numeric = (up - down) / (2.0 * h);
        const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
        out.max_rel_error = std::max(out.max_rel_error, rel);
        ++out.checked;
    }
    return out;
}

}  // namespace testing
