#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "wcegen/diffusion.hpp"
#include "wcegen/tensors.hpp"

namespace wce {

/// Which mask feeds which U-Net stage.
struct InjectionPlan {
    std::vector<MaskSlot> encoder;
    MaskSlot middle = MaskSlot::All;
    std::vector<MaskSlot> decoder;

    /// Encoder cycles d, c, f over `levels`; middle gets the full map;
    /// decoder is the encoder sequence reversed.
    static InjectionPlan standard(int levels);
    /// Same decoder/middle, encoder given explicitly, decoder = reverse(encoder).
    static InjectionPlan mirrored(std::vector<MaskSlot> encoder, MaskSlot middle = MaskSlot::All);

    /// e.g. `encoder = ["d","c","f"], middle = "a", decoder = ["f","c","d"]`
    std::string to_string() const;
    friend bool operator==(const InjectionPlan&, const InjectionPlan&) = default;
};

struct UNetConfig {
    int levels = 3;
    int latent_channels = 4;
    int base_channels = 32;
    std::vector<int> channel_multipliers{1, 2, 2};
    int time_embed_dim = 128;
    int mask_embed_channels = 16;
    int norm_groups = 8;
    InjectionPlan plan = InjectionPlan::standard(3);

    /// Throws ConfigError naming the first violated invariant.
    void validate() const;
    /// Every invariant violation, one message each.
    std::vector<std::string> violations() const;
    int channels(int level) const { return base_channels * channel_multipliers.at(level); }
    friend bool operator==(const UNetConfig&, const UNetConfig&) = default;
};

/// Sinusoidal features of integer timesteps: [B, dim], sin half then cos half.
torch::Tensor timestep_features(const torch::Tensor& t, int64_t dim, torch::ScalarType dtype);

/// GroupNorm → SiLU → conv, time-embedding shift, GroupNorm → SiLU → conv,
/// plus a 1×1 skip when widths differ.
class ResBlockImpl : public torch::nn::Module {
public:
    ResBlockImpl(int64_t in_channels, int64_t out_channels, int64_t time_dim, int64_t max_groups);
    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& temb);

private:
    torch::nn::GroupNorm norm1_{nullptr}, norm2_{nullptr};
    torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, skip_{nullptr};
    torch::nn::Linear time_proj_{nullptr};
};
TORCH_MODULE(ResBlock);

/// Two-layer convolutional embedder for one mask id (the conditioning encoder).
class MaskEmbedderImpl : public torch::nn::Module {
public:
    MaskEmbedderImpl(int64_t in_channels, int64_t embed_channels);
    torch::Tensor forward(const torch::Tensor& mask);
    /// Zeroes the output layer so the embedding is identically zero.
    void ablate();

private:
    torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr};
};
TORCH_MODULE(MaskEmbedder);

/// h + proj(concat(h, embedding)); a zero projection is the identity.
class MaskFusionImpl : public torch::nn::Module {
public:
    MaskFusionImpl(int64_t width, int64_t embed_channels);
    torch::Tensor forward(const torch::Tensor& h, const torch::Tensor& embedding);
    void zero();

private:
    torch::nn::Conv2d proj_{nullptr};
};
TORCH_MODULE(MaskFusion);

/// ε-prediction U-Net with per-class mask embeddings fused at every encoder
/// level, the middle block and every decoder level, following the plan.
class ConditionalUNetImpl : public torch::nn::Module {
public:
    explicit ConditionalUNetImpl(UNetConfig cfg);

    torch::Tensor forward(const torch::Tensor& z_t, const torch::Tensor& t, const CondMaps& cond);
    /// Same network with every fusion step skipped.
    torch::Tensor forward_unconditional(const torch::Tensor& z_t, const torch::Tensor& t);

    const UNetConfig& config() const { return cfg_; }
    /// Swaps the injection plan (same levels); weights are untouched.
    void set_plan(const InjectionPlan& plan);
    void ablate_embedder(MaskSlot slot);
    void zero_injection();

private:
    torch::Tensor run(const torch::Tensor& z_t, const torch::Tensor& t, const CondMaps* cond);
    torch::Tensor fuse(MaskFusion& fusion, MaskSlot slot, const torch::Tensor& h, const CondMaps* cond);

    UNetConfig cfg_;
    torch::nn::Sequential time_mlp_{nullptr};
    torch::nn::Conv2d in_conv_{nullptr};
    std::array<MaskEmbedder, kNumSlots> embedders_{nullptr, nullptr, nullptr, nullptr};
    std::vector<MaskFusion> enc_fuse_;
    std::vector<ResBlock> enc_blocks_;
    std::vector<torch::nn::Conv2d> down_;
    MaskFusion mid_fuse_{nullptr};
    ResBlock mid_block1_{nullptr}, mid_block2_{nullptr};
    std::vector<MaskFusion> dec_fuse_;
    std::vector<ResBlock> dec_blocks_;
    std::vector<torch::nn::Conv2d> up_;
    torch::nn::GroupNorm out_norm_{nullptr};
    torch::nn::Conv2d out_conv_{nullptr};
};
TORCH_MODULE(ConditionalUNet);

/// Validates `cfg` and initializes weights deterministically from `seed`.
ConditionalUNet build_model(const UNetConfig& cfg, std::uint64_t seed);

/// Adapts a U-Net to the EpsModel signature used by the diffusion routines.
EpsModel as_eps_model(ConditionalUNet model);

int64_t parameter_count(const torch::nn::Module& module);
/// FNV-1a over parameter names and raw bytes, in registration order.
std::uint64_t parameter_checksum(const torch::nn::Module& module);

/// Largest group count <= max_groups that divides `channels`.
int64_t group_count(int64_t channels, int64_t max_groups);

}  // namespace wce
