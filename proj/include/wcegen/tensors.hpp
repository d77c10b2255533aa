#pragma once

#include <torch/torch.h>

#include <vector>

#include "wcegen/image.hpp"
#include "wcegen/mask.hpp"

namespace wce {

/// Mask ids used by the injection plan.
enum class MaskSlot : std::uint8_t { Dark = 0, Clean = 1, Floats = 2, All = 3 };

inline constexpr int kNumSlots = 4;

const char* slot_name(MaskSlot slot);  // "d", "c", "f", "a"
MaskSlot parse_slot(const std::string& name);

/// Tensor form of a batch of MaskBundles at image resolution.
/// dark/clean/floats are [B,1,H,W] in {0,1}; all is [B,4,H,W], the label map
/// expanded to one indicator channel per class id (blank included).
struct CondMaps {
    torch::Tensor dark;
    torch::Tensor clean;
    torch::Tensor floats;
    torch::Tensor all;

    const torch::Tensor& slot(MaskSlot s) const;
    int64_t batch() const { return all.size(0); }
    CondMaps to(torch::ScalarType dtype) const;
    CondMaps index(const torch::Tensor& batch_indices) const;
    /// Repeats a single-item batch `n` times.
    CondMaps repeat(int64_t n) const;
};

CondMaps cond_from_bundle(const MaskBundle& bundle);
CondMaps cond_from_bundles(const std::vector<const MaskBundle*>& bundles);
CondMaps concat(const std::vector<CondMaps>& parts);

/// Area-average pooling of a [B,C,H,W] mask to (target_h, target_w). The
/// target must divide the source resolution; throws ShapeError otherwise.
torch::Tensor downsample_mask(const torch::Tensor& mask, int64_t target_h, int64_t target_w);

/// [3,H,W] float tensor in [0,1].
torch::Tensor image_to_tensor(const RgbImage& image);
/// Accepts [3,H,W]; values are clamped to [0,1].
RgbImage tensor_to_image(const torch::Tensor& chw);

/// Fresh CPU generator seeded with `key`.
torch::Generator make_generator(std::uint64_t key);

}  // namespace wce
