#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "wcegen/image.hpp"
#include "wcegen/mask.hpp"

namespace wce {

/// Appearance model for synthetic capsule frames. Each class gets a
/// statistically separable signature: clean is a smooth reddish mucosa,
/// dark is low-luminance noise, floats are a yellowish debris layer
/// carrying bright bubble blobs, blank is near-black.
struct ToyRenderSpec {
    std::array<double, 3> clean_base_rgb{0.80, 0.38, 0.26};
    double dark_max_luminance = 0.12;
    /// Bubble blobs per 1000 floats pixels.
    double float_blob_density = 24.0;
    double noise_amplitude = 0.04;

    /// Requires clean luminance to clear dark_max_luminance by 0.25 so the
    /// rendered clean/dark gap stays above 0.2.
    void validate() const;
};

double luminance(const std::array<double, 3>& rgb);

struct Sample {
    RgbImage image;
    MaskBundle bundle;
    std::string id;
};

/// Deterministic per (map, spec, seed); pixel values lie on the 8-bit grid
/// so a PNG round trip is exact.
Sample render_toy(const SemanticMap& map, const ToyRenderSpec& spec, std::uint64_t seed,
                  std::string id = "toy");

/// Mask recipe used for toy dataset item `index`: fractions drawn per item.
SynthMaskSpec toy_mask_spec(std::uint64_t item_seed, int size);

}  // namespace wce
