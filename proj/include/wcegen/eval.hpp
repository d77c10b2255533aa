#pragma once

#include <array>
#include <optional>
#include <ostream>
#include <string>

#include "wcegen/image.hpp"
#include "wcegen/mask.hpp"

namespace wce {

inline constexpr double kDarkCleanMargin = 0.1;
inline constexpr double kBlankMaxLuminance = 0.1;

/// Region statistics of an image against its semantic map. Regions without
/// pixels report std::nullopt; rules touching an absent region are skipped
/// (also std::nullopt) and do not count as failures.
struct AdherenceReport {
    std::array<std::optional<double>, kNumLabels> mean_luminance;
    /// Mean over region pixels of the luminance variance in the 3×3 window
    /// centered on the pixel (window clipped at the image border).
    std::array<std::optional<double>, kNumLabels> local_variance;

    /// mean(dark) + 0.1 < mean(clean)
    std::optional<bool> dark_clean;
    /// var(floats) > var(clean)
    std::optional<bool> floats_texture;
    /// mean(blank) < 0.1
    std::optional<bool> blank_dark;

    bool all_pass() const;
    std::optional<double> mean(Label l) const { return mean_luminance[static_cast<int>(l)]; }
    std::optional<double> variance(Label l) const { return local_variance[static_cast<int>(l)]; }
};

/// Throws ShapeMismatch when sizes differ.
AdherenceReport adherence_report(const RgbImage& image, const SemanticMap& map);

void print_report(std::ostream& os, const AdherenceReport& report);

}  // namespace wce
