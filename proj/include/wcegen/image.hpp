#pragma once

#include <vector>

#include "wcegen/image_io.hpp"

namespace wce {

/// Floating-point RGB image in [0, 1], interleaved HWC, row-major.
struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<float> data;

    RgbImage() = default;
    RgbImage(int w, int h, float fill = 0.0f)
        : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, fill) {}

    float& at(int row, int col, int ch) {
        return data[(static_cast<std::size_t>(row) * width + col) * 3 + ch];
    }
    float at(int row, int col, int ch) const {
        return data[(static_cast<std::size_t>(row) * width + col) * 3 + ch];
    }
    /// Relative luminance 0.2126 R + 0.7152 G + 0.0722 B.
    double luminance(int row, int col) const {
        return 0.2126 * at(row, col, 0) + 0.7152 * at(row, col, 1) + 0.0722 * at(row, col, 2);
    }

    friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

/// Rounds to the nearest 8-bit level after clamping to [0, 1].
Raster8 to_raster(const RgbImage& image);
/// Gray rasters are replicated across channels.
RgbImage from_raster(const Raster8& raster);

/// Area-average resize (integer factor) or bilinear otherwise.
RgbImage resize(const RgbImage& image, int width, int height);

}  // namespace wce
