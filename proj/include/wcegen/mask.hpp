#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "wcegen/image_io.hpp"

namespace wce {

enum class Label : std::uint8_t { Blank = 0, Clean = 1, Dark = 2, Floats = 3 };

inline constexpr int kNumLabels = 4;
inline constexpr int kMinMapSide = 8;

struct Rgb {
    std::uint8_t r, g, b;
    friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// Interchange palette, indexed by label id.
inline constexpr std::array<Rgb, kNumLabels> kLegend = {{
    {222, 184, 135},  // blank, beige-brown
    {255, 0, 0},      // clean
    {0, 255, 0},      // dark
    {0, 0, 255},      // floats / bubbles
}};

const char* label_name(Label label);

/// Single-channel class-id grid. Construction validates ids and size.
class SemanticMap {
public:
    SemanticMap(int width, int height, Label fill = Label::Blank);
    SemanticMap(int width, int height, std::vector<std::uint8_t> labels);

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t size() const { return labels_.size(); }

    Label at(int row, int col) const {
        return static_cast<Label>(labels_[static_cast<std::size_t>(row) * width_ + col]);
    }
    void set(int row, int col, Label label) {
        labels_[static_cast<std::size_t>(row) * width_ + col] = static_cast<std::uint8_t>(label);
    }
    const std::vector<std::uint8_t>& labels() const { return labels_; }

    /// Pixel count per label id.
    std::array<std::size_t, kNumLabels> histogram() const;

    friend bool operator==(const SemanticMap&, const SemanticMap&) = default;

private:
    int width_;
    int height_;
    std::vector<std::uint8_t> labels_;
};

/// H×W grid of 0/1 values.
struct BinaryMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits;

    std::uint8_t at(int row, int col) const {
        return bits[static_cast<std::size_t>(row) * width + col];
    }
    std::size_t count() const;
    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

/// Circular optical field of view, in pixel coordinates where pixel (i, j)
/// has its center at (j + 0.5, i + 0.5).
struct FOVSpec {
    double center_x;
    double center_y;
    double radius;

    /// Inscribed circle of a width×height rectangle.
    static FOVSpec inscribed(int width, int height);
    bool contains_pixel(int row, int col) const;
    /// Throws InvalidMap if radius <= 0 or the disk misses the rectangle.
    void validate(int width, int height) const;
};

/// y_d, y_c, y_f and the full map y_a.
struct MaskBundle {
    BinaryMask dark;
    BinaryMask clean;
    BinaryMask floats;
    SemanticMap all;

    int width() const { return all.width(); }
    int height() const { return all.height(); }

    /// Throws InvalidMap naming the first violated invariant.
    void validate() const;
};

SemanticMap load_color_mask(const std::filesystem::path& path);
void encode_color_mask(const SemanticMap& map, const std::filesystem::path& path);

SemanticMap decode_color_raster(const Raster8& raster);
Raster8 color_raster(const SemanticMap& map);

/// Canonical format: 8-bit single-channel raster holding ids 0..3.
SemanticMap load_label_mask(const std::filesystem::path& path);
void encode_label_mask(const SemanticMap& map, const std::filesystem::path& path);

/// Loads either format: gray rasters are read as canonical labels, RGB
/// rasters through the legend.
SemanticMap load_any_mask(const std::filesystem::path& path);

/// Every pixel whose center lies strictly outside the disk becomes blank.
SemanticMap reassign_corners(const SemanticMap& map, const FOVSpec& fov);

MaskBundle split_channels(const SemanticMap& map);

void write_binary_mask(const BinaryMask& mask, const std::filesystem::path& path);

/// Nearest-neighbour resampling of class ids.
SemanticMap resample_nearest(const SemanticMap& map, int width, int height);

struct BlobCountRange {
    int min = 2;
    int max = 5;
};

/// Procedural mask request. Fractions are over non-blank pixels; whatever
/// dark and floats leave over is clean.
struct SynthMaskSpec {
    int width = 64;
    int height = 64;
    double clean = 0.6;
    double dark = 0.2;
    double floats = 0.2;
    BlobCountRange dark_blobs{1, 3};
    BlobCountRange floats_blobs{2, 5};
};

SemanticMap synth_mask(const SynthMaskSpec& spec, std::uint64_t seed);

/// Fraction of non-blank pixels holding `label`; 0 when the map is all blank.
double nonblank_fraction(const SemanticMap& map, Label label);

}  // namespace wce
