#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace wce {

/// 8-bit raster as stored on disk, interleaved channels, row-major.
struct Raster8 {
    int width = 0;
    int height = 0;
    int channels = 0;  // 1 (gray) or 3 (RGB)
    std::vector<std::uint8_t> pixels;

    std::uint8_t at(int row, int col, int ch = 0) const {
        return pixels[(static_cast<std::size_t>(row) * width + col) * channels + ch];
    }
};

/// Decodes a PNG. Palette and 16-bit images are expanded to 8-bit; alpha is
/// dropped. Gray+alpha becomes gray. Throws DecodeError / IoError.
Raster8 read_png(const std::filesystem::path& path);

/// Writes a PNG without timestamps or text chunks, so identical rasters
/// produce identical files. Throws IoError.
void write_png(const std::filesystem::path& path, const Raster8& raster);

/// Decodes a baseline JPEG to 8-bit RGB. Throws DecodeError / IoError.
Raster8 read_jpeg(const std::filesystem::path& path);

/// Dispatches on file extension (.png / .jpg / .jpeg).
Raster8 read_image(const std::filesystem::path& path);

}  // namespace wce
