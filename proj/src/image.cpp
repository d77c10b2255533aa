#include "wcegen/image.hpp"

#include <algorithm>
#include <cmath>

namespace wce {

Raster8 to_raster(const RgbImage& image) {
    Raster8 out{image.width, image.height, 3, {}};
    out.pixels.resize(image.data.size());
    for (std::size_t i = 0; i < image.data.size(); ++i) {
        const float v = std::clamp(image.data[i], 0.0f, 1.0f);
        out.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
    return out;
}

RgbImage from_raster(const Raster8& raster) {
    RgbImage out(raster.width, raster.height);
    for (int r = 0; r < raster.height; ++r)
        for (int c = 0; c < raster.width; ++c)
            for (int ch = 0; ch < 3; ++ch)
                out.at(r, c, ch) = raster.at(r, c, raster.channels == 1 ? 0 : ch) / 255.0f;
    return out;
}

RgbImage resize(const RgbImage& image, int width, int height) {
    if (width == image.width && height == image.height) return image;
    RgbImage out(width, height);
    if (image.width % width == 0 && image.height % height == 0) {
        const int fx = image.width / width, fy = image.height / height;
        const float norm = 1.0f / static_cast<float>(fx * fy);
        for (int r = 0; r < height; ++r)
            for (int c = 0; c < width; ++c)
                for (int ch = 0; ch < 3; ++ch) {
                    float acc = 0.0f;
                    for (int dy = 0; dy < fy; ++dy)
                        for (int dx = 0; dx < fx; ++dx) acc += image.at(r * fy + dy, c * fx + dx, ch);
                    out.at(r, c, ch) = acc * norm;
                }
        return out;
    }
    const double sx = static_cast<double>(image.width) / width;
    const double sy = static_cast<double>(image.height) / height;
    for (int r = 0; r < height; ++r) {
        const double y = std::clamp((r + 0.5) * sy - 0.5, 0.0, image.height - 1.0);
        const int y0 = static_cast<int>(y), y1 = std::min(y0 + 1, image.height - 1);
        const double wy = y - y0;
        for (int c = 0; c < width; ++c) {
            const double x = std::clamp((c + 0.5) * sx - 0.5, 0.0, image.width - 1.0);
            const int x0 = static_cast<int>(x), x1 = std::min(x0 + 1, image.width - 1);
            const double wx = x - x0;
            for (int ch = 0; ch < 3; ++ch) {
                const double top = image.at(y0, x0, ch) * (1 - wx) + image.at(y0, x1, ch) * wx;
                const double bot = image.at(y1, x0, ch) * (1 - wx) + image.at(y1, x1, ch) * wx;
                out.at(r, c, ch) = static_cast<float>(top * (1 - wy) + bot * wy);
            }
        }
    }
    return out;
}

}  // namespace wce
