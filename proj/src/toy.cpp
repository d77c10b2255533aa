#include "wcegen/toy.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "wcegen/errors.hpp"
#include "wcegen/rng.hpp"

namespace wce {
namespace {

constexpr std::uint64_t kRenderDomain = 0x70E'7E4Dull;
constexpr std::uint64_t kMaskDomain = 0x70E'3A5Cull;

// Smooth noise in roughly [-1, 1]: a coarse normal grid upsampled bilinearly.
std::vector<double> smooth_noise(int width, int height, int cells, Rng& rng) {
    std::vector<double> grid(static_cast<std::size_t>(cells + 1) * (cells + 1));
    for (auto& g : grid) g = std::clamp(rng.normal() * 0.5, -1.0, 1.0);
    std::vector<double> field(static_cast<std::size_t>(width) * height);
    for (int r = 0; r < height; ++r) {
        const double gy = (r + 0.5) / height * cells;
        const int y0 = std::min(static_cast<int>(gy), cells - 1);
        const double wy = gy - y0;
        for (int c = 0; c < width; ++c) {
            const double gx = (c + 0.5) / width * cells;
            const int x0 = std::min(static_cast<int>(gx), cells - 1);
            const double wx = gx - x0;
            const auto g = [&](int y, int x) { return grid[static_cast<std::size_t>(y) * (cells + 1) + x]; };
            field[static_cast<std::size_t>(r) * width + c] =
                (g(y0, x0) * (1 - wx) + g(y0, x0 + 1) * wx) * (1 - wy) +
                (g(y0 + 1, x0) * (1 - wx) + g(y0 + 1, x0 + 1) * wx) * wy;
        }
    }
    return field;
}

float quantize(double v) {
    return static_cast<float>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)) / 255.0f;
}

}  // namespace

double luminance(const std::array<double, 3>& rgb) {
    return 0.2126 * rgb[0] + 0.7152 * rgb[1] + 0.0722 * rgb[2];
}

void ToyRenderSpec::validate() const {
    for (double v : clean_base_rgb)
        if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("clean_base_rgb components must lie in [0, 1]");
    if (!(dark_max_luminance > 0.0 && dark_max_luminance <= 1.0))
        throw ConfigError("dark_max_luminance must lie in (0, 1]");
    if (luminance(clean_base_rgb) < dark_max_luminance + 0.25) {
        std::ostringstream os;
        os << "clean luminance " << luminance(clean_base_rgb)
           << " must exceed dark_max_luminance + 0.25 = " << dark_max_luminance + 0.25;
        throw ConfigError(os.str());
    }
    if (float_blob_density < 0.0) throw ConfigError("float_blob_density must be nonnegative");
    if (!(noise_amplitude >= 0.0 && noise_amplitude <= 0.2))
        throw ConfigError("noise_amplitude must lie in [0, 0.2]");
}

Sample render_toy(const SemanticMap& map, const ToyRenderSpec& spec, std::uint64_t seed,
                  std::string id) {
    spec.validate();
    const int w = map.width(), h = map.height();
    Rng rng(stream_key(seed, 0, kRenderDomain));
    const auto tone = smooth_noise(w, h, 4, rng);
    const auto hue = smooth_noise(w, h, 3, rng);
    const auto debris = smooth_noise(w, h, 6, rng);

    // Dark pixels are clamped so their luminance never exceeds 60% of the cap.
    const double dark_cap = 0.6 * spec.dark_max_luminance;
    const std::array<double, 3> dark_tint{0.45, 0.22, 0.15};
    const double dark_tint_lum = luminance(dark_tint);
    const std::array<double, 3> debris_rgb{0.66, 0.58, 0.24};

    std::vector<double> rgb(static_cast<std::size_t>(w) * h * 3, 0.0);
    std::size_t floats_pixels = 0;
    std::vector<int> floats_index;
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const std::size_t p = static_cast<std::size_t>(r) * w + c;
            double* px = &rgb[p * 3];
            switch (map.at(r, c)) {
                case Label::Blank:
                    px[0] = px[1] = px[2] = 0.0;
                    break;
                case Label::Clean: {
                    const double shade = 1.0 + 0.12 * tone[p];
                    const double warm = 0.06 * hue[p];
                    px[0] = spec.clean_base_rgb[0] * shade + warm;
                    px[1] = spec.clean_base_rgb[1] * shade;
                    px[2] = spec.clean_base_rgb[2] * shade - warm;
                    for (int ch = 0; ch < 3; ++ch) px[ch] += 0.15 * spec.noise_amplitude * rng.normal();
                    break;
                }
                case Label::Dark: {
                    const double target = dark_cap * (0.55 + 0.25 * tone[p] + 0.5 * spec.noise_amplitude * rng.normal());
                    const double s = std::clamp(target, 0.0, dark_cap) / dark_tint_lum;
                    for (int ch = 0; ch < 3; ++ch) px[ch] = dark_tint[ch] * s;
                    break;
                }
                case Label::Floats: {
                    const double shade = 1.0 + 0.2 * debris[p];
                    for (int ch = 0; ch < 3; ++ch)
                        px[ch] = debris_rgb[ch] * shade + spec.noise_amplitude * rng.normal();
                    ++floats_pixels;
                    floats_index.push_back(static_cast<int>(p));
                    break;
                }
            }
        }
    }

    // Bubbles: bright discs with a darker rim, confined to the floats region.
    const auto blobs = static_cast<int>(std::lround(spec.float_blob_density * floats_pixels / 1000.0));
    for (int b = 0; b < blobs && !floats_index.empty(); ++b) {
        const int anchor = floats_index[rng.uniform_int(0, static_cast<int>(floats_index.size()) - 1)];
        const double cx = anchor % w + 0.5, cy = anchor / w + 0.5;
        const double rad = rng.uniform(1.6, 3.4);
        const int x0 = std::max(0, static_cast<int>(cx - rad - 1)), x1 = std::min(w - 1, static_cast<int>(cx + rad + 1));
        const int y0 = std::max(0, static_cast<int>(cy - rad - 1)), y1 = std::min(h - 1, static_cast<int>(cy + rad + 1));
        for (int r = y0; r <= y1; ++r) {
            for (int c = x0; c <= x1; ++c) {
                if (map.at(r, c) != Label::Floats) continue;
                const double d = std::hypot(c + 0.5 - cx, r + 0.5 - cy);
                double* px = &rgb[(static_cast<std::size_t>(r) * w + c) * 3];
                if (d <= rad * 0.7) {
                    px[0] = 0.97; px[1] = 0.96; px[2] = 0.88;
                } else if (d <= rad) {
                    px[0] = 0.30; px[1] = 0.26; px[2] = 0.10;
                }
            }
        }
    }

    RgbImage image(w, h);
    for (std::size_t i = 0; i < rgb.size(); ++i) image.data[i] = quantize(rgb[i]);
    return Sample{std::move(image), split_channels(map), std::move(id)};
}

SynthMaskSpec toy_mask_spec(std::uint64_t item_seed, int size) {
    Rng rng(stream_key(item_seed, 0, kMaskDomain));
    SynthMaskSpec spec;
    spec.width = spec.height = size;
    spec.dark = rng.uniform() < 0.15 ? 0.0 : rng.uniform(0.05, 0.35);
    spec.floats = rng.uniform() < 0.15 ? 0.0 : rng.uniform(0.05, 0.35);
    spec.clean = 1.0 - spec.dark - spec.floats;
    return spec;
}

}  // namespace wce
