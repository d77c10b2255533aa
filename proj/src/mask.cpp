#include "wcegen/mask.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>

#include "wcegen/errors.hpp"
#include "wcegen/rng.hpp"

namespace wce {
namespace {

void check_dims(int width, int height) {
    if (width < kMinMapSide || height < kMinMapSide) {
        std::ostringstream os;
        os << "semantic map must be at least " << kMinMapSide << "x" << kMinMapSide << ", got "
           << width << "x" << height;
        throw InvalidMap(os.str());
    }
}

BinaryMask indicator(const SemanticMap& map, Label label) {
    BinaryMask mask{map.width(), map.height(), std::vector<std::uint8_t>(map.size(), 0)};
    const auto id = static_cast<std::uint8_t>(label);
    for (std::size_t i = 0; i < map.size(); ++i) mask.bits[i] = map.labels()[i] == id ? 1 : 0;
    return mask;
}

}  // namespace

const char* label_name(Label label) {
    switch (label) {
        case Label::Blank: return "blank";
        case Label::Clean: return "clean";
        case Label::Dark: return "dark";
        case Label::Floats: return "floats";
    }
    return "?";
}

SemanticMap::SemanticMap(int width, int height, Label fill)
    : width_(width), height_(height) {
    check_dims(width, height);
    labels_.assign(static_cast<std::size_t>(width) * height, static_cast<std::uint8_t>(fill));
}

SemanticMap::SemanticMap(int width, int height, std::vector<std::uint8_t> labels)
    : width_(width), height_(height), labels_(std::move(labels)) {
    check_dims(width, height);
    if (labels_.size() != static_cast<std::size_t>(width) * height)
        throw InvalidMap("label buffer does not match dimensions");
    for (std::size_t i = 0; i < labels_.size(); ++i) {
        if (labels_[i] >= kNumLabels) {
            std::ostringstream os;
            os << "pixel (" << i / width << "," << i % width << ") holds class id "
               << int(labels_[i]);
            throw InvalidMap(os.str());
        }
    }
}

std::array<std::size_t, kNumLabels> SemanticMap::histogram() const {
    std::array<std::size_t, kNumLabels> h{};
    for (auto v : labels_) ++h[v];
    return h;
}

std::size_t BinaryMask::count() const {
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

FOVSpec FOVSpec::inscribed(int width, int height) {
    return {width / 2.0, height / 2.0, std::min(width, height) / 2.0};
}

bool FOVSpec::contains_pixel(int row, int col) const {
    const double dx = (col + 0.5) - center_x;
    const double dy = (row + 0.5) - center_y;
    return dx * dx + dy * dy <= radius * radius;
}

void FOVSpec::validate(int width, int height) const {
    if (!(radius > 0.0) || !std::isfinite(radius) || !std::isfinite(center_x) ||
        !std::isfinite(center_y))
        throw InvalidMap("FOV radius must be positive and finite");
    // Distance from the center to the closest point of the rectangle.
    const double nx = std::clamp(center_x, 0.0, double(width));
    const double ny = std::clamp(center_y, 0.0, double(height));
    const double d = std::hypot(nx - center_x, ny - center_y);
    if (d >= radius) throw InvalidMap("FOV disk does not intersect the image");
}

void MaskBundle::validate() const {
    const int w = all.width(), h = all.height();
    for (const BinaryMask* m : {&dark, &clean, &floats}) {
        if (m->width != w || m->height != h || m->bits.size() != all.size())
            throw InvalidMap("bundle members disagree on size");
    }
    for (std::size_t i = 0; i < all.size(); ++i) {
        const int sum = dark.bits[i] + clean.bits[i] + floats.bits[i];
        const bool blank = all.labels()[i] == static_cast<std::uint8_t>(Label::Blank);
        if (dark.bits[i] > 1 || clean.bits[i] > 1 || floats.bits[i] > 1 || sum != (blank ? 0 : 1)) {
            std::ostringstream os;
            os << "bundle partition violated at pixel (" << i / w << "," << i % w << ")";
            throw InvalidMap(os.str());
        }
    }
}

SemanticMap decode_color_raster(const Raster8& raster) {
    if (raster.channels != 3) throw DecodeError("color mask must be RGB");
    std::vector<std::uint8_t> labels(static_cast<std::size_t>(raster.width) * raster.height);
    for (int r = 0; r < raster.height; ++r) {
        for (int c = 0; c < raster.width; ++c) {
            const Rgb px{raster.at(r, c, 0), raster.at(r, c, 1), raster.at(r, c, 2)};
            const auto it = std::find(kLegend.begin(), kLegend.end(), px);
            if (it == kLegend.end()) {
                std::ostringstream os;
                os << "pixel (" << r << "," << c << ") has rgb (" << int(px.r) << "," << int(px.g)
                   << "," << int(px.b) << ")";
                throw UnknownColor(os.str());
            }
            labels[static_cast<std::size_t>(r) * raster.width + c] =
                static_cast<std::uint8_t>(it - kLegend.begin());
        }
    }
    try {
        return SemanticMap(raster.width, raster.height, std::move(labels));
    } catch (const InvalidMap& e) {
        throw DecodeError(e.message());
    }
}

Raster8 color_raster(const SemanticMap& map) {
    Raster8 out{map.width(), map.height(), 3, {}};
    out.pixels.reserve(map.size() * 3);
    for (auto id : map.labels()) {
        const Rgb& c = kLegend[id];
        out.pixels.insert(out.pixels.end(), {c.r, c.g, c.b});
    }
    return out;
}

SemanticMap load_color_mask(const std::filesystem::path& path) {
    return decode_color_raster(read_png(path));
}

void encode_color_mask(const SemanticMap& map, const std::filesystem::path& path) {
    write_png(path, color_raster(map));
}

SemanticMap load_label_mask(const std::filesystem::path& path) {
    Raster8 raster = read_png(path);
    if (raster.channels != 1) throw DecodeError(path.string() + ": label mask must be single-channel");
    for (std::size_t i = 0; i < raster.pixels.size(); ++i) {
        if (raster.pixels[i] >= kNumLabels) {
            std::ostringstream os;
            os << path.string() << ": value " << int(raster.pixels[i]) << " at pixel ("
               << i / raster.width << "," << i % raster.width << ") is not a class id";
            throw DecodeError(os.str());
        }
    }
    try {
        return SemanticMap(raster.width, raster.height, std::move(raster.pixels));
    } catch (const InvalidMap& e) {
        throw DecodeError(path.string() + ": " + e.message());
    }
}

void encode_label_mask(const SemanticMap& map, const std::filesystem::path& path) {
    write_png(path, Raster8{map.width(), map.height(), 1, map.labels()});
}

SemanticMap load_any_mask(const std::filesystem::path& path) {
    Raster8 raster = read_png(path);
    if (raster.channels == 3) return decode_color_raster(raster);
    for (auto v : raster.pixels)
        if (v >= kNumLabels) throw DecodeError(path.string() + ": label value out of range");
    try {
        return SemanticMap(raster.width, raster.height, std::move(raster.pixels));
    } catch (const InvalidMap& e) {
        throw DecodeError(path.string() + ": " + e.message());
    }
}

SemanticMap reassign_corners(const SemanticMap& map, const FOVSpec& fov) {
    fov.validate(map.width(), map.height());
    SemanticMap out = map;
    for (int r = 0; r < map.height(); ++r)
        for (int c = 0; c < map.width(); ++c)
            if (!fov.contains_pixel(r, c)) out.set(r, c, Label::Blank);
    return out;
}

MaskBundle split_channels(const SemanticMap& map) {
    MaskBundle bundle{indicator(map, Label::Dark), indicator(map, Label::Clean),
                      indicator(map, Label::Floats), map};
    return bundle;
}

void write_binary_mask(const BinaryMask& mask, const std::filesystem::path& path) {
    Raster8 raster{mask.width, mask.height, 1, {}};
    raster.pixels.resize(mask.bits.size());
    std::transform(mask.bits.begin(), mask.bits.end(), raster.pixels.begin(),
                   [](std::uint8_t b) { return static_cast<std::uint8_t>(b ? 255 : 0); });
    write_png(path, raster);
}

SemanticMap resample_nearest(const SemanticMap& map, int width, int height) {
    if (width == map.width() && height == map.height()) return map;
    SemanticMap out(width, height);
    for (int r = 0; r < height; ++r) {
        const int sr = std::min(map.height() - 1, static_cast<int>((r + 0.5) * map.height() / height));
        for (int c = 0; c < width; ++c) {
            const int sc = std::min(map.width() - 1, static_cast<int>((c + 0.5) * map.width() / width));
            out.set(r, c, map.at(sr, sc));
        }
    }
    return out;
}

namespace {

// Smooth random field over the disk interior: a sum of isotropic Gaussian
// bumps centered at random interior pixels.
std::vector<double> bump_field(const std::vector<int>& interior, int width, int min_side,
                               int bumps, Rng& rng) {
    std::vector<double> field(interior.size(), 0.0);
    for (int b = 0; b < bumps; ++b) {
        const int anchor = interior[rng.uniform_int(0, static_cast<int>(interior.size()) - 1)];
        const double cx = anchor % width + 0.5, cy = anchor / width + 0.5;
        const double sigma = min_side * rng.uniform(0.08, 0.22);
        const double amp = rng.uniform(0.6, 1.0);
        const double inv = 1.0 / (2.0 * sigma * sigma);
        for (std::size_t i = 0; i < interior.size(); ++i) {
            const double x = interior[i] % width + 0.5, y = interior[i] / width + 0.5;
            field[i] += amp * std::exp(-((x - cx) * (x - cx) + (y - cy) * (y - cy)) * inv);
        }
    }
    return field;
}

// Marks the `count` highest-field pixels among those still clean.
void assign_top(SemanticMap& map, const std::vector<int>& interior,
                const std::vector<double>& field, std::size_t count, Label label) {
    std::vector<std::size_t> order(interior.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return field[a] > field[b]; });
    const int w = map.width();
    std::size_t placed = 0;
    for (std::size_t idx : order) {
        if (placed == count) break;
        const int p = interior[idx];
        if (map.at(p / w, p % w) != Label::Clean) continue;
        map.set(p / w, p % w, label);
        ++placed;
    }
}

}  // namespace

SemanticMap synth_mask(const SynthMaskSpec& spec, std::uint64_t seed) {
    const auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!in_unit(spec.clean) || !in_unit(spec.dark) || !in_unit(spec.floats))
        throw InfeasibleSpec("class fractions must lie in [0, 1]");
    if (spec.clean + spec.dark + spec.floats > 1.0 + 1e-9) {
        std::ostringstream os;
        os << "class fractions sum to " << spec.clean + spec.dark + spec.floats << " > 1";
        throw InfeasibleSpec(os.str());
    }
    for (const auto* range : {&spec.dark_blobs, &spec.floats_blobs})
        if (range->min < 0 || range->max < range->min)
            throw InfeasibleSpec("blob count range must satisfy 0 <= min <= max");

    const int w = spec.width, h = spec.height;
    SemanticMap map(w, h, Label::Blank);
    Rng rng(stream_key(seed, 0, 0x5EED'3A5Cull));
    const int min_side = std::min(w, h);
    const FOVSpec fov{w / 2.0 + rng.uniform(-0.03, 0.03) * w, h / 2.0 + rng.uniform(-0.03, 0.03) * h,
                      min_side * rng.uniform(0.47, 0.54)};

    std::vector<int> interior;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            if (fov.contains_pixel(r, c)) {
                map.set(r, c, Label::Clean);
                interior.push_back(r * w + c);
            }

    const auto n = static_cast<double>(interior.size());
    const auto dark_count = static_cast<std::size_t>(std::llround(spec.dark * n));
    const auto floats_count = static_cast<std::size_t>(std::llround(spec.floats * n));

    const int dark_bumps = std::max(1, rng.uniform_int(spec.dark_blobs.min, spec.dark_blobs.max));
    const auto dark_field = bump_field(interior, w, min_side, dark_bumps, rng);
    const int float_bumps =
        std::max(1, rng.uniform_int(spec.floats_blobs.min, spec.floats_blobs.max));
    const auto float_field = bump_field(interior, w, min_side, float_bumps, rng);

    if (dark_count > 0) assign_top(map, interior, dark_field, dark_count, Label::Dark);
    if (floats_count > 0) assign_top(map, interior, float_field, floats_count, Label::Floats);
    return map;
}

double nonblank_fraction(const SemanticMap& map, Label label) {
    const auto hist = map.histogram();
    const std::size_t nonblank = map.size() - hist[0];
    if (nonblank == 0) return 0.0;
    return static_cast<double>(hist[static_cast<int>(label)]) / static_cast<double>(nonblank);
}

}  // namespace wce
