#include "wcegen/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "wcegen/errors.hpp"
#include "wcegen/rng.hpp"

namespace fs = std::filesystem;

namespace wce {
namespace {

constexpr std::uint64_t kDatasetDomain = 0xDA7A'5E7ull;

std::string item_id(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "toy_%06zu", index);
    return buf;
}

bool is_image_file(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

Sample load_pair(const std::string& id, const fs::path& image_path, const fs::path& mask_path,
                 const LoadOptions& options) {
    if (!fs::exists(mask_path)) throw MissingMask(id + " (expected " + mask_path.string() + ")");
    RgbImage image = from_raster(read_image(image_path));
    SemanticMap map = load_label_mask(mask_path);
    if (options.target_size) {
        const int s = *options.target_size;
        image = resize(image, s, s);
        map = resample_nearest(map, s, s);
    }
    if (image.width != map.width() || image.height != map.height()) {
        std::ostringstream os;
        os << id << ": image " << image.width << "x" << image.height << " vs mask " << map.width()
           << "x" << map.height();
        throw ShapeMismatch(os.str());
    }
    MaskBundle bundle = split_channels(map);
    try {
        bundle.validate();
    } catch (const InvalidMap& e) {
        throw InvalidMap(id + ": " + e.message());
    }
    return Sample{std::move(image), std::move(bundle), id};
}

}  // namespace

std::uint64_t toy_item_seed(std::uint64_t seed, std::size_t index) {
    return stream_key(seed, index, kDatasetDomain);
}

Sample toy_item(const ToyRenderSpec& spec, std::uint64_t seed, std::size_t index, int size) {
    const std::uint64_t item_seed = toy_item_seed(seed, index);
    const SemanticMap map = synth_mask(toy_mask_spec(item_seed, size), item_seed);
    return render_toy(map, spec, item_seed, item_id(index));
}

Manifest make_toy_dataset(std::size_t n, const fs::path& out_dir, const ToyRenderSpec& spec,
                          std::uint64_t seed, int size) {
    if (n < 1) throw ConfigError("toy dataset needs n >= 1");
    spec.validate();
    fs::create_directories(out_dir / "images");
    fs::create_directories(out_dir / "masks");
    Manifest manifest;
    manifest.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Sample s = toy_item(spec, seed, i, size);
        write_png(out_dir / "images" / (s.id + ".png"), to_raster(s.image));
        encode_label_mask(s.bundle.all, out_dir / "masks" / (s.id + ".png"));
        manifest.push_back({s.id, toy_item_seed(seed, i)});
    }
    std::ofstream os(out_dir / "manifest.tsv", std::ios::binary);
    if (!os) throw IoError("cannot write " + (out_dir / "manifest.tsv").string());
    os << "id\tseed\n";
    for (const auto& e : manifest) os << e.id << '\t' << e.seed << '\n';
    if (!os) throw IoError("write failed: " + (out_dir / "manifest.tsv").string());
    return manifest;
}

Manifest read_manifest(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot read " + path.string());
    std::string line;
    if (!std::getline(is, line) || line != "id\tseed") throw FormatError(path.string() + ": bad header");
    Manifest out;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) throw FormatError(path.string() + ": malformed row '" + line + "'");
        try {
            out.push_back({line.substr(0, tab), std::stoull(line.substr(tab + 1))});
        } catch (const std::logic_error&) {
            throw FormatError(path.string() + ": bad seed in row '" + line + "'");
        }
    }
    return out;
}

std::vector<Sample> load_folder(const fs::path& root, FolderLayout layout, const LoadOptions& options) {
    if (!fs::is_directory(root)) throw IoError(root.string() + " is not a directory");
    // id -> image path, ordered lexicographically by id.
    std::map<std::string, fs::path> images;
    const auto add = [&](const fs::path& p) {
        if (!is_image_file(p)) return;
        const std::string id = p.stem().string();
        if (!images.emplace(id, p).second)
            throw ConfigError("duplicate image id '" + id + "' under " + root.string());
    };
    if (layout == FolderLayout::Paired) {
        const fs::path dir = root / "images";
        if (fs::is_directory(dir))
            for (const auto& entry : fs::directory_iterator(dir))
                if (entry.is_regular_file()) add(entry.path());
    } else {
        const fs::path dir = root / "labelled_images";
        if (fs::is_directory(dir))
            for (const auto& entry : fs::recursive_directory_iterator(dir))
                if (entry.is_regular_file()) add(entry.path());
    }
    if (images.empty()) throw EmptyDataset("no images found under " + root.string());

    std::vector<Sample> out;
    out.reserve(images.size());
    for (const auto& [id, path] : images)
        out.push_back(load_pair(id, path, root / "masks" / (id + ".png"), options));
    return out;
}

}  // namespace wce
