#include "doctest_torch.hpp"

#include <map>

#include "support.hpp"
#include "wcegen/dataset.hpp"
#include "wcegen/errors.hpp"
#include "wcegen/toy.hpp"

using namespace wce;
namespace fs = std::filesystem;

namespace {

struct RegionStats {
    double mean = 0.0;
    double local_var = 0.0;
    double max_lum = 0.0;
    long n = 0;
};

// Independent region statistics: plain loops, 3×3 windows clipped at borders.
std::map<Label, RegionStats> region_stats(const RgbImage& img, const SemanticMap& map) {
    const auto lum = [&](int i, int j) {
        const double r = img.data[(i * img.width + j) * 3], g = img.data[(i * img.width + j) * 3 + 1],
                     b = img.data[(i * img.width + j) * 3 + 2];
        return 0.2126 * r + 0.7152 * g + 0.0722 * b;
    };
    std::map<Label, RegionStats> out;
    for (int i = 0; i < img.height; ++i)
        for (int j = 0; j < img.width; ++j) {
            double s = 0, s2 = 0;
            int k = 0;
            for (int di = -1; di <= 1; ++di)
                for (int dj = -1; dj <= 1; ++dj) {
                    const int y = i + di, x = j + dj;
                    if (y < 0 || x < 0 || y >= img.height || x >= img.width) continue;
                    s += lum(y, x);
                    s2 += lum(y, x) * lum(y, x);
                    ++k;
                }
            auto& r = out[map.at(i, j)];
            r.mean += lum(i, j);
            r.local_var += s2 / k - (s / k) * (s / k);
            r.max_lum = std::max(r.max_lum, lum(i, j));
            ++r.n;
        }
    for (auto& [label, r] : out) {
        r.mean /= static_cast<double>(r.n);
        r.local_var /= static_cast<double>(r.n);
    }
    return out;
}

}  // namespace

TEST_CASE("all-blank map renders near black") {
    const Sample s = render_toy(SemanticMap(32, 32), ToyRenderSpec{}, 4);
    double max_lum = 0;
    for (int i = 0; i < 32; ++i)
        for (int j = 0; j < 32; ++j) max_lum = std::max(max_lum, s.image.luminance(i, j));
    CHECK(max_lum < 0.05);
}

TEST_CASE("rendering is deterministic per seed") {
    const SemanticMap m = synth_mask({}, 2);
    CHECK(render_toy(m, {}, 9).image == render_toy(m, {}, 9).image);
    CHECK_FALSE(render_toy(m, {}, 9).image == render_toy(m, {}, 10).image);
}

TEST_CASE("rendered region statistics hold for many synth maps") {
    const ToyRenderSpec spec;
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const SemanticMap m = synth_mask({}, seed);
        const Sample s = render_toy(m, spec, seed);
        auto st = region_stats(s.image, m);
        REQUIRE(st.count(Label::Dark));
        REQUIRE(st.count(Label::Floats));
        CHECK(st[Label::Dark].mean < spec.dark_max_luminance);
        CHECK(st[Label::Clean].mean > st[Label::Dark].mean + 0.2);
        CHECK(st[Label::Floats].local_var > st[Label::Clean].local_var);
        CHECK(st[Label::Blank].max_lum < 0.05);
    }
}

TEST_CASE("render spec validation") {
    ToyRenderSpec bad;
    bad.dark_max_luminance = 0.9;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    CHECK_NOTHROW(ToyRenderSpec{}.validate());
}

TEST_CASE("toy dataset of one item") {
    testing::TempDir dir;
    const Manifest m = make_toy_dataset(1, dir.path(), {}, 7);
    CHECK(m.size() == 1);
    CHECK(std::distance(fs::directory_iterator(dir / "images"), fs::directory_iterator{}) == 1);
    CHECK(std::distance(fs::directory_iterator(dir / "masks"), fs::directory_iterator{}) == 1);
    CHECK((read_manifest(dir / "manifest.tsv") == m));
}

TEST_CASE("toy dataset is byte-reproducible and sorted") {
    testing::TempDir a("a"), b("b");
    const Manifest ma = make_toy_dataset(256, a.path(), {}, 7);
    make_toy_dataset(256, b.path(), {}, 7);
    for (auto it = fs::recursive_directory_iterator(a.path()); it != fs::recursive_directory_iterator{}; ++it) {
        if (!it->is_regular_file()) continue;
        const auto rel = fs::relative(it->path(), a.path());
        REQUIRE(fs::exists(b.path() / rel));
        CHECK(testing::read_bytes(it->path()) == testing::read_bytes(b.path() / rel));
    }
    for (std::size_t i = 1; i < ma.size(); ++i) CHECK(ma[i - 1].id < ma[i].id);
}

TEST_CASE("loaded toy images equal rendered images") {
    testing::TempDir dir;
    make_toy_dataset(6, dir.path(), {}, 3, 32);
    const auto samples = load_folder(dir.path(), FolderLayout::Paired);
    REQUIRE(samples.size() == 6);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const Sample ref = toy_item({}, 3, i, 32);
        CHECK(samples[i].id == ref.id);
        CHECK(samples[i].image == ref.image);
        CHECK(samples[i].bundle.all == ref.bundle.all);
    }
}

TEST_CASE("paired folder loading order and errors") {
    testing::TempDir dir;
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "masks");
    const Sample s = toy_item({}, 1, 0, 16);
    for (const std::string id : {"c", "a", "b"}) {
        write_png(dir.path() / "images" / (id + ".png"), to_raster(s.image));
        encode_label_mask(s.bundle.all, dir.path() / "masks" / (id + ".png"));
    }
    const auto loaded = load_folder(dir.path(), FolderLayout::Paired);
    REQUIRE(loaded.size() == 3);
    CHECK(loaded[0].id == "a");
    CHECK(loaded[1].id == "b");
    CHECK(loaded[2].id == "c");

    write_png(dir.path() / "images" / "d.png", to_raster(s.image));
    try {
        load_folder(dir.path(), FolderLayout::Paired);
        FAIL("expected MissingMask");
    } catch (const MissingMask& e) {
        CHECK(std::string(e.what()).find("d") != std::string::npos);
    }
    encode_label_mask(SemanticMap(8, 8), dir.path() / "masks" / "d.png");
    CHECK_THROWS_AS(load_folder(dir.path(), FolderLayout::Paired), ShapeMismatch);
}

TEST_CASE("invalid mask ids abort ingestion naming the sample") {
    testing::TempDir dir;
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "masks");
    const Sample s = toy_item({}, 1, 0, 16);
    write_png(dir.path() / "images" / "bad_one.png", to_raster(s.image));
    write_png(dir.path() / "masks" / "bad_one.png", Raster8{16, 16, 1, std::vector<std::uint8_t>(256, 9)});
    try {
        load_folder(dir.path(), FolderLayout::Paired);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("bad_one") != std::string::npos);
    }
}

TEST_CASE("empty folder") {
    testing::TempDir dir;
    fs::create_directories(dir / "images");
    CHECK_THROWS_AS(load_folder(dir.path(), FolderLayout::Paired), EmptyDataset);
}

TEST_CASE("kvasir layout ignores finding folders") {
    testing::TempDir dir;
    fs::create_directories(dir / "labelled_images" / "Normal clean mucosa");
    fs::create_directories(dir / "labelled_images" / "Ulcer");
    fs::create_directories(dir / "masks");
    const Sample s = toy_item({}, 2, 0, 16);
    write_png(dir.path() / "labelled_images" / "Ulcer" / "f2.png", to_raster(s.image));
    write_png(dir.path() / "labelled_images" / "Normal clean mucosa" / "f1.png", to_raster(s.image));
    encode_label_mask(s.bundle.all, dir.path() / "masks" / "f1.png");
    encode_label_mask(s.bundle.all, dir.path() / "masks" / "f2.png");
    const auto loaded = load_folder(dir.path(), FolderLayout::Kvasir);
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0].id == "f1");
    CHECK(loaded[1].id == "f2");
}

TEST_CASE("target size resamples images and masks") {
    testing::TempDir dir;
    make_toy_dataset(2, dir.path(), {}, 3, 64);
    const auto loaded = load_folder(dir.path(), FolderLayout::Paired, {32});
    CHECK(loaded[0].image.width == 32);
    CHECK(loaded[0].bundle.all.width() == 32);
}
