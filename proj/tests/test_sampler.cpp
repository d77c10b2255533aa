#include "doctest_torch.hpp"

#include <sstream>

#include "support.hpp"
#include "wcegen/dataset.hpp"
#include "wcegen/errors.hpp"
#include "wcegen/sampler.hpp"
#include "wcegen/trainer.hpp"

using namespace wce;
namespace fs = std::filesystem;

namespace {

// A briefly trained tiny model pair on 16×16 toy data, written to `dir`.
void write_tiny_checkpoints(const fs::path& dir) {
    std::vector<Sample> samples;
    for (std::size_t i = 0; i < 8; ++i) samples.push_back(toy_item({}, 4, i, 16));
    const TrainingSet data = to_training_set(samples);
    auto ae = build_autoencoder(testing::tiny_ae(2), 3);
    ae->eval();
    save_autoencoder(dir / "ae.ckpt", ae, 3, 0, 16);
    TrainConfig cfg;
    cfg.image_size = 16;
    cfg.ae.model = testing::tiny_ae(2);
    cfg.unet = testing::tiny_unet(2);
    cfg.schedule.T = 30;
    cfg.batch_size = 4;
    cfg.steps = 2;
    cfg.checkpoint_every = 100;
    cfg.out_dir = dir;
    train_ldm(cfg, echo_config(cfg), ae, data);
}

SemanticMap small_mask(std::uint64_t seed, int size = 16) {
    SynthMaskSpec spec;
    spec.width = spec.height = size;
    return synth_mask(spec, seed);
}

}  // namespace

TEST_CASE("seed lists") {
    CHECK(parse_seed_list("1..6") == std::vector<std::uint64_t>{1, 2, 3, 4, 5, 6});
    CHECK(parse_seed_list("7,7") == std::vector<std::uint64_t>{7, 7});
    CHECK(parse_seed_list("1..2,9") == std::vector<std::uint64_t>{1, 2, 9});
    CHECK_THROWS_AS(parse_seed_list(""), UsageError);
    CHECK_THROWS_AS(parse_seed_list("3..1"), UsageError);
    CHECK_THROWS_AS(parse_seed_list("a"), UsageError);
}

TEST_CASE("sheet geometry") {
    const int cell = 16;
    std::vector<SemanticMap> masks;
    std::vector<std::vector<RgbImage>> cols;
    for (int m = 0; m < 5; ++m) {
        masks.push_back(small_mask(m));
        cols.emplace_back(6, RgbImage(cell, cell, 0.5f));
    }
    const RgbImage sheet = compose_sheet(masks, cols, cell);
    CHECK(sheet.width == 5 * cell);
    CHECK(sheet.height == 7 * cell);
    // Top row carries the color-coded masks: pixel (0,0) of each is a blank corner.
    for (int m = 0; m < 5; ++m) CHECK(sheet.at(0, m * cell, 0) == doctest::Approx(222 / 255.0));
    CHECK(sheet.at(cell + 3, 3, 1) == doctest::Approx(0.5));

    const RgbImage one = compose_sheet({small_mask(1)}, {{RgbImage(cell, cell)}}, cell);
    CHECK(one.width == cell);
    CHECK(one.height == 2 * cell);
}

TEST_CASE("empty mask list is a usage error and writes nothing") {
    testing::TempDir dir;
    CHECK_THROWS_AS(make_sheet({}, dir / "none.ckpt", dir / "none.ckpt", 6, dir / "sheet.png"), UsageError);
    CHECK_FALSE(fs::exists(dir / "sheet.png"));
}

TEST_CASE("mask preparation") {
    std::ostringstream warn;
    GenerateOptions o;
    o.warn = &warn;
    const SemanticMap big = small_mask(3, 32);
    const SemanticMap m = prepare_mask(big, 16, o);
    CHECK(m.width() == 16);
    CHECK(warn.str().find("nearest") != std::string::npos);
    CHECK(m.at(0, 0) == Label::Blank);
    o.allow_resample = false;
    CHECK_THROWS_AS(prepare_mask(big, 16, o), ResolutionMismatch);
    CHECK_NOTHROW(prepare_mask(small_mask(3), 16, o));
}

TEST_CASE("generation determinism, distinctness and outputs") {
    testing::TempDir dir;
    write_tiny_checkpoints(dir.path());
    encode_color_mask(small_mask(5), dir / "mask.png");

    const auto r = generate(dir / "ldm.ckpt", dir / "ae.ckpt", dir / "mask.png", {7, 7}, dir / "twins");
    REQUIRE(r.files.size() == 2);
    CHECK(r.files[0] == r.files[1]);
    CHECK(r.images[0] == r.images[1]);

    const auto six = generate(dir / "ldm.ckpt", dir / "ae.ckpt", dir / "mask.png", {1, 2, 3, 4, 5, 6}, dir / "six");
    REQUIRE(six.images.size() == 6);
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = i + 1; j < 6; ++j) CHECK_FALSE(six.images[i] == six.images[j]);
    CHECK(fs::exists(dir / "six" / "sheet.png"));
    const Raster8 sheet = read_png(dir / "six" / "sheet.png");
    CHECK(sheet.width == 16);
    CHECK(sheet.height == 7 * 16);
    CHECK(fs::exists(dir / "six" / "run_manifest.json"));

    // Batch composition does not change a seed's image.
    SamplerModel gen = load_generator(dir / "ldm.ckpt", dir / "ae.ckpt");
    const SemanticMap m = prepare_mask(dir / "mask.png", 16);
    const auto batched = generate_images(gen, std::vector<SemanticMap>{m, m}, {3, 4});
    const auto alone = generate_images(gen, m, {4});
    CHECK((image_to_tensor(batched[1]) - image_to_tensor(alone[0])).abs().max().item<float>() <= 1.0f / 255.0f);

    GenerateOptions fast;
    fast.steps = 5;
    const auto few = generate(dir / "ldm.ckpt", dir / "ae.ckpt", dir / "mask.png", {1}, dir / "few", fast);
    CHECK(few.images.size() == 1);
    fast.steps = 31;
    CHECK_THROWS_AS(generate(dir / "ldm.ckpt", dir / "ae.ckpt", dir / "mask.png", {1}, dir / "bad", fast), BadRange);

    const RgbImage s = make_sheet({dir / "mask.png", dir / "mask.png"}, dir / "ldm.ckpt", dir / "ae.ckpt", 2,
                                  dir / "grid.png");
    CHECK(s.width == 32);
    CHECK(s.height == 48);
    CHECK(fs::exists(dir / "grid.png"));
}
