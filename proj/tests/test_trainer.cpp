#include "doctest_torch.hpp"

#include "support.hpp"
#include "wcegen/archive.hpp"
#include "wcegen/config.hpp"
#include "wcegen/dataset.hpp"
#include "wcegen/errors.hpp"
#include "wcegen/manifest.hpp"
#include "wcegen/trainer.hpp"

using namespace wce;
namespace fs = std::filesystem;

namespace {

bool any_contains(const std::vector<std::string>& v, const std::string& needle) {
    return std::any_of(v.begin(), v.end(), [&](const std::string& s) { return s.find(needle) != std::string::npos; });
}

TrainConfig tiny_run(const fs::path& out_dir) {
    TrainConfig c;
    c.data_root = out_dir / "unused";
    c.image_size = 16;
    c.ae.model = testing::tiny_ae(2);
    c.unet = testing::tiny_unet(2);
    c.schedule.T = 50;
    c.batch_size = 4;
    c.steps = 6;
    c.checkpoint_every = 3;
    c.out_dir = out_dir;
    return c;
}

struct TinyWorld {
    TrainingSet data;
    Autoencoder ae{nullptr};
};

TinyWorld tiny_world() {
    std::vector<Sample> samples;
    for (std::size_t i = 0; i < 12; ++i) samples.push_back(toy_item({}, 4, i, 16));
    TinyWorld w;
    w.data = to_training_set(samples);
    w.ae = build_autoencoder(testing::tiny_ae(2), 3);
    w.ae->eval();
    return w;
}

std::vector<double> losses(const std::vector<LossRecord>& log) {
    std::vector<double> out;
    for (const auto& r : log) out.push_back(r.loss);
    return out;
}

}  // namespace

TEST_CASE("minimal config fills defaults") {
    const auto r = parse_config_text("config_version = 1\n[data]\nroot = \"toy\"\n", "/base");
    REQUIRE(r.ok());
    const TrainConfig& c = *r.config;
    CHECK(c.data_root == fs::path("/base/toy"));
    CHECK(c.image_size == 64);
    CHECK(c.schedule.T == 1000);
    CHECK(c.ema_decay == doctest::Approx(0.999));
    CHECK(c.unet.plan.encoder == InjectionPlan::standard(3).encoder);
    const std::string echo = echo_config(c);
    CHECK(echo.find("ema_decay = 0.999") != std::string::npos);
    const auto again = parse_config_text(echo, "/");
    REQUIRE(again.ok());
    CHECK(echo_config(*again.config) == echo);
}

TEST_CASE("ema_decay out of range names the field and the bound") {
    const auto r = parse_config_text("config_version = 1\n[data]\nroot = x\n[train]\nema_decay = 1.5\n");
    CHECK_FALSE(r.ok());
    CHECK(any_contains(r.violations, "train.ema_decay"));
    CHECK(any_contains(r.violations, "ema_decay < 1"));
}

TEST_CASE("plan length mismatch is a cross-field violation") {
    const auto r = parse_config_text(
        "config_version = 1\n[data]\nroot = x\n[unet]\nlevels = 3\nencoder = [\"d\", \"c\"]\n");
    CHECK_FALSE(r.ok());
    CHECK(any_contains(r.violations, "levels = 3"));
}

TEST_CASE("violations are aggregated") {
    const auto r = parse_config_text(
        "[data]\nimage_size = 30\n[train]\nsteps = 0\nbogus = 1\n[ae]\ndownsample_factor = 4\n");
    CHECK_FALSE(r.ok());
    CHECK(any_contains(r.violations, "config_version"));
    CHECK(any_contains(r.violations, "data.root"));
    CHECK(any_contains(r.violations, "train.steps"));
    CHECK(any_contains(r.violations, "bogus"));
    CHECK(any_contains(r.violations, "image_size = 30"));
    CHECK(r.violations.size() >= 5);
}

TEST_CASE("config paths resolve against the config file") {
    testing::TempDir dir;
    fs::create_directories(dir / "sub");
    testing::write_text(dir / "sub" / "run.cfg", "config_version = 1\n[data]\nroot = ../toy\n[train]\nout_dir = out\n");
    const auto r = validate_config(dir / "sub" / "run.cfg");
    REQUIRE(r.ok());
    CHECK(r.config->data_root == dir / "sub" / "../toy");
    CHECK(r.config->out_dir == dir / "sub" / "out");
    CHECK_FALSE(validate_config(dir / "missing.cfg").ok());
}

TEST_CASE("archive round trip") {
    Archive a("demo");
    a.put_text("note", "hello");
    a.put_int("n", -42);
    a.put_real("x", 0.125);
    a.put_blob("b", std::string("\0\1\2", 3));
    a.put_tensor("t", torch::arange(6, torch::kFloat32).view({2, 3}));
    const Archive b = Archive::deserialize(a.serialize(), "demo");
    CHECK(b.text("note") == "hello");
    CHECK(b.integer("n") == -42);
    CHECK(b.real("x") == 0.125);
    CHECK(b.blob("b") == std::string("\0\1\2", 3));
    CHECK(torch::equal(b.tensor("t"), a.tensor("t")));
    CHECK(a.serialize() == b.serialize());
    CHECK_THROWS_AS(Archive::deserialize(a.serialize(), "other"), FormatError);
    CHECK_THROWS_AS(b.text("absent"), FormatError);
}

TEST_CASE("damaged archives") {
    Archive a("demo");
    a.put_tensor("t", torch::ones({16}));
    const std::string bytes = a.serialize();
    for (std::size_t cut : {std::size_t{0}, std::size_t{5}, bytes.size() / 2, bytes.size() - 1})
        CHECK_THROWS_AS(Archive::deserialize(bytes.substr(0, cut)), FormatError);
    std::string flipped = bytes;
    flipped[bytes.size() / 2] ^= 0x40;
    CHECK_THROWS_AS(Archive::deserialize(flipped), FormatError);
    std::string newer = bytes;
    newer[8] = 9;
    CHECK_THROWS_AS(Archive::deserialize(newer), VersionError);
}

TEST_CASE("one step trains once and logs once") {
    testing::TempDir dir;
    auto w = tiny_world();
    TrainConfig cfg = tiny_run(dir.path());
    cfg.steps = 1;
    const auto r = train_ldm(cfg, echo_config(cfg), w.ae, w.data);
    CHECK(r.log.size() == 1);
    CHECK(r.final_step == 1);
    CHECK(fs::exists(dir / "ldm.ckpt"));
}

TEST_CASE("ema with zero decay tracks the raw weights") {
    testing::TempDir dir;
    auto w = tiny_world();
    TrainConfig cfg = tiny_run(dir.path());
    cfg.steps = 3;
    cfg.ema_decay = 0.0;
    TrainLdmOptions o;
    o.write_checkpoints = false;
    const auto r = train_ldm(cfg, echo_config(cfg), w.ae, w.data, o);
    CHECK(parameter_checksum(*r.ema) == parameter_checksum(*r.model));

    auto model = build_model(testing::tiny_unet(), 1);
    auto ema = build_model(testing::tiny_unet(), 1);
    CHECK(parameter_checksum(*ema) == parameter_checksum(*model));
    ema_update(*ema, *model, 0.999, 0);
    CHECK(parameter_checksum(*ema) == parameter_checksum(*model));
}

TEST_CASE("checkpoint round trip and mismatch errors") {
    testing::TempDir dir;
    auto w = tiny_world();
    TrainConfig cfg = tiny_run(dir.path());
    cfg.steps = 2;
    auto r = train_ldm(cfg, echo_config(cfg), w.ae, w.data);
    LdmCheckpoint ck = load_checkpoint(dir / "ldm.ckpt");
    CHECK(ck.step == 2);
    CHECK(ck.config_text == echo_config(cfg));
    const auto z = torch::randn({1, 2, 8, 8});
    const auto t = torch::tensor({7});
    const CondMaps c = w.data.cond.index(torch::tensor({0}));
    CHECK(torch::equal(ck.model->forward(z, t, c), r.model->forward(z, t, c)));
    CHECK(torch::equal(ck.ema->forward(z, t, c), r.ema->forward(z, t, c)));

    UNetConfig other = cfg.unet;
    other.base_channels = 16;
    try {
        load_checkpoint(dir / "ldm.ckpt", &other);
        FAIL("expected VersionError");
    } catch (const VersionError& e) {
        CHECK(std::string(e.what()).find("base_channels") != std::string::npos);
    }

    const std::string bytes = testing::read_bytes(dir / "ldm.ckpt");
    testing::write_text(dir / "cut.ckpt", bytes.substr(0, bytes.size() * 2 / 3));
    CHECK_THROWS_AS(load_checkpoint(dir / "cut.ckpt"), FormatError);
    CHECK_THROWS_AS(load_autoencoder(dir / "ldm.ckpt"), FormatError);
}

TEST_CASE("resume continues bit-identically") {
    testing::TempDir full("full"), staged("staged");
    auto w = tiny_world();
    const TrainConfig cfg_full = tiny_run(full.path());
    const auto ref = train_ldm(cfg_full, "same text", w.ae, w.data);

    const TrainConfig cfg_staged = tiny_run(staged.path());
    TrainLdmOptions first;
    first.stop_after = 3;
    const auto head = train_ldm(cfg_staged, "same text", w.ae, w.data, first);
    REQUIRE(head.log.size() == 3);
    TrainLdmOptions second;
    second.resume = staged / "ldm_step000003.ckpt";
    const auto tail = train_ldm(cfg_staged, "same text", w.ae, w.data, second);
    REQUIRE(tail.log.size() == 3);

    const auto all = losses(ref.log);
    CHECK(losses(head.log) == std::vector<double>(all.begin(), all.begin() + 3));
    CHECK(losses(tail.log) == std::vector<double>(all.begin() + 3, all.end()));
    CHECK(tail.log.front().step == 4);
    CHECK(parameter_checksum(*tail.model) == parameter_checksum(*ref.model));
    CHECK(parameter_checksum(*tail.ema) == parameter_checksum(*ref.ema));

    TrainLdmOptions wrong;
    wrong.resume = staged / "ldm_step000003.ckpt";
    CHECK_THROWS_AS(train_ldm(cfg_staged, "other text", w.ae, w.data, wrong), VersionError);
}

TEST_CASE("training is deterministic") {
    testing::TempDir a("a"), b("b");
    auto w = tiny_world();
    TrainLdmOptions o;
    o.write_checkpoints = false;
    const auto ra = train_ldm(tiny_run(a.path()), "x", w.ae, w.data, o);
    const auto rb = train_ldm(tiny_run(b.path()), "x", w.ae, w.data, o);
    CHECK(losses(ra.log) == losses(rb.log));
}

TEST_CASE("config-driven stages write logs and manifests") {
    testing::TempDir dir;
    make_toy_dataset(8, dir / "toy", {}, 2, 16);
    const std::string text =
        "config_version = 1\n[data]\nroot = toy\nimage_size = 16\n"
        "[ae]\ndownsample_factor = 2\nlatent_channels = 2\nhidden_widths = [8, 16]\nsteps = 3\nbatch_size = 4\n"
        "[unet]\nlevels = 2\nbase_channels = 8\nchannel_multipliers = [1, 2]\ntime_embed_dim = 32\n"
        "mask_embed_channels = 4\nnorm_groups = 4\n"
        "[schedule]\nT = 20\n[train]\nbatch_size = 4\nsteps = 2\ncheckpoint_every = 1\nout_dir = run\n";
    testing::write_text(dir / "run.cfg", text);
    const auto report = validate_config(dir / "run.cfg");
    REQUIRE(report.ok());
    const fs::path ae = train_ae_stage(*report.config, report.raw_text);
    CHECK(fs::exists(ae));
    CHECK(fs::exists(dir / "run" / "ae_log.tsv"));
    const auto r = train_ldm(*report.config, report.raw_text, ae);
    CHECK(fs::exists(dir / "run" / "ldm_step000001.ckpt"));
    CHECK(fs::exists(dir / "run" / "ldm_step000002.ckpt"));
    const RunManifest m = read_run_manifest(dir / "run");
    CHECK(m.command == "train ldm");
    CHECK(m.config_hash == sha256_hex(text));
    CHECK(m.dataset_hash == sha256_file(dir / "toy" / "manifest.tsv"));
    CHECK(m.seeds == std::vector<std::uint64_t>{7});
    CHECK(load_checkpoint(dir / "run" / "ldm.ckpt").config_text == text);
}

TEST_CASE("sha256 known answer") {
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("smoothing and batch schedule") {
    const auto s = smooth({1, 2, 3, 4}, 2);
    CHECK(s == std::vector<double>{1, 1.5, 2.5, 3.5});
    CHECK(torch::equal(batch_indices(3, 17, 8, 20), batch_indices(3, 17, 8, 20)));
    const auto epoch = batch_indices(3, 0, 20, 20);
    CHECK(std::get<0>(torch::sort(epoch)).equal(torch::arange(20)));
}
