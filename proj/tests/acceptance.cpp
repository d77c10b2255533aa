// Acceptance run: one PASS/FAIL line per criterion. A4 trains the desk-scale
// model that A5-A7 and A10 then use.

#include <CLI11.hpp>
#include <torch/torch.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "wcegen/config.hpp"
#include "wcegen/dataset.hpp"
#include "wcegen/eval.hpp"
#include "wcegen/sampler.hpp"
#include "wcegen/trainer.hpp"
#include "wcegen/vtt.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace wce;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
    bool pass;
    std::string detail;
};

int failures = 0;

void report(const char* id, const char* title, const Verdict& v) {
    std::cout << id << ' ' << (v.pass ? "PASS" : "FAIL") << "  " << title << ": " << v.detail << std::endl;
    if (!v.pass) ++failures;
}

template <typename F>
void criterion(const char* id, const char* title, F&& body) {
    try {
        report(id, title, body());
    } catch (const std::exception& e) {
        report(id, title, {false, std::string("exception: ") + e.what()});
    }
}

std::string fmt(double v, int precision = 4) {
    std::ostringstream os;
    os << std::setprecision(precision) << v;
    return os.str();
}

const auto kF64 = torch::TensorOptions().dtype(torch::kFloat64);

// ---- A1 ----------------------------------------------------------------------

Verdict schedule_correctness() {
    const auto t0 = Clock::now();
    const int T = 1000;
    const double bs = 1e-4, be = 0.02;
    const auto s = make_schedule(T, bs, be);
    double product = 1.0;
    for (int t = 1; t <= T; ++t) product *= 1.0 - (bs + (be - bs) * (t - 1) / (T - 1));
    bool decreasing = true;
    for (int t = 2; t <= T; ++t) decreasing &= s.alpha_bar(t) < s.alpha_bar(t - 1);
    const double err = std::abs(s.alpha_bar(T) - product);
    const double secs = seconds_since(t0);
    return {err < 1e-10 && decreasing && secs < 1.0,
            "|alpha_bar_T - product| = " + fmt(err) + ", strictly decreasing = " + (decreasing ? "yes" : "no") +
                ", " + fmt(secs, 3) + " s"};
}

// ---- A2 ----------------------------------------------------------------------

Verdict forward_marginal() {
    const auto t0 = Clock::now();
    const auto s = make_schedule(1000, 1e-4, 0.02);
    int t = 1;
    for (int k = 1; k <= s.T(); ++k)
        if (std::abs(s.alpha_bar(k) - 0.25) < std::abs(s.alpha_bar(t) - 0.25)) t = k;
    const double ab = s.alpha_bar(t);
    auto gen = make_generator(2024);
    const auto z0 = torch::randn({1, 4, 16, 16}, gen, kF64);
    const int64_t n = 10000;
    const auto eps = torch::randn({n, 4, 16, 16}, gen, kF64);
    const auto z = q_sample(z0.expand({n, 4, 16, 16}), t, eps, s);
    const auto target = std::sqrt(ab) * z0[0];
    const double mean_err = ((z.mean(0) - target).pow(2).mean().sqrt() / target.pow(2).mean().sqrt()).item<double>();
    const double sd = std::sqrt(1.0 - ab);
    const double std_err = ((z.std(0) - sd) / sd).pow(2).mean().sqrt().item<double>();
    const double secs = seconds_since(t0);
    return {mean_err < 0.02 && std_err < 0.02 && secs < 60.0,
            "t = " + std::to_string(t) + " (alpha_bar " + fmt(ab) + "), relative RMS mean error " + fmt(mean_err) +
                ", std error " + fmt(std_err) + ", " + fmt(secs, 3) + " s"};
}

// ---- A3 ----------------------------------------------------------------------

Verdict gradient_check() {
    const auto t0 = Clock::now();
    auto model = build_model(testing::tiny_unet(2), 31);
    model->to(torch::kFloat64);
    const auto eps_model = as_eps_model(model);
    auto gen = make_generator(5);
    const auto z0 = torch::randn({2, 2, 8, 8}, gen, kF64);
    SynthMaskSpec spec;
    spec.width = spec.height = 32;
    const CondMaps cond =
        concat({cond_from_bundle(split_channels(synth_mask(spec, 1))), cond_from_bundle(split_channels(synth_mask(spec, 2)))})
            .to(torch::kFloat64);
    const auto sched = make_schedule(200, 1e-4, 0.02);
    const auto loss = [&] {
        auto g = make_generator(99);
        return ddpm_loss(eps_model, z0, cond, sched, g);
    };
    const auto r = testing::finite_difference_check(*model, loss, 256, 17);
    const double secs = seconds_since(t0);
    return {r.checked >= 200 && r.max_rel_error < 1e-3 && secs < 300.0,
            std::to_string(r.checked) + " parameters, max relative error " + fmt(r.max_rel_error) + ", " +
                fmt(secs, 3) + " s"};
}

// ---- A4 ----------------------------------------------------------------------

struct TrainedModel {
    fs::path root;
    fs::path ae;
    fs::path ldm;
    fs::path toy;
};

const char* kRunConfig =
    "config_version = 1\n"
    "\n"
    "[data]\n"
    "root = \"toy\"\n"
    "image_size = 64\n"
    "\n"
    "[ae]\n"
    "steps = 2000\n"
    "batch_size = 16\n"
    "\n"
    "[schedule]\n"
    "T = 200\n"
    "\n"
    "[train]\n"
    "steps = 2000\n"
    "batch_size = 32\n"
    "learning_rate = 0.0002\n"
    "checkpoint_every = 500\n"
    "out_dir = \"run\"\n";

std::vector<double> read_losses(const fs::path& log) {
    std::ifstream is(log);
    std::string line;
    std::getline(is, line);
    std::vector<double> out;
    while (std::getline(is, line)) {
        std::istringstream row(line);
        int step;
        double loss;
        row >> step >> loss;
        out.push_back(loss);
    }
    return out;
}

Verdict desk_training(TrainedModel& m, bool reuse) {
    m.root = m.root.empty() ? fs::path("acceptance_work") : m.root;
    m.toy = m.root / "toy";
    m.ae = m.root / "run" / "ae.ckpt";
    m.ldm = m.root / "run" / "ldm.ckpt";
    const bool cached = reuse && fs::exists(m.ldm) && fs::exists(m.ae);
    double secs = 0.0;
    if (!cached) {
        const auto t0 = Clock::now();
        fs::remove_all(m.root);
        fs::create_directories(m.root);
        make_toy_dataset(2048, m.toy, ToyRenderSpec{}, 7, 64);
        testing::write_text(m.root / "run.cfg", kRunConfig);
        const ConfigReport report = validate_config(m.root / "run.cfg");
        if (!report.ok()) return {false, "config rejected: " + report.violations.front()};
        const fs::path ae = train_ae_stage(*report.config, report.raw_text);
        train_ldm(*report.config, report.raw_text, ae);
        secs = seconds_since(t0);
    }
    const auto losses = read_losses(m.root / "run" / "ldm_log.tsv");
    if (losses.size() < 2000) return {false, "log has " + std::to_string(losses.size()) + " records"};
    const auto s = smooth(losses, 100);
    const double early = s[99], late = s.back();
    const bool fast = cached || secs <= 45 * 60.0;
    return {late < 0.5 * early && fast,
            "smoothed loss step 100 = " + fmt(early) + ", step 2000 = " + fmt(late) + " (ratio " + fmt(late / early) +
                "), " + (cached ? std::string("reused checkpoint, timing not measured") : fmt(secs / 60.0, 3) + " min")};
}

// ---- A5 / A6 -------------------------------------------------------------------

std::vector<SemanticMap> held_out_masks(std::size_t n) {
    std::vector<SemanticMap> out;
    for (std::size_t k = 0; k < n; ++k) out.push_back(reassign_corners(synth_mask({}, 900001 + k), FOVSpec::inscribed(64, 64)));
    return out;
}

SemanticMap swap_dark_clean(const SemanticMap& m) {
    SemanticMap out = m;
    for (int i = 0; i < m.height(); ++i)
        for (int j = 0; j < m.width(); ++j) {
            if (m.at(i, j) == Label::Dark) out.set(i, j, Label::Clean);
            else if (m.at(i, j) == Label::Clean) out.set(i, j, Label::Dark);
        }
    return out;
}

double region_mean(const RgbImage& img, const SemanticMap& m, Label l) {
    double s = 0;
    long n = 0;
    for (int i = 0; i < m.height(); ++i)
        for (int j = 0; j < m.width(); ++j)
            if (m.at(i, j) == l) {
                s += img.luminance(i, j);
                ++n;
            }
    return n ? s / static_cast<double>(n) : 0.0;
}

void save_images(const std::vector<RgbImage>& images, const fs::path& dir, const std::string& prefix) {
    fs::create_directories(dir);
    for (std::size_t i = 0; i < images.size(); ++i)
        write_png(dir / (prefix + "_" + std::to_string(i) + ".png"), to_raster(images[i]));
}

Verdict mask_adherence(SamplerModel& gen, const fs::path& fake_dir) {
    const auto t0 = Clock::now();
    const auto masks = held_out_masks(8);
    int pass = 0, total = 0, dc = 0, ft = 0, bd = 0;
    for (std::size_t k = 0; k < masks.size(); ++k) {
        std::vector<std::uint64_t> seeds;
        for (std::uint64_t s = 1; s <= 8; ++s) seeds.push_back(1000 * (k + 1) + s);
        const auto images = generate_images(gen, std::vector<SemanticMap>(8, masks[k]), seeds);
        save_images(images, fake_dir, "a5_m" + std::to_string(k));
        for (const auto& img : images) {
            const auto r = adherence_report(img, masks[k]);
            pass += r.all_pass();
            dc += r.dark_clean.value_or(true);
            ft += r.floats_texture.value_or(true);
            bd += r.blank_dark.value_or(true);
            ++total;
        }
    }
    const double rate = static_cast<double>(pass) / total;
    return {rate >= 0.8, std::to_string(pass) + "/" + std::to_string(total) + " samples pass all rules (" +
                             fmt(100 * rate, 3) + "%); per rule dark/clean " + std::to_string(dc) + ", floats texture " +
                             std::to_string(ft) + ", blank " + std::to_string(bd) + "; " + fmt(seconds_since(t0), 3) +
                             " s"};
}

Verdict conditioning_sensitivity(SamplerModel& gen, const fs::path& fake_dir) {
    const auto t0 = Clock::now();
    const auto masks = held_out_masks(8);
    int flipped = 0, total = 0;
    for (std::size_t k = 0; k < masks.size(); ++k) {
        const SemanticMap swapped = swap_dark_clean(masks[k]);
        std::vector<std::uint64_t> seeds;
        for (std::uint64_t s = 1; s <= 4; ++s) seeds.push_back(5000 + 10 * k + s);
        std::vector<SemanticMap> maps(4, masks[k]);
        maps.insert(maps.end(), 4, swapped);
        std::vector<std::uint64_t> both = seeds;
        both.insert(both.end(), seeds.begin(), seeds.end());
        const auto images = generate_images(gen, maps, both);
        save_images(images, fake_dir, "a6_m" + std::to_string(k));
        for (int i = 0; i < 4; ++i) {
            // Regions are those of the original mask in both images.
            const bool before = region_mean(images[i], masks[k], Label::Dark) < region_mean(images[i], masks[k], Label::Clean);
            const bool after =
                region_mean(images[4 + i], masks[k], Label::Dark) > region_mean(images[4 + i], masks[k], Label::Clean);
            flipped += before && after;
            ++total;
        }
    }
    const double rate = static_cast<double>(flipped) / total;
    return {rate >= 0.8, std::to_string(flipped) + "/" + std::to_string(total) + " pairs flip the dark/clean ordering (" +
                             fmt(100 * rate, 3) + "%), " + fmt(seconds_since(t0), 3) + " s"};
}

// ---- A7 ----------------------------------------------------------------------

Verdict injection_order(const TrainedModel& m) {
    LdmCheckpoint ck = load_checkpoint(m.ldm);
    auto model = ck.ema;
    torch::NoGradGuard no_grad;
    auto gen = make_generator(71);
    const auto z = torch::randn({1, ck.unet.latent_channels, 16, 16}, gen);
    const auto t = torch::tensor({100}, torch::kInt64);
    const CondMaps cond = cond_from_bundle(split_channels(held_out_masks(1)[0]));
    model->set_plan(InjectionPlan::mirrored({MaskSlot::Dark, MaskSlot::Clean, MaskSlot::Floats}));
    const auto a = model->forward(z, t, cond);
    model->set_plan(InjectionPlan::mirrored({MaskSlot::Floats, MaskSlot::Clean, MaskSlot::Dark}));
    const auto b = model->forward(z, t, cond);
    const double diff = (a - b).abs().max().item<double>();
    return {diff > 1e-6, "max |eps[d,c,f] - eps[f,c,d]| = " + fmt(diff)};
}

// ---- A8 ----------------------------------------------------------------------

void rate_items(VTTSession& s, const std::string& rater, int real_hits, int fake_hits) {
    int r = 0, f = 0;
    for (const auto& item : s.items) {
        const bool says_real = item.truth == Truth::Real ? r++ < real_hits : f++ < fake_hits;
        add_response(s, rater, item.item_id, says_real ? Truth::Real : Truth::Fake);
    }
}

Verdict vtt_arithmetic(const TrainedModel& m, const fs::path& fake_dir) {
    const VTTSession built = vtt_build(m.toy / "images", fake_dir, 80, 80, 3, m.root / "vtt");
    if (built.items.size() != 160) return {false, std::to_string(built.items.size()) + " items"};
    const VTTSession base = load_session(m.root / "vtt");
    bool exact = true;
    std::ostringstream detail;
    detail << "160 items; ";

    // Set 1: one perfect rater -> (1, 0).
    VTTSession s1 = base;
    rate_items(s1, "expert", 80, 0);
    auto sc = vtt_score(s1);
    exact &= *sc.real_as_real_accuracy == 1.0 && *sc.fake_as_real_rate == 0.0;
    detail << "perfect (" << *sc.real_as_real_accuracy << ", " << *sc.fake_as_real_rate << "); ";

    // Set 2: five raters with real-as-real 0.60, 0.70, 0.60, 0.70, 0.60 and
    // fake-as-real 53/80 each -> (0.64, 0.6625).
    VTTSession s2 = base;
    const int real_hits[] = {48, 56, 48, 56, 48};
    for (int r = 0; r < 5; ++r) rate_items(s2, "gastro" + std::to_string(r + 1), real_hits[r], 53);
    sc = vtt_score(s2);
    exact &= std::abs(*sc.real_as_real_accuracy - 0.64) < 1e-12 && std::abs(*sc.fake_as_real_rate - 0.6625) < 1e-12;
    detail << "five raters (" << fmt(*sc.real_as_real_accuracy, 12) << ", " << fmt(*sc.fake_as_real_rate, 12) << "); ";

    // Set 3: constant "real" responder plus a rater with 20/80 and 40/80 ->
    // rater mean (0.625, 0.75).
    VTTSession s3 = base;
    rate_items(s3, "always_real", 80, 80);
    rate_items(s3, "skeptic", 20, 40);
    sc = vtt_score(s3);
    exact &= std::abs(*sc.real_as_real_accuracy - 0.625) < 1e-12 && std::abs(*sc.fake_as_real_rate - 0.75) < 1e-12;
    detail << "mixed (" << fmt(*sc.real_as_real_accuracy, 12) << ", " << fmt(*sc.fake_as_real_rate, 12) << ")";
    return {exact, detail.str()};
}

// ---- A9 ----------------------------------------------------------------------

Verdict mask_round_trip(const fs::path& dir) {
    fs::create_directories(dir);
    Rng rng(909);
    int exact = 0, corners = 0;
    for (int k = 0; k < 100; ++k) {
        SynthMaskSpec spec;
        spec.width = 16 + 8 * rng.uniform_int(0, 8);
        spec.height = 16 + 8 * rng.uniform_int(0, 8);
        spec.dark = rng.uniform(0.0, 0.4);
        spec.floats = rng.uniform(0.0, 0.4);
        spec.clean = 1.0 - spec.dark - spec.floats;
        const SemanticMap m = synth_mask(spec, 7000 + k);
        encode_color_mask(m, dir / "c.png");
        encode_label_mask(m, dir / "l.png");
        exact += load_color_mask(dir / "c.png") == m && load_label_mask(dir / "l.png") == m;

        // FOV on the half-pixel lattice so the oracle runs in integers.
        const long cx2 = rng.uniform_int(0, 2 * spec.width), cy2 = rng.uniform_int(0, 2 * spec.height);
        const long r2 = rng.uniform_int(std::min(spec.width, spec.height) / 2, 2 * std::max(spec.width, spec.height));
        const FOVSpec fov{cx2 / 2.0, cy2 / 2.0, r2 / 2.0};
        long expected_blank = 0;
        for (long i = 0; i < spec.height; ++i)
            for (long j = 0; j < spec.width; ++j) {
                const long dx = 2 * j + 1 - cx2, dy = 2 * i + 1 - cy2;
                const bool outside = dx * dx + dy * dy > r2 * r2;
                expected_blank += outside || m.at(static_cast<int>(i), static_cast<int>(j)) == Label::Blank;
            }
        corners += static_cast<long>(reassign_corners(m, fov).histogram()[0]) == expected_blank;
    }
    return {exact == 100 && corners == 100, std::to_string(exact) + "/100 bit-exact round trips, " +
                                                std::to_string(corners) + "/100 blank counts match the oracle"};
}

// ---- A10 ---------------------------------------------------------------------

Verdict cli_determinism(const TrainedModel& m, const std::string& cli) {
    const fs::path mask = m.root / "a10_mask.png";
    encode_color_mask(held_out_masks(3)[2], mask);
    std::vector<std::string> images;
    for (const char* run : {"a10_first", "a10_second"}) {
        const fs::path out = m.root / run;
        fs::remove_all(out);
        const std::string cmd = "\"" + cli + "\" sample --ckpt \"" + m.ldm.string() + "\" --ae \"" + m.ae.string() +
                                "\" --mask \"" + mask.string() + "\" --seeds 11,12 --out \"" + out.string() +
                                "\" > /dev/null 2>&1";
        const int rc = std::system(cmd.c_str());
        if (rc != 0) return {false, std::string(run) + " exited with status " + std::to_string(rc)};
        images.push_back(testing::read_bytes(out / "seed_11.png") + testing::read_bytes(out / "seed_12.png") +
                         testing::read_bytes(out / "sheet.png"));
    }
    const bool same = images[0] == images[1] && !images[0].empty();
    return {same, same ? "two invocations wrote byte-identical images (" + std::to_string(images[0].size()) + " bytes)"
                       : "outputs differ"};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"wcegen acceptance run"};
    TrainedModel model;
    std::string cli = "wcegen";
    bool reuse = false;
    app.add_option("--work-dir", model.root, "Scratch directory for data, checkpoints and samples");
    app.add_option("--cli", cli, "Path to the wcegen executable");
    app.add_flag("--reuse", reuse, "Reuse a previously trained model in the work dir (skips A4 timing)");
    CLI11_PARSE(app, argc, argv);
    torch::set_num_threads(1);

    criterion("A1", "schedule correctness", schedule_correctness);
    criterion("A2", "forward marginal law", forward_marginal);
    criterion("A3", "U-Net gradient check", gradient_check);
    bool trained = false;
    criterion("A4", "desk-scale training", [&] {
        const Verdict v = desk_training(model, reuse);
        trained = fs::exists(model.ldm) && fs::exists(model.ae);
        return v;
    });

    const fs::path fake_dir = model.root / "fakes";
    std::optional<SamplerModel> gen;
    if (trained) {
        fs::remove_all(fake_dir);
        gen = load_generator(model.ldm, model.ae);
    }
    const auto needs_model = [&](auto&& body) {
        return [&, body]() -> Verdict {
            if (!gen) return {false, "no trained model (A4 did not produce checkpoints)"};
            return body();
        };
    };
    criterion("A5", "mask adherence", needs_model([&] { return mask_adherence(*gen, fake_dir); }));
    criterion("A6", "conditioning sensitivity", needs_model([&] { return conditioning_sensitivity(*gen, fake_dir); }));
    criterion("A7", "injection-order effect", needs_model([&] { return injection_order(model); }));
    criterion("A8", "visual Turing test arithmetic", needs_model([&] { return vtt_arithmetic(model, fake_dir); }));
    criterion("A9", "mask round trip", [&] { return mask_round_trip(model.root / "a9"); });
    criterion("A10", "sampling determinism", needs_model([&] { return cli_determinism(model, cli); }));

    std::cout << (failures == 0 ? "all criteria pass" : std::to_string(failures) + " criteria fail") << std::endl;
    return failures == 0 ? 0 : 1;
}
