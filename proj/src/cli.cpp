#include "wcegen/cli.hpp"

#include <CLI11.hpp>
#include <torch/torch.h>

#include <algorithm>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>

#include "wcegen/config.hpp"
#include "wcegen/dataset.hpp"
#include "wcegen/errors.hpp"
#include "wcegen/eval.hpp"
#include "wcegen/manifest.hpp"
#include "wcegen/sampler.hpp"
#include "wcegen/trainer.hpp"
#include "wcegen/vtt.hpp"

namespace fs = std::filesystem;

namespace wce {
namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

FOVSpec parse_fov(const std::string& text) {
    std::vector<double> v;
    std::istringstream is(text);
    std::string part;
    while (std::getline(is, part, ',')) {
        try {
            std::size_t used = 0;
            v.push_back(std::stod(part, &used));
            if (used != part.size()) throw std::invalid_argument(part);
        } catch (const std::exception&) {
            throw UsageError("--fov expects cx,cy,r; got '" + text + "'");
        }
    }
    if (v.size() != 3) throw UsageError("--fov expects cx,cy,r; got '" + text + "'");
    return {v[0], v[1], v[2]};
}

TrainConfig require_config(const fs::path& path, std::string& text, std::ostream& err) {
    ConfigReport report = validate_config(path);
    if (!report.ok()) {
        std::ostringstream os;
        os << report.violations.size() << " violation(s) in " << path.string();
        for (const auto& v : report.violations) err << "  " << v << "\n";
        throw ConfigError(os.str());
    }
    text = report.raw_text;
    return *report.config;
}

std::vector<fs::path> split_paths(const std::string& text) {
    std::vector<fs::path> out;
    std::istringstream is(text);
    std::string part;
    while (std::getline(is, part, ','))
        if (!part.empty()) out.emplace_back(part);
    return out;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"wcegen: mask-conditioned latent diffusion for capsule-endoscopy-style images", "wcegen"};
    app.set_version_flag("--version", std::string("wcegen ") + tool_version() + " (" + build_hash() + ")");
    app.require_subcommand(1);
    app.fallthrough(false);

    std::function<int()> action;

    // maskprep
    std::string mp_in, mp_out, mp_fov, mp_bundle;
    auto* maskprep = app.add_subcommand("maskprep", "Decode a mask, blank its corners and write the label raster");
    maskprep->add_option("--in", mp_in, "Color-coded or label mask (PNG)")->required();
    maskprep->add_option("--out", mp_out, "Output label raster (PNG, ids 0-3)")->required();
    maskprep->add_option("--fov", mp_fov, "Field of view as cx,cy,r in pixels (default: inscribed circle)");
    maskprep->add_option("--emit-bundle", mp_bundle, "Also write y_d/y_c/y_f/y_a rasters into this directory");
    maskprep->callback([&] {
        action = [&] {
            const SemanticMap raw = load_any_mask(mp_in);
            const FOVSpec fov = mp_fov.empty() ? FOVSpec::inscribed(raw.width(), raw.height()) : parse_fov(mp_fov);
            const SemanticMap map = reassign_corners(raw, fov);
            encode_label_mask(map, mp_out);
            if (!mp_bundle.empty()) {
                fs::create_directories(mp_bundle);
                const MaskBundle b = split_channels(map);
                write_binary_mask(b.dark, fs::path(mp_bundle) / "y_d.png");
                write_binary_mask(b.clean, fs::path(mp_bundle) / "y_c.png");
                write_binary_mask(b.floats, fs::path(mp_bundle) / "y_f.png");
                encode_label_mask(b.all, fs::path(mp_bundle) / "y_a.png");
            }
            const auto h = map.histogram();
            out << "wrote " << mp_out << " (blank " << h[0] << ", clean " << h[1] << ", dark " << h[2]
                << ", floats " << h[3] << ")\n";
            return kExitOk;
        };
    });

    // toyset make
    std::size_t ts_n = 2048;
    std::string ts_out;
    std::uint64_t ts_seed = 7;
    int ts_size = 64;
    auto* toyset = app.add_subcommand("toyset", "Synthetic toy datasets");
    toyset->require_subcommand(1);
    auto* toy_make = toyset->add_subcommand("make", "Render a paired toy dataset");
    toy_make->add_option("--n", ts_n, "Number of items")->check(CLI::PositiveNumber);
    toy_make->add_option("--out", ts_out, "Output directory")->required();
    toy_make->add_option("--seed", ts_seed, "Dataset seed");
    toy_make->add_option("--size", ts_size, "Square image size in pixels")->check(CLI::Range(8, 4096));
    toy_make->callback([&] {
        action = [&] {
            const Manifest m = make_toy_dataset(ts_n, ts_out, ToyRenderSpec{}, ts_seed, ts_size);
            out << "wrote " << m.size() << " items to " << ts_out << "\n";
            return kExitOk;
        };
    });

    // ae train (config-free)
    std::string ae_data, ae_out, ae_layout = "paired";
    AETrainOptions ae_opts;
    int ae_size = 64, ae_threads = 1;
    auto* ae = app.add_subcommand("ae", "Autoencoder stage without a run config");
    ae->require_subcommand(1);
    auto* ae_train = ae->add_subcommand("train", "Train the autoencoder on an image folder");
    ae_train->add_option("--data", ae_data, "Dataset root")->required();
    ae_train->add_option("--out", ae_out, "Output checkpoint path")->required();
    ae_train->add_option("--steps", ae_opts.steps, "Optimizer steps")->check(CLI::PositiveNumber);
    ae_train->add_option("--seed", ae_opts.seed, "Training seed");
    ae_train->add_option("--batch-size", ae_opts.batch_size, "Batch size")->check(CLI::PositiveNumber);
    ae_train->add_option("--lr", ae_opts.learning_rate, "Adam learning rate")->check(CLI::PositiveNumber);
    ae_train->add_option("--size", ae_size, "Square training resolution")->check(CLI::PositiveNumber);
    ae_train->add_option("--layout", ae_layout, "paired or kvasir")->check(CLI::IsMember({"paired", "kvasir"}));
    ae_train->add_option("--threads", ae_threads, "Intra-op threads")->check(CLI::PositiveNumber);
    ae_train->callback([&] {
        action = [&] {
            torch::set_num_threads(ae_threads);
            const FolderLayout layout = ae_layout == "kvasir" ? FolderLayout::Kvasir : FolderLayout::Paired;
            const TrainingSet data = to_training_set(load_folder(ae_data, layout, {ae_size}));
            ae_opts.on_step = [&](int step, double loss) {
                if (step % 100 == 0 || step == ae_opts.steps) out << step << '\t' << loss << '\n';
            };
            AETrainResult r = train_autoencoder(data.images, AEConfig{}, ae_opts);
            save_autoencoder(ae_out, r.model, ae_opts.seed, ae_opts.steps, ae_size);
            out << "wrote " << ae_out << "\n";
            return kExitOk;
        };
    });

    // train ae / train ldm
    std::string tr_config, tr_ae, tr_resume;
    auto* train = app.add_subcommand("train", "Config-driven training stages");
    train->require_subcommand(1);
    auto* train_ae = train->add_subcommand("ae", "Train the autoencoder stage; writes <out_dir>/ae.ckpt");
    train_ae->add_option("--config", tr_config, "Run config file")->required();
    train_ae->callback([&] {
        action = [&] {
            std::string text;
            const TrainConfig cfg = require_config(tr_config, text, err);
            torch::set_num_threads(cfg.threads);
            AEStageOptions opts;
            opts.log = &out;
            const fs::path p = train_ae_stage(cfg, text, opts);
            out << "wrote " << p.string() << "\n";
            return kExitOk;
        };
    });
    auto* train_ldm_cmd = train->add_subcommand("ldm", "Train the latent diffusion stage; writes <out_dir>/ldm.ckpt");
    train_ldm_cmd->add_option("--config", tr_config, "Run config file")->required();
    train_ldm_cmd->add_option("--ae", tr_ae, "Autoencoder checkpoint (default <out_dir>/ae.ckpt)");
    train_ldm_cmd->add_option("--resume", tr_resume, "Resume from an LDM checkpoint written by the same config");
    train_ldm_cmd->callback([&] {
        action = [&] {
            std::string text;
            const TrainConfig cfg = require_config(tr_config, text, err);
            torch::set_num_threads(cfg.threads);
            TrainLdmOptions opts;
            opts.log = &out;
            if (!tr_resume.empty()) opts.resume = fs::path(tr_resume);
            const fs::path ae_path = tr_ae.empty() ? cfg.out_dir / "ae.ckpt" : fs::path(tr_ae);
            const TrainLdmResult r = train_ldm(cfg, text, ae_path, opts);
            if (r.final_checkpoint) out << "wrote " << r.final_checkpoint->string() << "\n";
            return kExitOk;
        };
    });

    // sample
    std::string sa_ckpt, sa_ae, sa_mask, sa_seeds = "1..6", sa_out;
    std::optional<int> sa_steps;
    bool sa_no_resample = false, sa_raw = false;
    int sa_threads = 1;
    auto* sample = app.add_subcommand("sample", "Generate images for one mask over a list of seeds");
    sample->add_option("--ckpt", sa_ckpt, "LDM checkpoint")->required();
    sample->add_option("--ae", sa_ae, "Autoencoder checkpoint")->required();
    sample->add_option("--mask", sa_mask, "Color-coded or label mask")->required();
    sample->add_option("--seeds", sa_seeds, "Seeds, e.g. 1..6 or 3,7,9");
    sample->add_option("--out", sa_out, "Output directory")->required();
    sample->add_option("--steps", sa_steps, "Sampler steps (respaced below the trained T)");
    sample->add_flag("--no-resample", sa_no_resample, "Fail instead of resampling masks to model resolution");
    sample->add_flag("--raw-weights", sa_raw, "Sample with the raw instead of the EMA weights");
    sample->add_option("--threads", sa_threads, "Intra-op threads")->check(CLI::PositiveNumber);
    sample->callback([&] {
        action = [&] {
            GenerateOptions o;
            o.allow_resample = !sa_no_resample;
            o.steps = sa_steps;
            o.use_ema = !sa_raw;
            o.warn = &err;
            o.threads = sa_threads;
            const auto seeds = parse_seed_list(sa_seeds);
            const GenerateResult r = generate(sa_ckpt, sa_ae, sa_mask, seeds, sa_out, o);
            for (const auto& f : r.files) out << f.string() << "\n";
            out << r.sheet.string() << "\n";
            return kExitOk;
        };
    });

    // sheet
    std::string sh_masks, sh_ckpt, sh_ae, sh_out;
    int sh_n = 6;
    std::optional<int> sh_steps;
    auto* sheet = app.add_subcommand("sheet", "Contact sheet: masks on top, seeds 1..n below");
    sheet->add_option("--masks", sh_masks, "Comma-separated mask files")->required();
    sheet->add_option("--ckpt", sh_ckpt, "LDM checkpoint")->required();
    sheet->add_option("--ae", sh_ae, "Autoencoder checkpoint")->required();
    sheet->add_option("--n-seeds", sh_n, "Rows of samples per mask")->check(CLI::PositiveNumber);
    sheet->add_option("--out", sh_out, "Output PNG")->required();
    sheet->add_option("--steps", sh_steps, "Sampler steps (respaced below the trained T)");
    sheet->callback([&] {
        action = [&] {
            GenerateOptions o;
            o.steps = sh_steps;
            o.warn = &err;
            const RgbImage img = make_sheet(split_paths(sh_masks), sh_ckpt, sh_ae, sh_n, sh_out, o);
            out << "wrote " << sh_out << " (" << img.width << "x" << img.height << ")\n";
            return kExitOk;
        };
    });

    // vtt build / score
    std::string vb_real, vb_fake, vb_out;
    std::size_t vb_n = 80;
    std::optional<std::size_t> vb_n_real, vb_n_fake;
    std::uint64_t vb_seed = 3;
    std::string vs_session, vs_answers, vs_tsv;
    bool vs_pooled = false;
    auto* vtt = app.add_subcommand("vtt", "Visual Turing test sessions");
    vtt->require_subcommand(1);
    auto* vtt_build_cmd = vtt->add_subcommand("build", "Build a blinded real/fake session");
    vtt_build_cmd->add_option("--real", vb_real, "Directory of real images")->required();
    vtt_build_cmd->add_option("--fake", vb_fake, "Directory of generated images")->required();
    vtt_build_cmd->add_option("--n", vb_n, "Items per class");
    vtt_build_cmd->add_option("--n-real", vb_n_real, "Real items (overrides --n)");
    vtt_build_cmd->add_option("--n-fake", vb_n_fake, "Fake items (overrides --n)");
    vtt_build_cmd->add_option("--seed", vb_seed, "Shuffle seed");
    vtt_build_cmd->add_option("--out", vb_out, "Session directory")->required();
    vtt_build_cmd->callback([&] {
        action = [&] {
            const VTTSession s = vtt_build(vb_real, vb_fake, vb_n_real.value_or(vb_n), vb_n_fake.value_or(vb_n),
                                           vb_seed, vb_out);
            out << "session with " << s.items.size() << " items: " << (fs::path(vb_out) / "sheet").string()
                << " (give to raters), key: " << (fs::path(vb_out) / "key.tsv").string() << "\n";
            return kExitOk;
        };
    });
    auto* vtt_score_cmd = vtt->add_subcommand("score", "Score rater responses against the sealed key");
    vtt_score_cmd->add_option("--session", vs_session, "Session directory")->required();
    vtt_score_cmd->add_option("--answers", vs_answers, "Responses TSV (rater_id, item_id, answer)")->required();
    vtt_score_cmd->add_option("--tsv", vs_tsv, "Also write the score table to this file");
    vtt_score_cmd->add_flag("--pooled", vs_pooled, "Pool items across raters instead of averaging raters");
    vtt_score_cmd->callback([&] {
        action = [&] {
            VTTSession s = load_session(vs_session);
            load_responses(s, vs_answers);
            const VTTScore score = vtt_score(s, vs_pooled ? Aggregation::Pooled : Aggregation::RaterMean);
            print_score(out, score);
            if (!vs_tsv.empty()) write_score_tsv(vs_tsv, score);
            return kExitOk;
        };
    });

    // config check
    std::string cc_path;
    auto* config = app.add_subcommand("config", "Run config utilities");
    config->require_subcommand(1);
    auto* config_check = config->add_subcommand("check", "Validate a config and echo it with defaults filled");
    config_check->add_option("path", cc_path, "Config file")->required();
    config_check->callback([&] {
        action = [&] {
            const ConfigReport r = validate_config(cc_path);
            if (!r.ok()) {
                err << r.violations.size() << " violation(s) in " << cc_path << "\n";
                for (const auto& v : r.violations) err << "  " << v << "\n";
                return kExitRuntime;
            }
            out << echo_config(*r.config);
            return kExitOk;
        };
    });

    // eval adherence
    std::string ea_image, ea_mask;
    auto* eval = app.add_subcommand("eval", "Evaluation reports");
    eval->require_subcommand(1);
    auto* adherence = eval->add_subcommand("adherence", "Per-region statistics of an image under its mask");
    adherence->add_option("--image", ea_image, "Image (PNG/JPEG)")->required();
    adherence->add_option("--mask", ea_mask, "Mask at the image's resolution")->required();
    adherence->callback([&] {
        action = [&] {
            const AdherenceReport r = adherence_report(from_raster(read_image(ea_image)), load_any_mask(ea_mask));
            print_report(out, r);
            return kExitOk;
        };
    });

    if (!args.empty() && !args.front().empty() && args.front().front() != '-') {
        const auto subs = app.get_subcommands([](const CLI::App*) { return true; });
        const bool known = std::any_of(subs.begin(), subs.end(), [&](const CLI::App* s) { return s->check_name(args.front()); });
        if (!known) {
            err << "error: unknown subcommand '" << args.front() << "'\n\n" << app.help();
            return kExitUsage;
        }
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        const CLI::App* target = &app;
        while (true) {
            const auto subs = target->get_subcommands();
            if (subs.empty()) break;
            target = subs.front();
        }
        out << target->help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::CallForVersion& e) {
        out << e.what() << "\n";
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    if (!action) {
        err << app.help();
        return kExitUsage;
    }
    try {
        return action();
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return dispatch(args, out, err);
}

}  // namespace wce
