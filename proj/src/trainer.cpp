#include "wcegen/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "wcegen/archive.hpp"
#include "wcegen/errors.hpp"
#include "wcegen/manifest.hpp"
#include "wcegen/rng.hpp"

namespace fs = std::filesystem;

namespace wce {
namespace {

constexpr std::uint64_t kLdmBatchDomain = 0x1D3B'A7C4ull;
constexpr std::uint64_t kLdmStepDomain = 0x1D35'7E90ull;

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void emit(std::ostream* os, int step, double loss, double wall) {
    if (!os) return;
    *os << step << '\t' << std::setprecision(9) << loss << '\t' << std::setprecision(6) << wall << '\n';
    os->flush();
}

std::string unet_metadata(const UNetConfig& cfg) {
    return unet_section(cfg) + "latent_channels = " + std::to_string(cfg.latent_channels) + "\n";
}

// First differing field between two U-Net configs, or empty.
std::string first_mismatch(const UNetConfig& a, const UNetConfig& b) {
    std::vector<std::string> la, lb;
    std::istringstream sa(unet_metadata(a)), sb(unet_metadata(b));
    for (std::string l; std::getline(sa, l);) la.push_back(l);
    for (std::string l; std::getline(sb, l);) lb.push_back(l);
    for (std::size_t i = 0; i < std::max(la.size(), lb.size()); ++i) {
        const std::string x = i < la.size() ? la[i] : "<missing>";
        const std::string y = i < lb.size() ? lb[i] : "<missing>";
        if (x != y) return "checkpoint has '" + x + "', requested '" + y + "'";
    }
    return {};
}

std::string optimizer_blob(torch::optim::Optimizer& opt) {
    torch::serialize::OutputArchive archive;
    opt.save(archive);
    std::ostringstream os;
    archive.save_to(os);
    return os.str();
}

void restore_optimizer(torch::optim::Optimizer& opt, const std::string& blob) {
    std::istringstream is(blob);
    torch::serialize::InputArchive archive;
    archive.load_from(is);
    opt.load(archive);
}

void save_ldm(const fs::path& path, const TrainConfig& cfg, const std::string& config_text,
              ConditionalUNet& model, ConditionalUNet& ema, torch::optim::Optimizer& opt, int step) {
    Archive a(kLdmCheckpointKind);
    a.put_text("config", config_text);
    a.put_text("unet", unet_metadata(model->config()));
    a.put_text("schedule", schedule_section(cfg.schedule));
    a.put_int("step", step);
    a.put_int("seed", static_cast<std::int64_t>(cfg.seed));
    a.put_int("image_size", cfg.image_size);
    a.put_module("model/", *model);
    a.put_module("ema/", *ema);
    a.put_blob("optimizer", optimizer_blob(opt));
    a.save(path);
}

}  // namespace

TrainingSet to_training_set(const std::vector<Sample>& samples) {
    if (samples.empty()) throw EmptyDataset("training set is empty");
    TrainingSet set;
    std::vector<torch::Tensor> images;
    std::vector<const MaskBundle*> bundles;
    for (const auto& s : samples) {
        set.ids.push_back(s.id);
        images.push_back(image_to_tensor(s.image));
        bundles.push_back(&s.bundle);
    }
    set.images = torch::stack(images);
    set.cond = cond_from_bundles(bundles);
    return set;
}

TrainingSet load_training_set(const TrainConfig& cfg) {
    LoadOptions opts;
    opts.target_size = cfg.image_size;
    return to_training_set(load_folder(cfg.data_root, cfg.layout, opts));
}

void save_autoencoder(const fs::path& path, Autoencoder& ae, std::uint64_t seed, int steps, int image_size,
                      const std::string& config_text) {
    Archive a(kAECheckpointKind);
    a.put_text("ae", ae_section(ae->config()));
    a.put_text("config", config_text);
    a.put_real("latent_scale", ae->latent_scale());
    a.put_int("seed", static_cast<std::int64_t>(seed));
    a.put_int("steps", steps);
    a.put_int("image_size", image_size);
    a.put_module("model/", *ae);
    a.save(path);
}

AECheckpoint load_autoencoder(const fs::path& path) {
    if (!fs::exists(path)) throw MissingAE("autoencoder checkpoint not found: " + path.string());
    const Archive a = Archive::load(path, kAECheckpointKind);
    AECheckpoint out;
    out.model = Autoencoder(parse_ae_section(a.text("ae")));
    a.load_module("model/", *out.model);
    out.model->set_latent_scale(a.real("latent_scale"));
    out.model->eval();
    out.seed = static_cast<std::uint64_t>(a.integer("seed"));
    out.steps = static_cast<int>(a.integer("steps"));
    out.image_size = static_cast<int>(a.integer("image_size"));
    out.config_text = a.text("config");
    return out;
}

AETrainResult train_ae_stage(const TrainConfig& cfg, const TrainingSet& data, const AEStageOptions& options) {
    at::set_num_threads(cfg.threads);
    AETrainOptions opts;
    opts.steps = cfg.ae.steps;
    opts.batch_size = cfg.ae.batch_size;
    opts.learning_rate = cfg.ae.learning_rate;
    opts.seed = cfg.seed;
    Stopwatch clock;
    opts.on_step = [&](int step, double loss) {
        emit(options.log, step, loss, clock.seconds());
        if (options.on_step) options.on_step(step, loss);
    };
    return train_autoencoder(data.images, cfg.ae.model, opts);
}

fs::path train_ae_stage(const TrainConfig& cfg, const std::string& config_text, const AEStageOptions& options) {
    const TrainingSet data = load_training_set(cfg);
    fs::create_directories(cfg.out_dir);
    std::ofstream file(cfg.out_dir / "ae_log.tsv");
    file << "step\tloss\twallclock\n";
    AEStageOptions tee = options;
    Stopwatch clock;
    tee.on_step = [&](int step, double loss) {
        emit(&file, step, loss, clock.seconds());
        if (options.on_step) options.on_step(step, loss);
    };
    auto result = train_ae_stage(cfg, data, tee);
    const fs::path out = cfg.out_dir / "ae.ckpt";
    save_autoencoder(out, result.model, cfg.seed, cfg.ae.steps, cfg.image_size, config_text);
    auto manifest = make_manifest("train ae", config_text, cfg.data_root, {cfg.seed}, cfg.threads);
    manifest.inputs["checkpoint"] = out.filename().string();
    write_run_manifest(cfg.out_dir, manifest);
    return out;
}

void ema_update(torch::nn::Module& ema, const torch::nn::Module& model, double decay, int step) {
    torch::NoGradGuard no_grad;
    const double d = std::min(decay, (1.0 + step) / (10.0 + step));
    auto ema_params = ema.parameters();
    const auto params = model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) ema_params[i].mul_(d).add_(params[i].detach(), 1.0 - d);
}

std::vector<double> smooth(const std::vector<double>& values, int window) {
    std::vector<double> out(values.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        acc += values[i];
        if (i >= static_cast<std::size_t>(window)) acc -= values[i - window];
        out[i] = acc / static_cast<double>(std::min<std::size_t>(i + 1, window));
    }
    return out;
}

LdmCheckpoint load_checkpoint(const fs::path& path, const UNetConfig* expected) {
    const Archive a = Archive::load(path, kLdmCheckpointKind);
    LdmCheckpoint out;
    out.unet = parse_unet_section(a.text("unet"));
    if (expected) {
        const std::string diff = first_mismatch(out.unet, *expected);
        if (!diff.empty()) throw VersionError(path.string() + ": U-Net config mismatch: " + diff);
    }
    out.schedule = parse_schedule_section(a.text("schedule"));
    out.model = ConditionalUNet(out.unet);
    out.ema = ConditionalUNet(out.unet);
    a.load_module("model/", *out.model);
    a.load_module("ema/", *out.ema);
    out.model->eval();
    out.ema->eval();
    out.step = static_cast<int>(a.integer("step"));
    out.seed = static_cast<std::uint64_t>(a.integer("seed"));
    out.image_size = static_cast<int>(a.integer("image_size"));
    out.config_text = a.text("config");
    out.optimizer_state = a.blob("optimizer");
    return out;
}

TrainLdmResult train_ldm(const TrainConfig& cfg, const std::string& config_text, Autoencoder& ae,
                         const TrainingSet& data, const TrainLdmOptions& options) {
    at::set_num_threads(cfg.threads);
    if (data.images.size(0) == 0) throw EmptyDataset("training set is empty");
    const NoiseSchedule sched = cfg.schedule.build();

    ae->eval();
    const torch::Tensor latents = encode_all(ae, data.images);
    const int64_t n = latents.size(0);
    UNetConfig unet_cfg = cfg.unet;
    unet_cfg.latent_channels = static_cast<int>(latents.size(1));

    TrainLdmResult result;
    result.model = build_model(unet_cfg, cfg.seed);
    result.ema = ConditionalUNet(unet_cfg);
    {
        torch::NoGradGuard no_grad;
        auto dst = result.ema->parameters();
        const auto src = result.model->parameters();
        for (std::size_t i = 0; i < src.size(); ++i) dst[i].copy_(src[i]);
    }
    torch::optim::Adam opt(result.model->parameters(), torch::optim::AdamOptions(cfg.learning_rate));

    int start = 0;
    if (options.resume) {
        LdmCheckpoint ck = load_checkpoint(*options.resume, &unet_cfg);
        if (ck.config_text != config_text)
            throw VersionError(options.resume->string() + ": config text differs from the launching config");
        torch::NoGradGuard no_grad;
        auto dst = result.model->parameters();
        auto dst_ema = result.ema->parameters();
        const auto src = ck.model->parameters();
        const auto src_ema = ck.ema->parameters();
        for (std::size_t i = 0; i < src.size(); ++i) {
            dst[i].copy_(src[i]);
            dst_ema[i].copy_(src_ema[i]);
        }
        restore_optimizer(opt, ck.optimizer_state);
        start = ck.step;
    }

    std::ofstream file;
    if (options.write_checkpoints) {
        fs::create_directories(cfg.out_dir);
        const bool append = options.resume.has_value();
        file.open(cfg.out_dir / "ldm_log.tsv", append ? std::ios::app : std::ios::trunc);
        if (!append) file << "step\tloss\twallclock\n";
    }

    const int stop = std::min(cfg.steps, options.stop_after.value_or(cfg.steps));
    const EpsModel eps_model = as_eps_model(result.model);
    result.model->train();
    Stopwatch clock;
    for (int step = start; step < stop; ++step) {
        const auto idx = batch_indices(stream_key(cfg.seed, 0, kLdmBatchDomain), step, cfg.batch_size, n);
        auto gen = make_generator(stream_key(cfg.seed, static_cast<std::uint64_t>(step), kLdmStepDomain));
        opt.zero_grad();
        auto loss = ddpm_loss(eps_model, latents.index_select(0, idx), data.cond.index(idx), sched, gen);
        const double value = loss.item<double>();
        if (!std::isfinite(value)) {
            std::ostringstream os;
            os << "step " << step + 1 << ": diffusion loss is " << value
               << "; last good checkpoint left in " << cfg.out_dir.string();
            throw NaNLoss(os.str());
        }
        loss.backward();
        torch::nn::utils::clip_grad_norm_(result.model->parameters(), 1.0);
        opt.step();
        ema_update(*result.ema, *result.model, cfg.ema_decay, step);

        const LossRecord rec{step + 1, value, clock.seconds()};
        result.log.push_back(rec);
        emit(options.log, rec.step, rec.loss, rec.wallclock);
        if (file.is_open()) emit(&file, rec.step, rec.loss, rec.wallclock);
        if (options.on_step) options.on_step(rec);

        if (options.write_checkpoints && (step + 1) % cfg.checkpoint_every == 0) {
            char name[32];
            std::snprintf(name, sizeof name, "ldm_step%06d.ckpt", step + 1);
            save_ldm(cfg.out_dir / name, cfg, config_text, result.model, result.ema, opt, step + 1);
        }
    }
    result.final_step = std::max(start, stop);
    result.model->eval();
    result.ema->eval();
    if (options.write_checkpoints) {
        const fs::path out = cfg.out_dir / "ldm.ckpt";
        save_ldm(out, cfg, config_text, result.model, result.ema, opt, result.final_step);
        result.final_checkpoint = out;
    }
    return result;
}

TrainLdmResult train_ldm(const TrainConfig& cfg, const std::string& config_text, const fs::path& ae_checkpoint,
                         const TrainLdmOptions& options) {
    AECheckpoint ae = load_autoencoder(ae_checkpoint);
    if (ae.model->config().latent_channels != cfg.ae.model.latent_channels ||
        ae.model->config().downsample_factor != cfg.ae.model.downsample_factor)
        throw ConfigError("autoencoder checkpoint " + ae_checkpoint.string() +
                          " does not match the [ae] section of the run config");
    const TrainingSet data = load_training_set(cfg);
    auto result = train_ldm(cfg, config_text, ae.model, data, options);
    if (options.write_checkpoints) {
        auto manifest = make_manifest("train ldm", config_text, cfg.data_root, {cfg.seed}, cfg.threads);
        manifest.inputs["ae_checkpoint"] = sha256_file(ae_checkpoint);
        manifest.inputs["checkpoint"] = "ldm.ckpt";
        write_run_manifest(cfg.out_dir, manifest);
    }
    return result;
}

}  // namespace wce
