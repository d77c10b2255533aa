#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "wcegen/autoencoder.hpp"
#include "wcegen/config.hpp"
#include "wcegen/unet.hpp"

namespace wce {

inline constexpr const char* kAECheckpointKind = "autoencoder";
inline constexpr const char* kLdmCheckpointKind = "ldm";

struct LossRecord {
    int step;
    double loss;
    double wallclock;
};

/// Tensors for a whole dataset: images [N,3,H,W] and their condition maps.
struct TrainingSet {
    std::vector<std::string> ids;
    torch::Tensor images;
    CondMaps cond;
};

TrainingSet to_training_set(const std::vector<Sample>& samples);
TrainingSet load_training_set(const TrainConfig& cfg);

// ---- autoencoder checkpoints -------------------------------------------------

struct AECheckpoint {
    Autoencoder model{nullptr};
    std::uint64_t seed = 0;
    int steps = 0;
    int image_size = 0;
    std::string config_text;
};

void save_autoencoder(const std::filesystem::path& path, Autoencoder& ae, std::uint64_t seed, int steps,
                      int image_size, const std::string& config_text = {});
/// Throws MissingAE if the file does not exist, FormatError / VersionError otherwise.
AECheckpoint load_autoencoder(const std::filesystem::path& path);

struct AEStageOptions {
    std::ostream* log = nullptr;
    std::function<void(int, double)> on_step;
};

/// Trains the autoencoder stage from a run config and writes
/// <out_dir>/ae.ckpt plus ae_log.tsv. Returns the checkpoint path.
std::filesystem::path train_ae_stage(const TrainConfig& cfg, const std::string& config_text,
                                     const AEStageOptions& options = {});
/// Same, with an already-loaded training set.
AETrainResult train_ae_stage(const TrainConfig& cfg, const TrainingSet& data,
                             const AEStageOptions& options = {});

// ---- latent diffusion ---------------------------------------------------------

struct LdmCheckpoint {
    UNetConfig unet;
    ScheduleConfig schedule;
    ConditionalUNet model{nullptr};
    ConditionalUNet ema{nullptr};
    int step = 0;
    std::uint64_t seed = 0;
    int image_size = 0;
    std::string config_text;
    std::string optimizer_state;
};

/// Loads an LDM checkpoint. When `expected` is given and differs from the
/// stored U-Net config, throws VersionError naming the first mismatching field.
LdmCheckpoint load_checkpoint(const std::filesystem::path& path, const UNetConfig* expected = nullptr);

struct TrainLdmOptions {
    /// Resume from this checkpoint; its config text must match byte for byte.
    std::optional<std::filesystem::path> resume;
    /// Stop after this global step (for staged runs); defaults to cfg.steps.
    std::optional<int> stop_after;
    bool write_checkpoints = true;
    std::ostream* log = nullptr;
    std::function<void(const LossRecord&)> on_step;
};

struct TrainLdmResult {
    ConditionalUNet model{nullptr};
    ConditionalUNet ema{nullptr};
    std::vector<LossRecord> log;
    int final_step = 0;
    std::optional<std::filesystem::path> final_checkpoint;
};

/// Latent diffusion training with a frozen autoencoder. Latents of the whole
/// training set are encoded once up front.
TrainLdmResult train_ldm(const TrainConfig& cfg, const std::string& config_text, Autoencoder& ae,
                         const TrainingSet& data, const TrainLdmOptions& options = {});
TrainLdmResult train_ldm(const TrainConfig& cfg, const std::string& config_text,
                         const std::filesystem::path& ae_checkpoint, const TrainLdmOptions& options = {});

/// ema ← d·ema + (1−d)·model with d = min(decay, (1+step)/(10+step)).
void ema_update(torch::nn::Module& ema, const torch::nn::Module& model, double decay, int step);

/// Trailing moving average: out[i] = mean(values[max(0, i-window+1) .. i]).
std::vector<double> smooth(const std::vector<double>& values, int window);

}  // namespace wce
