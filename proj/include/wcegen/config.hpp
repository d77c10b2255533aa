#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "wcegen/autoencoder.hpp"
#include "wcegen/dataset.hpp"
#include "wcegen/diffusion.hpp"
#include "wcegen/unet.hpp"

namespace wce {

inline constexpr int kConfigVersion = 1;

/// Parsed `key = value` text with `[section]` headers and `#` comments.
/// Values stay raw until a typed accessor reads them.
class KeyValueDocument {
public:
    struct Entry {
        std::string raw;
        int line = 0;
    };

    /// Syntax problems are appended to `errors` rather than thrown.
    static KeyValueDocument parse(const std::string& text, std::vector<std::string>& errors);

    const Entry* find(const std::string& section, const std::string& key) const;
    /// Keys never read through find(), as "section.key".
    std::vector<std::string> unread() const;

private:
    std::map<std::string, std::map<std::string, Entry>> sections_;
    mutable std::map<std::string, bool> read_;
};

namespace kv {
std::optional<long long> to_int(const std::string& raw);
std::optional<double> to_real(const std::string& raw);
std::optional<std::string> to_string(const std::string& raw);
std::optional<std::vector<std::string>> to_list(const std::string& raw);
}  // namespace kv

struct ScheduleConfig {
    int T = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    ScheduleKind kind = ScheduleKind::Linear;

    NoiseSchedule build() const { return make_schedule(T, beta_start, beta_end, kind); }
    friend bool operator==(const ScheduleConfig&, const ScheduleConfig&) = default;
};

struct AEStageConfig {
    AEConfig model;
    int steps = 2000;
    int batch_size = 16;
    double learning_rate = 1e-3;
    friend bool operator==(const AEStageConfig&, const AEStageConfig&) = default;
};

struct TrainConfig {
    int config_version = kConfigVersion;
    std::filesystem::path data_root;
    FolderLayout layout = FolderLayout::Paired;
    int image_size = 64;
    AEStageConfig ae;
    UNetConfig unet;
    ScheduleConfig schedule;
    int batch_size = 32;
    int steps = 2000;
    double learning_rate = 1e-4;
    double ema_decay = 0.999;
    std::uint64_t seed = 7;
    int checkpoint_every = 500;
    std::filesystem::path out_dir = "runs";
    int threads = 1;

    int latent_size() const { return image_size / ae.model.downsample_factor; }
};

struct ConfigReport {
    std::optional<TrainConfig> config;
    std::vector<std::string> violations;
    std::string raw_text;
    bool ok() const { return config.has_value(); }
};

/// Parses and validates a run config. Relative paths resolve against
/// `base_dir`. Every violation is collected; `config` is set only when
/// there are none.
ConfigReport parse_config_text(const std::string& text, const std::filesystem::path& base_dir = {});
/// Reads `path` and parses it with base_dir = the file's directory.
ConfigReport validate_config(const std::filesystem::path& path);

/// Canonical, fully populated rendering of a config (defaults included).
std::string echo_config(const TrainConfig& cfg);

/// Section renderers shared with checkpoint metadata.
std::string unet_section(const UNetConfig& cfg);
std::string ae_section(const AEConfig& cfg);
std::string schedule_section(const ScheduleConfig& cfg);
UNetConfig parse_unet_section(const std::string& text);
AEConfig parse_ae_section(const std::string& text);
ScheduleConfig parse_schedule_section(const std::string& text);

}  // namespace wce
