#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "wcegen/autoencoder.hpp"
#include "wcegen/diffusion.hpp"
#include "wcegen/image.hpp"
#include "wcegen/mask.hpp"
#include "wcegen/unet.hpp"

namespace wce {

/// Everything needed to generate: denoiser weights, frozen autoencoder and
/// the (possibly respaced) schedule.
struct SamplerModel {
    ConditionalUNet model{nullptr};
    Autoencoder ae{nullptr};
    NoiseSchedule schedule;
    int image_size = 0;
    std::string ldm_config_text;

    std::vector<int64_t> latent_shape() const;
};

struct GenerateOptions {
    /// Nearest-neighbor resampling of masks not at model resolution; when
    /// false such masks raise ResolutionMismatch.
    bool allow_resample = true;
    /// Sampler steps; respaces the trained schedule when below T.
    std::optional<int> steps;
    /// Sample with the EMA weights (default) or the raw weights.
    bool use_ema = true;
    std::ostream* warn = nullptr;
    int threads = 1;
};

/// Loads an LDM checkpoint and its autoencoder; respaces when requested.
SamplerModel load_generator(const std::filesystem::path& ldm_checkpoint, const std::filesystem::path& ae_checkpoint,
                         const GenerateOptions& options = {});

/// Decodes a mask file and brings it to model resolution with blank corners.
SemanticMap prepare_mask(const std::filesystem::path& path, int size, const GenerateOptions& options = {});
SemanticMap prepare_mask(const SemanticMap& map, int size, const GenerateOptions& options = {});

/// One image per seed. Seeds are independent: the result for a seed does
/// not depend on which other seeds share the batch.
std::vector<RgbImage> generate_images(SamplerModel& gen, const SemanticMap& map, const std::vector<std::uint64_t>& seeds);
/// Batched variant with one map per seed.
std::vector<RgbImage> generate_images(SamplerModel& gen, const std::vector<SemanticMap>& maps,
                                      const std::vector<std::uint64_t>& seeds);

struct GenerateResult {
    SemanticMap map;
    std::vector<RgbImage> images;
    std::vector<std::filesystem::path> files;
    std::filesystem::path sheet;
};

/// Writes <out>/seed_<s>.png per seed, <out>/sheet.png (mask on top, samples
/// below) and <out>/run_manifest.json.
GenerateResult generate(const std::filesystem::path& ldm_checkpoint, const std::filesystem::path& ae_checkpoint,
                        const std::filesystem::path& mask_path, const std::vector<std::uint64_t>& seeds,
                        const std::filesystem::path& out_dir, const GenerateOptions& options = {});

/// Grid with one column per mask: color-coded masks on the top row, then
/// rows of samples (columns[m][r] is row r + 1 of column m). Cells are
/// `cell` pixels square, no gutters.
RgbImage compose_sheet(const std::vector<SemanticMap>& masks, const std::vector<std::vector<RgbImage>>& columns,
                       int cell);

/// Samples seeds 1..n_seeds for every mask and writes the grid to out_path.
/// Throws UsageError on an empty mask list before touching the filesystem.
RgbImage make_sheet(const std::vector<std::filesystem::path>& mask_paths, const std::filesystem::path& ldm_checkpoint,
                    const std::filesystem::path& ae_checkpoint, int n_seeds, const std::filesystem::path& out_path,
                    const GenerateOptions& options = {});

/// "1..6", "3", "1,4,9" or mixtures like "1..3,8".
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

}  // namespace wce
