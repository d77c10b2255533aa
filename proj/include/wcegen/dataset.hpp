#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "wcegen/toy.hpp"

namespace wce {

struct ManifestEntry {
    std::string id;
    std::uint64_t seed;
    friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

using Manifest = std::vector<ManifestEntry>;

/// Seed used for item `index` of a toy dataset generated with `seed`.
std::uint64_t toy_item_seed(std::uint64_t seed, std::size_t index);

/// Writes <out>/images/<id>.png, <out>/masks/<id>.png and <out>/manifest.tsv.
Manifest make_toy_dataset(std::size_t n, const std::filesystem::path& out_dir,
                          const ToyRenderSpec& spec, std::uint64_t seed, int size = 64);

/// Renders toy item `index` in memory, identical to what make_toy_dataset writes.
Sample toy_item(const ToyRenderSpec& spec, std::uint64_t seed, std::size_t index, int size = 64);

Manifest read_manifest(const std::filesystem::path& path);

enum class FolderLayout {
    /// <root>/images/<id>.png with <root>/masks/<id>.png label rasters.
    Paired,
    /// <root>/labelled_images/**/<id>.jpg (finding folders ignored) with
    /// upstream label rasters at <root>/masks/<id>.png.
    Kvasir,
};

struct LoadOptions {
    /// Resample images (area/bilinear) and masks (nearest) to a square size.
    std::optional<int> target_size;
};

/// Samples in lexicographic id order; masks are validated on ingestion.
std::vector<Sample> load_folder(const std::filesystem::path& root, FolderLayout layout,
                                const LoadOptions& options = {});

}  // namespace wce
