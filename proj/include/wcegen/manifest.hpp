#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace wce {

const char* tool_version();
const char* build_hash();

/// Everything needed to re-run a training or sampling invocation.
struct RunManifest {
    std::string tool_version;
    std::string build_hash;
    std::string command;
    std::string config_hash;
    std::string dataset_hash;
    std::string platform;
    std::vector<std::uint64_t> seeds;
    std::map<std::string, std::string> inputs;
};

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Hash of <root>/manifest.tsv when present, else of the sorted relative
/// paths and sizes of every file under root.
std::string dataset_fingerprint(const std::filesystem::path& root);

/// Compiler, standard library, libtorch version, OS and thread count.
std::string platform_fingerprint(int threads);

RunManifest make_manifest(std::string command, const std::string& config_text,
                          const std::filesystem::path& dataset_root, std::vector<std::uint64_t> seeds,
                          int threads);

/// Writes <dir>/run_manifest.json.
void write_run_manifest(const std::filesystem::path& dir, const RunManifest& manifest);
RunManifest read_run_manifest(const std::filesystem::path& dir);

}  // namespace wce
