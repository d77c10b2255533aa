#include "wcegen/manifest.hpp"

#include <openssl/evp.h>
#include <sys/utsname.h>
#include <torch/version.h>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"
#include "wcegen/errors.hpp"

namespace fs = std::filesystem;

namespace wce {

#ifndef WCEGEN_VERSION
#define WCEGEN_VERSION "0.0.0"
#endif
#ifndef WCEGEN_BUILD_HASH
#define WCEGEN_BUILD_HASH "unknown"
#endif

const char* tool_version() { return WCEGEN_VERSION; }
const char* build_hash() { return WCEGEN_BUILD_HASH; }

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw IoError("sha256 digest failed");
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return os.str();
}

std::string sha256_file(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot read " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return sha256_hex(ss.str());
}

std::string dataset_fingerprint(const fs::path& root) {
    if (root.empty() || !fs::exists(root)) return "none";
    if (fs::exists(root / "manifest.tsv")) return sha256_file(root / "manifest.tsv");
    std::vector<std::string> rows;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file())
            rows.push_back(fs::relative(e.path(), root).generic_string() + "\t" + std::to_string(e.file_size()));
    std::sort(rows.begin(), rows.end());
    std::string joined;
    for (const auto& r : rows) joined += r + "\n";
    return sha256_hex(joined);
}

std::string platform_fingerprint(int threads) {
    std::ostringstream os;
#if defined(__clang__)
    os << "clang-" << __clang_major__ << "." << __clang_minor__;
#elif defined(__GNUC__)
    os << "gcc-" << __GNUC__ << "." << __GNUC_MINOR__;
#else
    os << "unknown-compiler";
#endif
    os << ";libtorch-" << TORCH_VERSION;
    utsname u{};
    if (uname(&u) == 0) os << ";" << u.sysname << "-" << u.machine;
    os << ";threads-" << threads;
    return os.str();
}

RunManifest make_manifest(std::string command, const std::string& config_text, const fs::path& dataset_root,
                          std::vector<std::uint64_t> seeds, int threads) {
    RunManifest m;
    m.tool_version = tool_version();
    m.build_hash = build_hash();
    m.command = std::move(command);
    m.config_hash = sha256_hex(config_text);
    m.dataset_hash = dataset_fingerprint(dataset_root);
    m.platform = platform_fingerprint(threads);
    m.seeds = std::move(seeds);
    return m;
}

void write_run_manifest(const fs::path& dir, const RunManifest& m) {
    nlohmann::ordered_json j;
    j["tool_version"] = m.tool_version;
    j["build_hash"] = m.build_hash;
    j["command"] = m.command;
    j["config_hash"] = m.config_hash;
    j["dataset_hash"] = m.dataset_hash;
    j["platform"] = m.platform;
    j["seeds"] = m.seeds;
    j["inputs"] = m.inputs;
    fs::create_directories(dir);
    std::ofstream os(dir / "run_manifest.json");
    if (!os) throw IoError("cannot write " + (dir / "run_manifest.json").string());
    os << j.dump(2) << "\n";
}

RunManifest read_run_manifest(const fs::path& dir) {
    std::ifstream is(dir / "run_manifest.json");
    if (!is) throw IoError("cannot read " + (dir / "run_manifest.json").string());
    try {
        const auto j = nlohmann::json::parse(is);
        RunManifest m;
        m.tool_version = j.at("tool_version");
        m.build_hash = j.at("build_hash");
        m.command = j.at("command");
        m.config_hash = j.at("config_hash");
        m.dataset_hash = j.at("dataset_hash");
        m.platform = j.at("platform");
        m.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("run manifest: ") + e.what());
    }
}

}  // namespace wce
