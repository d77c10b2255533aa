#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

namespace wce {

inline constexpr std::uint32_t kArchiveFormatVersion = 1;

/// Single-file checkpoint container: a magic tag, a format version, a kind
/// string, named entries (text, tensor, blob, integer, real) and a trailing
/// FNV-1a checksum. Truncated or corrupted files fail with FormatError; a
/// different format version fails with VersionError.
class Archive {
public:
    struct Blob {
        std::string bytes;
    };
    using Value = std::variant<std::string, torch::Tensor, Blob, std::int64_t, double>;

    explicit Archive(std::string kind = {}) : kind_(std::move(kind)) {}

    const std::string& kind() const { return kind_; }

    void put_text(const std::string& name, std::string text) { entries_[name] = std::move(text); }
    void put_tensor(const std::string& name, const torch::Tensor& t);
    void put_blob(const std::string& name, std::string bytes) { entries_[name] = Blob{std::move(bytes)}; }
    void put_int(const std::string& name, std::int64_t v) { entries_[name] = v; }
    void put_real(const std::string& name, double v) { entries_[name] = v; }

    bool has(const std::string& name) const { return entries_.count(name) != 0; }
    const std::string& text(const std::string& name) const;
    torch::Tensor tensor(const std::string& name) const;
    const std::string& blob(const std::string& name) const;
    std::int64_t integer(const std::string& name) const;
    double real(const std::string& name) const;
    std::vector<std::string> names() const;

    /// Stores every parameter and buffer as "<prefix><qualified name>".
    void put_module(const std::string& prefix, const torch::nn::Module& module);
    /// Copies "<prefix>..." entries into the module's parameters and buffers;
    /// throws FormatError on a missing entry or shape mismatch.
    void load_module(const std::string& prefix, torch::nn::Module& module) const;

    std::string serialize() const;
    static Archive deserialize(const std::string& bytes, const std::string& expected_kind = {});

    void save(const std::filesystem::path& path) const;
    static Archive load(const std::filesystem::path& path, const std::string& expected_kind = {});

private:
    template <typename T>
    const T& get(const std::string& name, const char* what) const;

    std::string kind_;
    std::map<std::string, Value> entries_;
};

}  // namespace wce
