#include "wcegen/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "wcegen/errors.hpp"

namespace wce {
namespace {

static_assert(std::endian::native == std::endian::little, "archive format assumes little-endian hosts");

constexpr char kMagic[8] = {'W', 'C', 'E', 'C', 'K', 'P', 'T', '\0'};
constexpr char kTrailer[4] = {'E', 'N', 'D', '\0'};

enum EntryType : std::uint8_t { kText = 1, kTensor = 2, kBlob = 3, kInt = 4, kReal = 5 };
enum DType : std::uint8_t { kF32 = 0, kF64 = 1, kI64 = 2 };

std::uint64_t fnv1a(const char* data, std::size_t len) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= static_cast<unsigned char>(data[i]);
        h *= 0x100000001b3ull;
    }
    return h;
}

class Writer {
public:
    template <typename T>
    void pod(const T& v) { out_.append(reinterpret_cast<const char*>(&v), sizeof v); }
    void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
    void str(const std::string& s) {
        pod<std::uint64_t>(s.size());
        out_ += s;
    }
    std::string& buffer() { return out_; }

private:
    std::string out_;
};

class Reader {
public:
    Reader(const std::string& data, std::size_t end) : data_(data), end_(end) {}
    template <typename T>
    T pod() {
        T v;
        need(sizeof v);
        std::memcpy(&v, data_.data() + pos_, sizeof v);
        pos_ += sizeof v;
        return v;
    }
    std::string str() {
        const auto n = pod<std::uint64_t>();
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    const char* take(std::size_t n) {
        need(n);
        const char* p = data_.data() + pos_;
        pos_ += n;
        return p;
    }
    bool done() const { return pos_ == end_; }

private:
    void need(std::size_t n) const {
        if (n > end_ - pos_) throw FormatError("archive truncated");
    }
    const std::string& data_;
    std::size_t end_;
    std::size_t pos_ = 0;
};

}  // namespace

void Archive::put_tensor(const std::string& name, const torch::Tensor& t) {
    entries_[name] = t.detach().to(torch::kCPU).contiguous().clone();
}

template <typename T>
const T& Archive::get(const std::string& name, const char* what) const {
    const auto it = entries_.find(name);
    if (it == entries_.end()) throw FormatError("archive has no entry '" + name + "'");
    const T* v = std::get_if<T>(&it->second);
    if (!v) throw FormatError("archive entry '" + name + "' is not " + what);
    return *v;
}

const std::string& Archive::text(const std::string& name) const { return get<std::string>(name, "text"); }
torch::Tensor Archive::tensor(const std::string& name) const { return get<torch::Tensor>(name, "a tensor"); }
const std::string& Archive::blob(const std::string& name) const { return get<Blob>(name, "a blob").bytes; }
std::int64_t Archive::integer(const std::string& name) const { return get<std::int64_t>(name, "an integer"); }
double Archive::real(const std::string& name) const { return get<double>(name, "a real"); }

std::vector<std::string> Archive::names() const {
    std::vector<std::string> out;
    for (const auto& [k, _] : entries_) out.push_back(k);
    return out;
}

void Archive::put_module(const std::string& prefix, const torch::nn::Module& module) {
    for (const auto& p : module.named_parameters()) put_tensor(prefix + p.key(), p.value());
    for (const auto& b : module.named_buffers()) put_tensor(prefix + b.key(), b.value());
}

void Archive::load_module(const std::string& prefix, torch::nn::Module& module) const {
    torch::NoGradGuard no_grad;
    const auto copy = [&](const std::string& key, torch::Tensor& dst) {
        const auto src = tensor(prefix + key);
        if (!src.sizes().equals(dst.sizes())) {
            std::ostringstream os;
            os << "entry '" << prefix + key << "' has shape " << src.sizes() << ", model expects " << dst.sizes();
            throw FormatError(os.str());
        }
        dst.copy_(src.to(dst.scalar_type()));
    };
    for (auto& p : module.named_parameters()) copy(p.key(), p.value());
    for (auto& b : module.named_buffers()) copy(b.key(), b.value());
}

std::string Archive::serialize() const {
    Writer w;
    w.bytes(kMagic, sizeof kMagic);
    w.pod<std::uint32_t>(kArchiveFormatVersion);
    w.str(kind_);
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(entries_.size()));
    for (const auto& [name, value] : entries_) {
        w.str(name);
        if (const auto* s = std::get_if<std::string>(&value)) {
            w.pod<std::uint8_t>(kText);
            w.str(*s);
        } else if (const auto* t = std::get_if<torch::Tensor>(&value)) {
            w.pod<std::uint8_t>(kTensor);
            DType dt;
            switch (t->scalar_type()) {
                case torch::kFloat32: dt = kF32; break;
                case torch::kFloat64: dt = kF64; break;
                case torch::kInt64: dt = kI64; break;
                default: throw FormatError("unsupported tensor dtype for '" + name + "'");
            }
            w.pod<std::uint8_t>(dt);
            w.pod<std::uint32_t>(static_cast<std::uint32_t>(t->dim()));
            for (auto d : t->sizes()) w.pod<std::int64_t>(d);
            w.bytes(t->data_ptr(), static_cast<std::size_t>(t->numel()) * t->element_size());
        } else if (const auto* b = std::get_if<Blob>(&value)) {
            w.pod<std::uint8_t>(kBlob);
            w.str(b->bytes);
        } else if (const auto* i = std::get_if<std::int64_t>(&value)) {
            w.pod<std::uint8_t>(kInt);
            w.pod(*i);
        } else {
            w.pod<std::uint8_t>(kReal);
            w.pod(std::get<double>(value));
        }
    }
    w.bytes(kTrailer, sizeof kTrailer);
    const std::uint64_t sum = fnv1a(w.buffer().data(), w.buffer().size());
    w.pod(sum);
    return std::move(w.buffer());
}

Archive Archive::deserialize(const std::string& bytes, const std::string& expected_kind) {
    constexpr std::size_t kFooter = sizeof kTrailer + sizeof(std::uint64_t);
    if (bytes.size() < sizeof kMagic + kFooter || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
        throw FormatError("not a checkpoint archive (bad magic)");
    // Version is checked before the checksum so a newer archive reports as such.
    if (bytes.size() >= sizeof kMagic + 4) {
        std::uint32_t version;
        std::memcpy(&version, bytes.data() + sizeof kMagic, sizeof version);
        if (version != kArchiveFormatVersion) {
            std::ostringstream os;
            os << "archive format version " << version << ", this build reads " << kArchiveFormatVersion;
            throw VersionError(os.str());
        }
    }
    const std::size_t body = bytes.size() - sizeof(std::uint64_t);
    std::uint64_t stored;
    std::memcpy(&stored, bytes.data() + body, sizeof stored);
    if (std::memcmp(bytes.data() + body - sizeof kTrailer, kTrailer, sizeof kTrailer) != 0 ||
        fnv1a(bytes.data(), body) != stored)
        throw FormatError("archive truncated or corrupted (checksum mismatch)");

    Reader r(bytes, body - sizeof kTrailer);
    r.take(sizeof kMagic);
    r.pod<std::uint32_t>();
    Archive a(r.str());
    if (!expected_kind.empty() && a.kind_ != expected_kind)
        throw FormatError("archive holds a '" + a.kind_ + "' checkpoint, expected '" + expected_kind + "'");
    const auto count = r.pod<std::uint32_t>();
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = r.str();
        switch (r.pod<std::uint8_t>()) {
            case kText: a.entries_[name] = r.str(); break;
            case kBlob: a.entries_[name] = Blob{r.str()}; break;
            case kInt: a.entries_[name] = r.pod<std::int64_t>(); break;
            case kReal: a.entries_[name] = r.pod<double>(); break;
            case kTensor: {
                const auto dt = r.pod<std::uint8_t>();
                const auto ndim = r.pod<std::uint32_t>();
                if (ndim > 8) throw FormatError("tensor '" + name + "' has implausible rank");
                std::vector<int64_t> dims(ndim);
                for (auto& d : dims) {
                    d = r.pod<std::int64_t>();
                    if (d < 0) throw FormatError("tensor '" + name + "' has a negative dimension");
                }
                torch::ScalarType st;
                switch (dt) {
                    case kF32: st = torch::kFloat32; break;
                    case kF64: st = torch::kFloat64; break;
                    case kI64: st = torch::kInt64; break;
                    default: throw FormatError("tensor '" + name + "' has unknown dtype");
                }
                auto t = torch::empty(dims, st);
                const std::size_t n = static_cast<std::size_t>(t.numel()) * t.element_size();
                std::memcpy(t.data_ptr(), r.take(n), n);
                a.entries_[name] = t;
                break;
            }
            default: throw FormatError("entry '" + name + "' has unknown type");
        }
    }
    if (!r.done()) throw FormatError("trailing bytes after the last entry");
    return a;
}

void Archive::save(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const std::string bytes = serialize();
    // Sibling file then rename: readers never observe a partial checkpoint.
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("cannot write " + tmp);
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!os) throw IoError("write failed: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

Archive Archive::load(const std::filesystem::path& path, const std::string& expected_kind) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    try {
        return deserialize(ss.str(), expected_kind);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.message());
    } catch (const VersionError& e) {
        throw VersionError(path.string() + ": " + e.message());
    }
}

}  // namespace wce
