#include "wcegen/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "wcegen/errors.hpp"

namespace fs = std::filesystem;

namespace wce {
namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

// Strips a trailing # comment that is not inside quotes.
std::string strip_comment(const std::string& line) {
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') quoted = !quoted;
        if (line[i] == '#' && !quoted) return line.substr(0, i);
    }
    return line;
}

std::string fmt_real(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    std::string s = os.str();
    // Round-trip precision; prefer the shortest representation that parses back.
    for (int p = 1; p <= 17; ++p) {
        std::ostringstream t;
        t << std::setprecision(p) << v;
        if (std::stod(t.str()) == v) return t.str();
    }
    return s;
}

std::string quote(const std::string& s) { return "\"" + s + "\""; }

template <typename T>
std::string list_text(const std::vector<T>& v) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v[i];
    os << "]";
    return os.str();
}

std::string slot_list_text(const std::vector<MaskSlot>& v) {
    std::vector<std::string> q;
    for (auto s : v) q.push_back(quote(slot_name(s)));
    return list_text(q);
}

class Fields {
public:
    Fields(const KeyValueDocument& doc, std::vector<std::string>& errors) : doc_(doc), errors_(errors) {}

    template <typename Int>
    void integer(const std::string& sec, const std::string& key, Int& dst, long long lo,
                 long long hi = std::numeric_limits<long long>::max()) {
        const auto* e = doc_.find(sec, key);
        if (!e) return;
        const auto v = kv::to_int(e->raw);
        if (!v) return bad_type(sec, key, *e, "an integer");
        if (*v < lo || *v > hi) {
            std::ostringstream os;
            os << name(sec, key) << " = " << *v << " (line " << e->line << ") must be ";
            if (hi == std::numeric_limits<long long>::max()) os << ">= " << lo;
            else os << "in [" << lo << ", " << hi << "]";
            errors_.push_back(os.str());
            return;
        }
        dst = static_cast<Int>(*v);
    }

    void unsigned64(const std::string& sec, const std::string& key, std::uint64_t& dst) {
        const auto* e = doc_.find(sec, key);
        if (!e) return;
        const std::string raw = trim(e->raw);
        std::uint64_t v = 0;
        const auto [p, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
        if (ec != std::errc{} || p != raw.data() + raw.size()) return bad_type(sec, key, *e, "a nonnegative integer");
        dst = v;
    }

    /// Bounds are open when the matching flag is set.
    void real(const std::string& sec, const std::string& key, double& dst, double lo, double hi,
              bool lo_open, bool hi_open) {
        const auto* e = doc_.find(sec, key);
        if (!e) return;
        const auto v = kv::to_real(e->raw);
        if (!v) return bad_type(sec, key, *e, "a number");
        const bool ok_lo = lo_open ? *v > lo : *v >= lo;
        const bool ok_hi = hi_open ? *v < hi : *v <= hi;
        if (!ok_lo || !ok_hi) {
            std::ostringstream os;
            os << name(sec, key) << " = " << e->raw << " (line " << e->line << ") violates "
               << fmt_real(lo) << (lo_open ? " < " : " <= ") << key << (hi_open ? " < " : " <= ")
               << (hi == std::numeric_limits<double>::infinity() ? "inf" : fmt_real(hi));
            errors_.push_back(os.str());
            return;
        }
        dst = *v;
    }

    void string(const std::string& sec, const std::string& key, std::string& dst) {
        const auto* e = doc_.find(sec, key);
        if (!e) return;
        const auto v = kv::to_string(e->raw);
        if (!v) return bad_type(sec, key, *e, "a string");
        dst = *v;
    }

    bool int_list(const std::string& sec, const std::string& key, std::vector<int>& dst) {
        const auto* e = doc_.find(sec, key);
        if (!e) return false;
        const auto items = kv::to_list(e->raw);
        if (!items) return bad_type(sec, key, *e, "a list"), false;
        std::vector<int> out;
        for (const auto& it : *items) {
            const auto v = kv::to_int(it);
            if (!v) return bad_type(sec, key, *e, "a list of integers"), false;
            out.push_back(static_cast<int>(*v));
        }
        dst = std::move(out);
        return true;
    }

    bool slot_list(const std::string& sec, const std::string& key, std::vector<MaskSlot>& dst) {
        const auto* e = doc_.find(sec, key);
        if (!e) return false;
        const auto items = kv::to_list(e->raw);
        if (!items) return bad_type(sec, key, *e, "a list of mask ids"), false;
        std::vector<MaskSlot> out;
        for (const auto& it : *items) {
            const auto s = kv::to_string(it);
            try {
                out.push_back(parse_slot(s.value_or("?")));
            } catch (const ConfigError& err) {
                errors_.push_back(name(sec, key) + " (line " + std::to_string(e->line) + "): " + err.message());
                return false;
            }
        }
        dst = std::move(out);
        return true;
    }

    bool slot(const std::string& sec, const std::string& key, MaskSlot& dst) {
        std::string raw;
        const auto* e = doc_.find(sec, key);
        if (!e) return false;
        string(sec, key, raw);
        try {
            dst = parse_slot(raw);
        } catch (const ConfigError& err) {
            errors_.push_back(name(sec, key) + " (line " + std::to_string(e->line) + "): " + err.message());
            return false;
        }
        return true;
    }

private:
    static std::string name(const std::string& sec, const std::string& key) {
        return sec.empty() ? key : sec + "." + key;
    }
    void bad_type(const std::string& sec, const std::string& key, const KeyValueDocument::Entry& e,
                  const char* expected) {
        errors_.push_back(name(sec, key) + " = " + e.raw + " (line " + std::to_string(e.line) +
                          ") is not " + expected);
    }

    const KeyValueDocument& doc_;
    std::vector<std::string>& errors_;
};

void read_ae(Fields& f, AEConfig& ae) {
    f.integer("ae", "downsample_factor", ae.downsample_factor, 1, 4);
    f.integer("ae", "latent_channels", ae.latent_channels, 1);
    f.int_list("ae", "hidden_widths", ae.hidden_widths);
    f.real("ae", "kl_weight", ae.kl_weight, 0.0, std::numeric_limits<double>::infinity(), false, true);
}

void read_unet(Fields& f, UNetConfig& u) {
    f.integer("unet", "levels", u.levels, 1, 8);
    f.integer("unet", "base_channels", u.base_channels, 2);
    f.int_list("unet", "channel_multipliers", u.channel_multipliers);
    f.integer("unet", "time_embed_dim", u.time_embed_dim, 1);
    f.integer("unet", "mask_embed_channels", u.mask_embed_channels, 1);
    f.integer("unet", "norm_groups", u.norm_groups, 1);
    std::vector<MaskSlot> enc, dec;
    const bool has_enc = f.slot_list("unet", "encoder", enc);
    const bool has_dec = f.slot_list("unet", "decoder", dec);
    u.plan = has_enc ? InjectionPlan::mirrored(enc) : InjectionPlan::standard(u.levels);
    if (has_dec) u.plan.decoder = dec;
    f.slot("unet", "middle", u.plan.middle);
}

void read_schedule(Fields& f, ScheduleConfig& s, std::vector<std::string>& errors) {
    f.integer("schedule", "T", s.T, 1);
    f.real("schedule", "beta_start", s.beta_start, 0.0, 1.0, true, true);
    f.real("schedule", "beta_end", s.beta_end, 0.0, 1.0, true, true);
    std::string kind = "linear";
    f.string("schedule", "kind", kind);
    if (kind != "linear") errors.push_back("schedule.kind = \"" + kind + "\" is not supported (only \"linear\")");
    if (s.beta_start > s.beta_end) errors.push_back("schedule.beta_start must not exceed schedule.beta_end");
}

void report_unread(const KeyValueDocument& doc, std::vector<std::string>& errors) {
    for (const auto& k : doc.unread()) errors.push_back("unknown key " + k);
}

template <typename T>
T parse_section(const std::string& text, void (*read)(Fields&, T&), const char* what) {
    std::vector<std::string> errors;
    const auto doc = KeyValueDocument::parse(text, errors);
    Fields f(doc, errors);
    T out;
    read(f, out);
    report_unread(doc, errors);
    if (!errors.empty()) throw ConfigError(std::string(what) + ": " + errors.front());
    return out;
}

}  // namespace

namespace kv {

std::optional<long long> to_int(const std::string& raw) {
    const std::string s = trim(raw);
    long long v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

std::optional<double> to_real(const std::string& raw) {
    const std::string s = trim(raw);
    if (s.empty()) return std::nullopt;
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) return std::nullopt;
        return v;
    } catch (const std::logic_error&) {
        return std::nullopt;
    }
}

std::optional<std::string> to_string(const std::string& raw) {
    const std::string s = trim(raw);
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') {
        const std::string inner = s.substr(1, s.size() - 2);
        if (inner.find('"') != std::string::npos) return std::nullopt;
        return inner;
    }
    if (s.empty() || s.find_first_of("\"[],") != std::string::npos) return std::nullopt;
    return s;
}

std::optional<std::vector<std::string>> to_list(const std::string& raw) {
    const std::string s = trim(raw);
    if (s.size() < 2 || s.front() != '[' || s.back() != ']') return std::nullopt;
    std::vector<std::string> out;
    const std::string inner = trim(s.substr(1, s.size() - 2));
    if (inner.empty()) return out;
    std::size_t start = 0;
    while (true) {
        const auto comma = inner.find(',', start);
        const std::string item = trim(inner.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
        if (item.empty()) return std::nullopt;
        out.push_back(item);
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

}  // namespace kv

KeyValueDocument KeyValueDocument::parse(const std::string& text, std::vector<std::string>& errors) {
    KeyValueDocument doc;
    std::istringstream is(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::string s = trim(strip_comment(line));
        if (s.empty()) continue;
        if (s.front() == '[' && s.back() == ']' && s.find('=') == std::string::npos) {
            section = trim(s.substr(1, s.size() - 2));
            if (section.empty()) errors.push_back("line " + std::to_string(lineno) + ": empty section name");
            continue;
        }
        const auto eq = s.find('=');
        if (eq == std::string::npos) {
            errors.push_back("line " + std::to_string(lineno) + ": expected 'key = value'");
            continue;
        }
        const std::string key = trim(s.substr(0, eq));
        const std::string value = trim(s.substr(eq + 1));
        if (key.empty() || value.empty()) {
            errors.push_back("line " + std::to_string(lineno) + ": empty key or value");
            continue;
        }
        auto& sec = doc.sections_[section];
        if (sec.count(key)) {
            errors.push_back("line " + std::to_string(lineno) + ": duplicate key " +
                             (section.empty() ? key : section + "." + key));
            continue;
        }
        sec[key] = Entry{value, lineno};
    }
    return doc;
}

const KeyValueDocument::Entry* KeyValueDocument::find(const std::string& section, const std::string& key) const {
    const auto s = sections_.find(section);
    if (s == sections_.end()) return nullptr;
    const auto k = s->second.find(key);
    if (k == s->second.end()) return nullptr;
    read_[section + "." + key] = true;
    return &k->second;
}

std::vector<std::string> KeyValueDocument::unread() const {
    std::vector<std::string> out;
    for (const auto& [sec, keys] : sections_)
        for (const auto& [key, _] : keys)
            if (!read_.count(sec + "." + key)) out.push_back(sec.empty() ? key : sec + "." + key);
    return out;
}

ConfigReport parse_config_text(const std::string& text, const fs::path& base_dir) {
    ConfigReport report;
    report.raw_text = text;
    auto& errors = report.violations;
    const auto doc = KeyValueDocument::parse(text, errors);
    Fields f(doc, errors);
    TrainConfig cfg;

    if (!doc.find("", "config_version")) {
        errors.push_back("config_version is required (current version " + std::to_string(kConfigVersion) + ")");
    } else {
        int version = 0;
        f.integer("", "config_version", version, 0);
        if (version != 0 && version != kConfigVersion)
            errors.push_back("config_version = " + std::to_string(version) + " is not supported (expected " +
                             std::to_string(kConfigVersion) + ")");
    }

    std::string root, layout = "paired", out_dir;
    f.string("data", "root", root);
    if (root.empty()) errors.push_back("data.root is required");
    else cfg.data_root = fs::path(root).is_absolute() ? fs::path(root) : base_dir / root;
    f.string("data", "layout", layout);
    if (layout == "paired") cfg.layout = FolderLayout::Paired;
    else if (layout == "kvasir") cfg.layout = FolderLayout::Kvasir;
    else errors.push_back("data.layout = \"" + layout + "\" must be \"paired\" or \"kvasir\"");
    f.integer("data", "image_size", cfg.image_size, 8);

    read_ae(f, cfg.ae.model);
    f.integer("ae", "steps", cfg.ae.steps, 1);
    f.integer("ae", "batch_size", cfg.ae.batch_size, 1);
    f.real("ae", "learning_rate", cfg.ae.learning_rate, 0.0, 1.0, true, false);

    read_unet(f, cfg.unet);
    read_schedule(f, cfg.schedule, errors);

    f.integer("train", "batch_size", cfg.batch_size, 1);
    f.integer("train", "steps", cfg.steps, 1);
    f.real("train", "learning_rate", cfg.learning_rate, 0.0, 1.0, true, false);
    f.real("train", "ema_decay", cfg.ema_decay, 0.0, 1.0, true, true);
    f.unsigned64("train", "seed", cfg.seed);
    f.integer("train", "checkpoint_every", cfg.checkpoint_every, 1);
    f.string("train", "out_dir", out_dir);
    if (!out_dir.empty()) cfg.out_dir = fs::path(out_dir).is_absolute() ? fs::path(out_dir) : base_dir / out_dir;
    else cfg.out_dir = base_dir / cfg.out_dir;
    f.integer("train", "threads", cfg.threads, 1, 256);

    report_unread(doc, errors);

    cfg.unet.latent_channels = cfg.ae.model.latent_channels;
    for (auto& v : cfg.ae.model.violations()) errors.push_back(v);
    for (auto& v : cfg.unet.violations()) errors.push_back(v);
    const int f_ds = cfg.ae.model.downsample_factor;
    if (f_ds > 0 && cfg.image_size % f_ds != 0) {
        errors.push_back("data.image_size = " + std::to_string(cfg.image_size) +
                         " is not divisible by ae.downsample_factor = " + std::to_string(f_ds));
    } else if (f_ds > 0 && cfg.unet.levels >= 1 && cfg.unet.levels <= 8) {
        const int step = 1 << (cfg.unet.levels - 1);
        if (cfg.latent_size() % step != 0)
            errors.push_back("latent size " + std::to_string(cfg.latent_size()) + " is not divisible by 2^(levels-1) = " +
                             std::to_string(step));
    }

    if (errors.empty()) report.config = std::move(cfg);
    return report;
}

ConfigReport validate_config(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        ConfigReport r;
        r.violations.push_back("cannot read config file " + path.string());
        return r;
    }
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_config_text(ss.str(), path.parent_path());
}

std::string ae_section(const AEConfig& a) {
    std::ostringstream os;
    os << "[ae]\n"
       << "downsample_factor = " << a.downsample_factor << "\n"
       << "latent_channels = " << a.latent_channels << "\n"
       << "hidden_widths = " << list_text(a.hidden_widths) << "\n"
       << "kl_weight = " << fmt_real(a.kl_weight) << "\n";
    return os.str();
}

std::string unet_section(const UNetConfig& u) {
    std::ostringstream os;
    os << "[unet]\n"
       << "levels = " << u.levels << "\n"
       << "base_channels = " << u.base_channels << "\n"
       << "channel_multipliers = " << list_text(u.channel_multipliers) << "\n"
       << "time_embed_dim = " << u.time_embed_dim << "\n"
       << "mask_embed_channels = " << u.mask_embed_channels << "\n"
       << "norm_groups = " << u.norm_groups << "\n"
       << "encoder = " << slot_list_text(u.plan.encoder) << "\n"
       << "middle = " << quote(slot_name(u.plan.middle)) << "\n"
       << "decoder = " << slot_list_text(u.plan.decoder) << "\n";
    return os.str();
}

std::string schedule_section(const ScheduleConfig& s) {
    std::ostringstream os;
    os << "[schedule]\n"
       << "T = " << s.T << "\n"
       << "beta_start = " << fmt_real(s.beta_start) << "\n"
       << "beta_end = " << fmt_real(s.beta_end) << "\n"
       << "kind = \"linear\"\n";
    return os.str();
}

UNetConfig parse_unet_section(const std::string& text) {
    // latent_channels travels with the autoencoder in run configs; in
    // checkpoint metadata it is stored explicitly.
    std::vector<std::string> errors;
    const auto doc = KeyValueDocument::parse(text, errors);
    Fields f(doc, errors);
    UNetConfig out;
    read_unet(f, out);
    f.integer("unet", "latent_channels", out.latent_channels, 1);
    report_unread(doc, errors);
    for (auto& v : out.violations()) errors.push_back(v);
    if (!errors.empty()) throw ConfigError("unet section: " + errors.front());
    return out;
}

AEConfig parse_ae_section(const std::string& text) {
    auto out = parse_section<AEConfig>(text, &read_ae, "ae section");
    out.validate();
    return out;
}

ScheduleConfig parse_schedule_section(const std::string& text) {
    std::vector<std::string> errors;
    const auto doc = KeyValueDocument::parse(text, errors);
    Fields f(doc, errors);
    ScheduleConfig out;
    read_schedule(f, out, errors);
    report_unread(doc, errors);
    if (!errors.empty()) throw ConfigError("schedule section: " + errors.front());
    return out;
}

std::string echo_config(const TrainConfig& c) {
    std::ostringstream os;
    os << "config_version = " << c.config_version << "\n\n"
       << "[data]\n"
       << "root = " << quote(c.data_root.string()) << "\n"
       << "layout = " << quote(c.layout == FolderLayout::Paired ? "paired" : "kvasir") << "\n"
       << "image_size = " << c.image_size << "\n\n"
       << ae_section(c.ae.model)
       << "steps = " << c.ae.steps << "\n"
       << "batch_size = " << c.ae.batch_size << "\n"
       << "learning_rate = " << fmt_real(c.ae.learning_rate) << "\n\n";
    // latent_channels is implied by the autoencoder section.
    std::string unet = unet_section(c.unet);
    os << unet << "\n"
       << schedule_section(c.schedule) << "\n"
       << "[train]\n"
       << "batch_size = " << c.batch_size << "\n"
       << "steps = " << c.steps << "\n"
       << "learning_rate = " << fmt_real(c.learning_rate) << "\n"
       << "ema_decay = " << fmt_real(c.ema_decay) << "\n"
       << "seed = " << c.seed << "\n"
       << "checkpoint_every = " << c.checkpoint_every << "\n"
       << "out_dir = " << quote(c.out_dir.string()) << "\n"
       << "threads = " << c.threads << "\n";
    return os.str();
}

}  // namespace wce
