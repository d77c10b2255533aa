#include "wcegen/vtt.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "wcegen/errors.hpp"
#include "wcegen/image.hpp"
#include "wcegen/rng.hpp"

namespace fs = std::filesystem;

namespace wce {
namespace {

constexpr std::uint64_t kVttDomain = 0x77E5'5100ull;

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.next() % i);
        std::swap(v[i - 1], v[j]);
    }
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(line);
    while (std::getline(is, cur, '\t')) {
        if (!cur.empty() && cur.back() == '\r') cur.pop_back();
        out.push_back(cur);
    }
    return out;
}

std::string fmt(const std::optional<double>& v) {
    if (!v) return "NA";
    std::ostringstream os;
    os << std::setprecision(6) << *v;
    return os.str();
}

}  // namespace

const char* truth_name(Truth t) { return t == Truth::Real ? "real" : "fake"; }

Truth parse_truth(const std::string& s) {
    const std::string l = lower(s);
    if (l == "real") return Truth::Real;
    if (l == "fake") return Truth::Fake;
    throw FormatError("answer '" + s + "' must be 'real' or 'fake'");
}

std::size_t VTTSession::count(Truth t) const {
    return static_cast<std::size_t>(
        std::count_if(items.begin(), items.end(), [t](const VTTItem& i) { return i.truth == t; }));
}

std::vector<fs::path> list_images(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IoError(dir.string() + " is not a directory");
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const std::string ext = lower(e.path().extension().string());
        if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

VTTSession vtt_plan(const std::vector<fs::path>& real_files, const std::vector<fs::path>& fake_files,
                    std::size_t n_real, std::size_t n_fake, std::uint64_t seed) {
    if (real_files.size() < n_real || fake_files.size() < n_fake) {
        std::ostringstream os;
        os << "requested " << n_real << " real / " << n_fake << " fake, available " << real_files.size()
           << " / " << fake_files.size();
        throw NotEnoughImages(os.str());
    }
    if (n_real + n_fake == 0) throw NotEnoughImages("a session needs at least one item");
    Rng rng(stream_key(seed, 0, kVttDomain));
    auto reals = real_files;
    auto fakes = fake_files;
    shuffle(reals, rng);
    shuffle(fakes, rng);

    std::vector<std::pair<fs::path, Truth>> picked;
    for (std::size_t i = 0; i < n_real; ++i) picked.emplace_back(reals[i], Truth::Real);
    for (std::size_t i = 0; i < n_fake; ++i) picked.emplace_back(fakes[i], Truth::Fake);
    shuffle(picked, rng);

    const std::size_t total = picked.size();
    const int width = std::max<int>(3, static_cast<int>(std::to_string(total).size()));
    VTTSession s;
    s.seed = seed;
    for (std::size_t i = 0; i < total; ++i) {
        std::ostringstream id;
        id << std::setw(width) << std::setfill('0') << i + 1;
        s.items.push_back({id.str(), picked[i].first, picked[i].second, picked[i].first});
    }
    return s;
}

VTTSession vtt_build(const fs::path& real_dir, const fs::path& fake_dir, std::size_t n_real, std::size_t n_fake,
                     std::uint64_t seed, const fs::path& out_dir) {
    VTTSession s = vtt_plan(list_images(real_dir), list_images(fake_dir), n_real, n_fake, seed);
    const fs::path sheet = out_dir / "sheet";
    fs::create_directories(sheet);

    constexpr int kThumb = 64;
    const int cols = static_cast<int>(std::min<std::size_t>(10, s.items.size()));
    const int rows = static_cast<int>((s.items.size() + cols - 1) / cols);
    RgbImage grid(cols * kThumb, rows * kThumb, 1.0f);

    for (std::size_t i = 0; i < s.items.size(); ++i) {
        auto& item = s.items[i];
        // Re-encoding drops any metadata in the source that could hint at its origin.
        const RgbImage img = from_raster(read_image(item.source));
        item.image = sheet / (item.item_id + ".png");
        write_png(item.image, to_raster(img));
        const RgbImage thumb = resize(img, kThumb, kThumb);
        const int gx = static_cast<int>(i) % cols * kThumb, gy = static_cast<int>(i) / cols * kThumb;
        for (int r = 0; r < kThumb; ++r)
            for (int c = 0; c < kThumb; ++c)
                for (int ch = 0; ch < 3; ++ch) grid.at(gy + r, gx + c, ch) = thumb.at(r, c, ch);
    }
    write_png(sheet / "sheet.png", to_raster(grid));

    std::ofstream tmpl(sheet / "answers_template.tsv");
    tmpl << "rater_id\titem_id\tanswer\n";
    for (const auto& item : s.items) tmpl << "RATER\t" << item.item_id << "\t\n";
    if (!tmpl) throw IoError("cannot write answers template");

    std::ofstream key(out_dir / "key.tsv");
    key << "# seed\t" << seed << "\n" << "item_id\ttruth\tsource\n";
    for (const auto& item : s.items)
        key << item.item_id << '\t' << truth_name(item.truth) << '\t' << item.source.string() << '\n';
    if (!key) throw IoError("cannot write key.tsv");
    return s;
}

VTTSession load_session(const fs::path& session_dir) {
    const fs::path key_path = session_dir / "key.tsv";
    std::ifstream is(key_path);
    if (!is) throw IoError("cannot read " + key_path.string());
    VTTSession s;
    std::string line;
    bool header = false;
    std::set<std::string> seen;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (line.rfind("# seed\t", 0) == 0) {
            s.seed = std::stoull(line.substr(7));
            continue;
        }
        const auto f = split_tabs(line);
        if (!header) {
            if (f.size() < 2 || f[0] != "item_id" || f[1] != "truth") throw FormatError(key_path.string() + ": bad header");
            header = true;
            continue;
        }
        if (f.size() < 2) throw FormatError(key_path.string() + ": malformed row '" + line + "'");
        if (!seen.insert(f[0]).second) throw FormatError(key_path.string() + ": duplicate item " + f[0]);
        const fs::path src = f.size() > 2 ? fs::path(f[2]) : fs::path();
        s.items.push_back({f[0], session_dir / "sheet" / (f[0] + ".png"), parse_truth(f[1]), src});
    }
    if (!header) throw FormatError(key_path.string() + ": empty key");
    return s;
}

void add_response(VTTSession& s, const std::string& rater, const std::string& item, Truth answer) {
    const bool known = std::any_of(s.items.begin(), s.items.end(), [&](const VTTItem& i) { return i.item_id == item; });
    if (!known) throw FormatError("response for unknown item '" + item + "'");
    if (!s.responses.emplace(std::make_pair(rater, item), answer).second)
        throw FormatError("duplicate response from rater '" + rater + "' for item '" + item + "'");
    if (std::find(s.raters.begin(), s.raters.end(), rater) == s.raters.end()) s.raters.push_back(rater);
}

void load_responses(VTTSession& s, const fs::path& answers) {
    std::ifstream is(answers);
    if (!is) throw IoError("cannot read " + answers.string());
    std::string line;
    bool header = false;
    while (std::getline(is, line)) {
        if (line.empty() || line == "\r") continue;
        const auto f = split_tabs(line);
        if (!header) {
            if (f.size() < 3 || f[0] != "rater_id" || f[1] != "item_id" || f[2] != "answer")
                throw FormatError(answers.string() + ": header must be rater_id, item_id, answer");
            header = true;
            continue;
        }
        if (f.size() < 3 || f[2].empty()) continue;  // unanswered template row
        add_response(s, f[0], f[1], parse_truth(f[2]));
    }
}

VTTScore vtt_score(const VTTSession& s, Aggregation aggregation) {
    const std::size_t n_real = s.count(Truth::Real), n_fake = s.count(Truth::Fake);
    std::vector<std::string> raters = s.raters;
    std::sort(raters.begin(), raters.end());
    if (raters.empty()) throw IncompleteResponses("no responses recorded");

    VTTScore score;
    double sum_rr = 0.0, sum_fr = 0.0;
    std::size_t pooled_rr = 0, pooled_fr = 0;
    for (const auto& rater : raters) {
        std::size_t missing = 0, rr = 0, fr = 0;
        for (const auto& item : s.items) {
            const auto it = s.responses.find({rater, item.item_id});
            if (it == s.responses.end()) {
                ++missing;
                continue;
            }
            if (it->second == Truth::Real) (item.truth == Truth::Real ? rr : fr) += 1;
        }
        if (missing) {
            std::ostringstream os;
            os << "rater '" << rater << "' is missing " << missing << " answer(s)";
            throw IncompleteResponses(os.str());
        }
        RaterScore r{rater, std::nullopt, std::nullopt};
        if (n_real) r.real_as_real = static_cast<double>(rr) / static_cast<double>(n_real);
        if (n_fake) r.fake_as_real = static_cast<double>(fr) / static_cast<double>(n_fake);
        sum_rr += r.real_as_real.value_or(0.0);
        sum_fr += r.fake_as_real.value_or(0.0);
        pooled_rr += rr;
        pooled_fr += fr;
        score.per_rater.push_back(r);
    }
    const auto k = static_cast<double>(raters.size());
    if (aggregation == Aggregation::RaterMean) {
        if (n_real) score.real_as_real_accuracy = sum_rr / k;
        if (n_fake) score.fake_as_real_rate = sum_fr / k;
    } else {
        if (n_real) score.real_as_real_accuracy = static_cast<double>(pooled_rr) / (k * static_cast<double>(n_real));
        if (n_fake) score.fake_as_real_rate = static_cast<double>(pooled_fr) / (k * static_cast<double>(n_fake));
    }
    return score;
}

void print_score(std::ostream& os, const VTTScore& score) {
    os << "real-as-real accuracy: " << fmt(score.real_as_real_accuracy) << "\n"
       << "fake-as-real rate:     " << fmt(score.fake_as_real_rate) << "\n"
       << "raters: " << score.per_rater.size() << "\n";
    for (const auto& r : score.per_rater)
        os << "  " << r.rater << ": real-as-real " << fmt(r.real_as_real) << ", fake-as-real "
           << fmt(r.fake_as_real) << "\n";
}

void write_score_tsv(const fs::path& path, const VTTScore& score) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path.string());
    os << "rater\treal_as_real\tfake_as_real\n";
    for (const auto& r : score.per_rater)
        os << r.rater << '\t' << fmt(r.real_as_real) << '\t' << fmt(r.fake_as_real) << '\n';
    os << "ALL\t" << fmt(score.real_as_real_accuracy) << '\t' << fmt(score.fake_as_real_rate) << '\n';
}

}  // namespace wce
