#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace wce {

enum class Truth { Real, Fake };

const char* truth_name(Truth t);
Truth parse_truth(const std::string& s);

struct VTTItem {
    std::string item_id;
    std::filesystem::path image;   // rater-facing copy (or source when not materialized)
    Truth truth;
    std::filesystem::path source;  // original file
};

/// Blinded real/fake session. The truth column lives only in key.tsv, never
/// in the rater-facing sheet directory.
struct VTTSession {
    std::vector<VTTItem> items;
    std::uint64_t seed = 0;
    std::vector<std::string> raters;
    std::map<std::pair<std::string, std::string>, Truth> responses;  // (rater, item) -> answer

    std::size_t count(Truth t) const;
};

/// Samples n_real / n_fake files without replacement (sorted listing, seeded
/// shuffle) and interleaves them in a seeded order. Throws NotEnoughImages.
VTTSession vtt_plan(const std::vector<std::filesystem::path>& real_files,
                    const std::vector<std::filesystem::path>& fake_files, std::size_t n_real,
                    std::size_t n_fake, std::uint64_t seed);

/// Plans a session from two image directories and writes it:
///   <out>/sheet/<item>.png, <out>/sheet/answers_template.tsv, <out>/sheet/sheet.png
///   <out>/key.tsv   (sealed: item_id, truth, source)
VTTSession vtt_build(const std::filesystem::path& real_dir, const std::filesystem::path& fake_dir,
                     std::size_t n_real, std::size_t n_fake, std::uint64_t seed,
                     const std::filesystem::path& out_dir);

std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

/// Reads <session>/key.tsv.
VTTSession load_session(const std::filesystem::path& session_dir);
/// Reads a rater_id / item_id / answer TSV into `session`.
void load_responses(VTTSession& session, const std::filesystem::path& answers);
void add_response(VTTSession& session, const std::string& rater, const std::string& item, Truth answer);

struct RaterScore {
    std::string rater;
    std::optional<double> real_as_real;
    std::optional<double> fake_as_real;
};

struct VTTScore {
    /// Absent when the session has no real (resp. fake) items.
    std::optional<double> real_as_real_accuracy;
    std::optional<double> fake_as_real_rate;
    std::vector<RaterScore> per_rater;  // sorted by rater id
};

enum class Aggregation { RaterMean, Pooled };

/// Throws IncompleteResponses naming the rater and missing-answer count.
VTTScore vtt_score(const VTTSession& session, Aggregation aggregation = Aggregation::RaterMean);

void print_score(std::ostream& os, const VTTScore& score);
void write_score_tsv(const std::filesystem::path& path, const VTTScore& score);

}  // namespace wce
