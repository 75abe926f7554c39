#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mdt/common.hpp"
#include "mdt/corpus.hpp"

namespace mdt {

struct BleuScore {
    double score = 0.0;                     // [0, 100]
    std::array<double, 4> precisions{};     // p1..p4 in [0, 1]
    double brevity_penalty = 1.0;
    std::size_t hyp_len = 0;
    std::size_t ref_len = 0;

    std::string to_json() const;
};

// mteval-13a tokenization: unicode-free punctuation splitting with the
// digit-context rules for '.', ',' and '-'.
std::vector<std::string> tokenize_13a(const std::string &text, bool lowercase = false);

// Corpus-level BLEU with clipped n-gram counts (n=1..4) and brevity penalty
// exp(1 - r/h) for h < r. Zero-match orders use exponential smoothing: an
// invented count of 1 halved once more per affected order. Orders with no
// hypothesis n-grams at all yield score 0.
BleuScore corpus_bleu(const std::vector<std::string> &hyps, const std::vector<std::string> &refs,
                      bool case_sensitive = true);

struct HumanScoreRow {
    std::string sample_id;
    std::string system;
    std::string domain;
    int score = 0; // 4-point adequacy scale
};

struct HumanScoreSet {
    std::vector<HumanScoreRow> rows;
};

HumanScoreSet load_human_scores(const std::filesystem::path &csv_path);
void save_human_scores(const HumanScoreSet &scores, const std::filesystem::path &csv_path);

// Mean adequacy per (domain, system). Errors if any (sample, system) cell of
// the grid is missing.
std::map<std::pair<std::string, std::string>, double>
aggregate_human(const HumanScoreSet &scores);

struct HumanEvalRow {
    std::string id;
    std::string src;
    std::vector<std::string> outputs; // blinded, per-row shuffled
    std::vector<std::string> key;     // system label per output slot
};

// n test items sampled uniformly without replacement; system outputs are
// shuffled per row so raters see no labels. The key is written separately.
std::vector<HumanEvalRow>
sample_for_human_eval(const Corpus &test, const std::map<std::string, std::vector<std::string>> &system_outputs,
                      std::size_t n, std::uint64_t seed);

void write_human_eval_manifest(const std::vector<HumanEvalRow> &rows,
                               const std::filesystem::path &manifest_path,
                               const std::filesystem::path &key_path);

struct ReportTable {
    std::string title;                    // e.g. "Human score" / "BLEU score"
    std::vector<std::string> columns;     // e.g. "Reviews DE"
    std::vector<std::string> column_groups; // parallel to columns; averages are per group
    std::vector<std::string> systems;     // base first by convention
    std::string base_system;
    std::map<std::pair<std::string, std::string>, double> values; // (system, column) -> value
    bool human_style_deltas = false;      // "(+.10)" instead of "(+0.10)"
};

// Markdown rendering: base row plain, other rows "value (delta)", best
// non-base value per column bolded, per-group average columns appended.
std::string render_report(const std::vector<ReportTable> &tables);

} // namespace mdt
