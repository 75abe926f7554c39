#include "mdt/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <set>
#include <functional>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

namespace mdt {

namespace {

bool is_split_punct(unsigned char c) {
    // ASCII punctuation except apostrophe, period, comma and hyphen
    return (c >= 33 && c <= 38) || (c >= 40 && c <= 43) || c == 47 ||
           (c >= 58 && c <= 64) || (c >= 91 && c <= 96) || (c >= 123 && c <= 126);
}

bool is_digit(char c) { return c >= '0' && c <= '9'; }

} // namespace

std::vector<std::string> tokenize_13a(const std::string &text, bool lowercase) {
    std::string s = text;
    if (lowercase)
        std::transform(s.begin(), s.end(), s.begin(),
                       [](unsigned char c) { return char(std::tolower(c)); });
    std::string out;
    out.reserve(s.size() * 2);
    for (std::size_t i = 0; i < s.size(); ++i) {
        char c = s[i];
        char prev = i > 0 ? s[i - 1] : '\0';
        char next = i + 1 < s.size() ? s[i + 1] : '\0';
        if (c == '\n' || c == '\t') {
            out += ' ';
        } else if (is_split_punct(static_cast<unsigned char>(c))) {
            out += ' ';
            out += c;
            out += ' ';
        } else if ((c == '.' || c == ',') && !(is_digit(prev) && is_digit(next))) {
            // split periods and commas unless both neighbours are digits
            out += ' ';
            out += c;
            out += ' ';
        } else if (c == '-' && is_digit(prev)) {
            out += ' ';
            out += c;
            out += ' ';
        } else {
            out += c;
        }
    }
    return split_ws(out);
}

namespace {

using NgramCounts = std::unordered_map<std::string, std::size_t>;

NgramCounts count_ngrams(const std::vector<std::string> &tokens, std::size_t n) {
    NgramCounts counts;
    if (tokens.size() < n) return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        std::string key;
        for (std::size_t j = 0; j < n; ++j) {
            if (j) key += '\x1f';
            key += tokens[i + j];
        }
        ++counts[key];
    }
    return counts;
}

} // namespace

BleuScore corpus_bleu(const std::vector<std::string> &hyps, const std::vector<std::string> &refs,
                      bool case_sensitive) {
    if (hyps.empty()) throw Error("corpus_bleu: empty input");
    if (hyps.size() != refs.size())
        throw Error("corpus_bleu: " + std::to_string(hyps.size()) + " hypotheses vs " +
                    std::to_string(refs.size()) + " references");

    std::array<std::size_t, 4> correct{}, total{};
    BleuScore result;
    for (std::size_t i = 0; i < hyps.size(); ++i) {
        auto hyp = tokenize_13a(hyps[i], !case_sensitive);
        auto ref = tokenize_13a(refs[i], !case_sensitive);
        result.hyp_len += hyp.size();
        result.ref_len += ref.size();
        for (std::size_t n = 1; n <= 4; ++n) {
            auto hc = count_ngrams(hyp, n);
            auto rc = count_ngrams(ref, n);
            for (const auto &[gram, c] : hc) {
                total[n - 1] += c;
                auto it = rc.find(gram);
                if (it != rc.end()) correct[n - 1] += std::min(c, it->second);
            }
        }
    }

    if (result.hyp_len == 0) return result; // score 0

    double log_sum = 0.0;
    double smooth = 1.0;
    bool degenerate = false;
    for (std::size_t n = 0; n < 4; ++n) {
        if (total[n] == 0) {
            degenerate = true; // hypotheses shorter than n+1 tokens everywhere
            continue;
        }
        double p;
        if (correct[n] == 0) {
            smooth *= 2.0;
            p = 1.0 / (smooth * double(total[n]));
        } else {
            p = double(correct[n]) / double(total[n]);
        }
        result.precisions[n] = p;
        log_sum += std::log(p);
    }
    result.brevity_penalty =
        result.hyp_len >= result.ref_len
            ? 1.0
            : std::exp(1.0 - double(result.ref_len) / double(result.hyp_len));
    if (!degenerate)
        result.score = result.brevity_penalty * std::exp(log_sum / 4.0) * 100.0;
    return result;
}

std::string BleuScore::to_json() const {
    nlohmann::json j{{"score", score},
                     {"precisions", precisions},
                     {"bp", brevity_penalty},
                     {"hyp_len", hyp_len},
                     {"ref_len", ref_len}};
    return j.dump();
}

HumanScoreSet load_human_scores(const std::filesystem::path &csv_path) {
    std::istringstream in(read_file(csv_path));
    std::string line;
    if (!std::getline(in, line) || trim(line) != "sample_id,system,domain,score")
        throw Error("scores CSV must start with header \"sample_id,system,domain,score\": " +
                    csv_path.string());
    HumanScoreSet scores;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        std::vector<std::string> cols;
        std::size_t start = 0;
        for (std::size_t i = 0; i <= line.size(); ++i) {
            if (i == line.size() || line[i] == ',') {
                cols.push_back(line.substr(start, i - start));
                start = i + 1;
            }
        }
        if (cols.size() != 4)
            throw Error(csv_path.string() + ":" + std::to_string(line_no) + ": expected 4 columns");
        HumanScoreRow row{trim(cols[0]), trim(cols[1]), trim(cols[2]), 0};
        try {
            row.score = std::stoi(trim(cols[3]));
        } catch (const std::exception &) {
            throw Error(csv_path.string() + ":" + std::to_string(line_no) + ": bad score");
        }
        if (row.score < 1 || row.score > 4)
            throw Error(csv_path.string() + ":" + std::to_string(line_no) +
                        ": score must be in 1..4");
        scores.rows.push_back(std::move(row));
    }
    return scores;
}

void save_human_scores(const HumanScoreSet &scores, const std::filesystem::path &csv_path) {
    std::ostringstream out;
    out << "sample_id,system,domain,score\n";
    for (const auto &r : scores.rows)
        out << r.sample_id << ',' << r.system << ',' << r.domain << ',' << r.score << "\n";
    write_file(csv_path, out.str());
}

std::map<std::pair<std::string, std::string>, double>
aggregate_human(const HumanScoreSet &scores) {
    std::set<std::string> systems;
    for (const auto &r : scores.rows) systems.insert(r.system);

    std::map<std::pair<std::string, std::string>, int> seen; // (sample, system) -> count
    std::set<std::pair<std::string, std::string>> samples;   // (sample, domain)
    for (const auto &r : scores.rows) {
        if (++seen[{r.sample_id, r.system}] > 1)
            throw Error("duplicate score for sample \"" + r.sample_id + "\" system \"" +
                        r.system + "\"");
        samples.insert({r.sample_id, r.domain});
    }
    std::vector<std::string> gaps;
    for (const auto &[sample, domain] : samples)
        for (const auto &sys : systems)
            if (!seen.count({sample, sys})) gaps.push_back(sample + "/" + sys);
    if (!gaps.empty())
        throw Error("missing scores for: " + join(gaps, ", "));

    std::map<std::pair<std::string, std::string>, double> sum;
    std::map<std::pair<std::string, std::string>, std::size_t> count;
    for (const auto &r : scores.rows) {
        sum[{r.domain, r.system}] += r.score;
        ++count[{r.domain, r.system}];
    }
    std::map<std::pair<std::string, std::string>, double> mean;
    for (const auto &[key, s] : sum) mean[key] = s / double(count.at(key));
    return mean;
}

std::vector<HumanEvalRow>
sample_for_human_eval(const Corpus &test,
                      const std::map<std::string, std::vector<std::string>> &system_outputs,
                      std::size_t n, std::uint64_t seed) {
    if (!test.parallel()) throw Error("human eval sampling needs a parallel test corpus");
    if (n > test.pairs.size())
        throw Error("sample_for_human_eval: n=" + std::to_string(n) + " exceeds test size " +
                    std::to_string(test.pairs.size()));
    for (const auto &[sys, outs] : system_outputs)
        if (outs.size() != test.pairs.size())
            throw Error("system \"" + sys + "\" output count does not match test corpus");

    Rng rng(seed);
    auto picked = sample_without_replacement(test.pairs.size(), n, rng);
    std::vector<HumanEvalRow> rows;
    rows.reserve(n);
    for (auto i : picked) {
        HumanEvalRow row;
        row.id = test.pairs[i].id;
        row.src = test.pairs[i].src;
        for (const auto &[sys, outs] : system_outputs) {
            row.key.push_back(sys);
            row.outputs.push_back(outs[i]);
        }
        // blind the raters: shuffle output order per row
        for (std::size_t k = row.key.size(); k > 1; --k) {
            std::size_t j = std::size_t(rng.next_below(k));
            std::swap(row.key[k - 1], row.key[j]);
            std::swap(row.outputs[k - 1], row.outputs[j]);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_human_eval_manifest(const std::vector<HumanEvalRow> &rows,
                               const std::filesystem::path &manifest_path,
                               const std::filesystem::path &key_path) {
    std::ostringstream manifest, key;
    for (const auto &r : rows) {
        nlohmann::json m{{"id", r.id}, {"src", r.src}, {"outputs", r.outputs}};
        manifest << m.dump() << "\n";
        nlohmann::json k{{"id", r.id}, {"systems", r.key}};
        key << k.dump() << "\n";
    }
    write_file(manifest_path, manifest.str());
    write_file(key_path, key.str());
}

namespace {

std::string fmt2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

std::string fmt_delta(double d, bool human_style) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%+.2f", d);
    std::string s = buf;
    if (human_style && s.size() > 2 && s[1] == '0' && s[2] == '.')
        s.erase(1, 1); // "+0.10" -> "+.10", Table-2 house style
    return "(" + s + ")";
}

} // namespace

std::string render_report(const std::vector<ReportTable> &tables) {
    std::ostringstream out;
    for (const auto &table : tables) {
        std::vector<std::string> columns = table.columns;
        std::vector<std::string> groups = table.column_groups;
        if (groups.size() != columns.size()) groups.assign(columns.size(), "");

        // per-group average columns, in first-appearance order
        std::vector<std::string> group_order;
        for (const auto &g : groups)
            if (std::find(group_order.begin(), group_order.end(), g) == group_order.end())
                group_order.push_back(g);

        std::function<double(const std::string &, std::size_t)> cell_value =
            [&](const std::string &sys, std::size_t col) -> double {
            if (col < table.columns.size()) {
                auto it = table.values.find({sys, table.columns[col]});
                if (it == table.values.end())
                    throw Error("render_report: missing value for system \"" + sys +
                                "\" column \"" + table.columns[col] + "\"");
                return it->second;
            }
            const std::string &g = group_order[col - table.columns.size()];
            double s = 0.0;
            std::size_t n = 0;
            for (std::size_t c = 0; c < table.columns.size(); ++c)
                if (groups[c] == g) {
                    s += cell_value(sys, c);
                    ++n;
                }
            return s / double(n);
        };

        std::size_t total_cols = columns.size() + group_order.size();

        // best non-base system per column; ties go to the earliest system
        std::vector<std::string> best(total_cols);
        for (std::size_t c = 0; c < total_cols; ++c) {
            double best_v = -1e300;
            for (const auto &sys : table.systems) {
                if (sys == table.base_system) continue;
                double v = cell_value(sys, c);
                if (v > best_v) {
                    best_v = v;
                    best[c] = sys;
                }
            }
        }

        out << "## " << table.title << "\n\n";
        out << "| System |";
        for (const auto &c : columns) out << " " << c << " |";
        for (const auto &g : group_order)
            out << " Average" << (g.empty() ? "" : " " + g) << " |";
        out << "\n| ---: |";
        for (std::size_t c = 0; c < total_cols; ++c) out << " :---: |";
        out << "\n";

        for (const auto &sys : table.systems) {
            out << "| " << sys << " |";
            for (std::size_t c = 0; c < total_cols; ++c) {
                double v = cell_value(sys, c);
                std::string cell;
                if (sys == table.base_system) {
                    cell = fmt2(v);
                } else {
                    double d = v - cell_value(table.base_system, c);
                    cell = fmt2(v) + " " + fmt_delta(d, table.human_style_deltas);
                    if (best[c] == sys) cell = "**" + cell + "**";
                }
                out << " " << cell << " |";
            }
            out << "\n";
        }
        out << "\n";
    }
    return out.str();
}

} // namespace mdt
