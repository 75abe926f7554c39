#include "mdt/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace mdt {

using nlohmann::json;

std::string provenance_name(Provenance p) {
    return p == Provenance::genuine ? "genuine" : "synthetic";
}

Provenance parse_provenance(const std::string &s) {
    if (s == "genuine") return Provenance::genuine;
    if (s == "synthetic") return Provenance::synthetic;
    throw Error("invalid provenance: \"" + s + "\"");
}

Domain Domain::checked(const std::string &name) {
    if (name.empty()) throw Error("domain name must be non-empty");
    for (char c : name) {
        if (std::isspace(static_cast<unsigned char>(c)) ||
            std::isupper(static_cast<unsigned char>(c)))
            throw Error("domain name must be lowercase without whitespace: \"" + name + "\"");
    }
    return Domain{name};
}

CorpusFormat parse_format(const std::string &s) {
    if (s == "jsonl") return CorpusFormat::jsonl;
    if (s == "tsv") return CorpusFormat::tsv;
    if (s == "plain") return CorpusFormat::plain;
    throw Error("unknown corpus format: \"" + s + "\"");
}

namespace {

[[noreturn]] void line_error(const std::filesystem::path &path, std::size_t line_no,
                             const std::string &what) {
    throw Error(path.string() + ":" + std::to_string(line_no) + ": " + what);
}

std::vector<std::string> split_tabs(const std::string &line) {
    std::vector<std::string> cols;
    std::size_t start = 0;
    while (true) {
        std::size_t tab = line.find('\t', start);
        if (tab == std::string::npos) {
            cols.push_back(line.substr(start));
            break;
        }
        cols.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
    return cols;
}

std::string auto_id(const std::filesystem::path &path, std::size_t line_no) {
    return path.stem().string() + ":" + std::to_string(line_no);
}

void check_no_tabs_newlines(const std::string &text) {
    if (text.find('\t') != std::string::npos || text.find('\n') != std::string::npos)
        throw Error("TSV export rejects text with embedded tab or newline: \"" + text + "\"");
}

} // namespace

Corpus load_corpus(const std::filesystem::path &path, CorpusFormat format,
                   const LoadOptions &opts) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open corpus file: " + path.string());
    if (format == CorpusFormat::plain && !opts.default_domain)
        throw Error("plain format requires a domain");

    Corpus corpus;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        switch (format) {
        case CorpusFormat::jsonl: {
            json rec;
            try {
                rec = json::parse(line);
            } catch (const json::exception &e) {
                line_error(path, line_no, std::string("bad JSON: ") + e.what());
            }
            if (!rec.is_object() || !rec.contains("tgt"))
                line_error(path, line_no, "record must be an object with a \"tgt\" field");
            try {
                std::string id = rec.value("id", auto_id(path, line_no));
                Domain domain = Domain::checked(rec.at("domain").get<std::string>());
                if (rec.contains("src")) {
                    ParallelPair p;
                    p.id = id;
                    p.src = rec.at("src").get<std::string>();
                    p.tgt = rec.at("tgt").get<std::string>();
                    p.domain = domain;
                    p.provenance = parse_provenance(rec.value("provenance", "genuine"));
                    if (trim(p.src).empty() || trim(p.tgt).empty())
                        line_error(path, line_no, "empty src or tgt");
                    corpus.pairs.push_back(std::move(p));
                } else {
                    MonoSegment s;
                    s.id = id;
                    s.text = rec.at("tgt").get<std::string>();
                    s.domain = domain;
                    if (trim(s.text).empty()) line_error(path, line_no, "empty text");
                    corpus.segments.push_back(std::move(s));
                }
            } catch (const json::exception &e) {
                line_error(path, line_no, std::string("bad record: ") + e.what());
            } catch (const Error &e) {
                line_error(path, line_no, e.what());
            }
            break;
        }
        case CorpusFormat::tsv: {
            auto cols = split_tabs(line);
            try {
                if (opts.monolingual) {
                    MonoSegment s;
                    s.id = auto_id(path, line_no);
                    s.text = cols[0];
                    if (cols.size() >= 2)
                        s.domain = Domain::checked(cols[1]);
                    else if (opts.default_domain)
                        s.domain = *opts.default_domain;
                    else
                        line_error(path, line_no, "monolingual TSV needs a domain column");
                    corpus.segments.push_back(std::move(s));
                } else {
                    if (cols.size() < 2) line_error(path, line_no, "parallel TSV needs src and tgt columns");
                    ParallelPair p;
                    p.id = auto_id(path, line_no);
                    p.src = cols[0];
                    p.tgt = cols[1];
                    if (cols.size() >= 3)
                        p.domain = Domain::checked(cols[2]);
                    else if (opts.default_domain)
                        p.domain = *opts.default_domain;
                    else
                        line_error(path, line_no, "parallel TSV needs a domain column");
                    if (cols.size() >= 4)
                        p.provenance = parse_provenance(cols[3]);
                    else
                        p.provenance = opts.default_provenance.value_or(Provenance::genuine);
                    if (trim(p.src).empty() || trim(p.tgt).empty())
                        line_error(path, line_no, "empty src or tgt");
                    corpus.pairs.push_back(std::move(p));
                }
            } catch (const Error &e) {
                line_error(path, line_no, e.what());
            }
            break;
        }
        case CorpusFormat::plain: {
            MonoSegment s;
            s.id = auto_id(path, line_no);
            s.text = line;
            s.domain = *opts.default_domain;
            corpus.segments.push_back(std::move(s));
            break;
        }
        }
    }

    // ids must be unique within a corpus, except in upsampled mixes where a
    // repeated id means another copy of the same pair
    if (!opts.allow_duplicate_ids) {
        std::vector<std::string> ids;
        ids.reserve(corpus.size());
        for (const auto &p : corpus.pairs) ids.push_back(p.id);
        for (const auto &s : corpus.segments) ids.push_back(s.id);
        std::sort(ids.begin(), ids.end());
        auto dup = std::adjacent_find(ids.begin(), ids.end());
        if (dup != ids.end()) throw Error("duplicate id in corpus: \"" + *dup + "\"");
    }

    if (!corpus.pairs.empty() && !corpus.segments.empty())
        throw Error("mixed parallel and monolingual records in " + path.string());
    return corpus;
}

void write_corpus(const Corpus &corpus, const std::filesystem::path &path, CorpusFormat format) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write corpus file: " + path.string());
    switch (format) {
    case CorpusFormat::jsonl:
        for (const auto &p : corpus.pairs) {
            json rec{{"id", p.id},
                     {"src", p.src},
                     {"tgt", p.tgt},
                     {"domain", p.domain.name},
                     {"provenance", provenance_name(p.provenance)}};
            out << rec.dump() << "\n";
        }
        for (const auto &s : corpus.segments) {
            json rec{{"id", s.id}, {"tgt", s.text}, {"domain", s.domain.name}};
            out << rec.dump() << "\n";
        }
        break;
    case CorpusFormat::tsv:
        for (const auto &p : corpus.pairs) {
            check_no_tabs_newlines(p.src);
            check_no_tabs_newlines(p.tgt);
            out << p.src << '\t' << p.tgt << '\t' << p.domain.name << '\t'
                << provenance_name(p.provenance) << "\n";
        }
        for (const auto &s : corpus.segments) {
            check_no_tabs_newlines(s.text);
            out << s.text << '\t' << s.domain.name << "\n";
        }
        break;
    case CorpusFormat::plain:
        for (const auto &p : corpus.pairs)
            throw Error("plain format is monolingual-only; pair id " + p.id);
        for (const auto &s : corpus.segments) out << s.text << "\n";
        break;
    }
    if (!out) throw Error("write failed: " + path.string());
}

std::pair<Corpus, Corpus> split_dev(const Corpus &corpus, std::size_t n, std::uint64_t seed) {
    if (n > corpus.size())
        throw Error("split_dev: n=" + std::to_string(n) + " exceeds corpus size " +
                    std::to_string(corpus.size()));
    Rng rng(seed);
    auto picked = sample_without_replacement(corpus.size(), n, rng);
    std::vector<bool> in_dev(corpus.size(), false);
    for (auto i : picked) in_dev[i] = true;

    Corpus train, dev;
    train.label = corpus.label;
    dev.label = corpus.label;
    auto place = [&](auto &all, auto &train_v, auto &dev_v) {
        for (auto i : picked) dev_v.push_back(all[i]);
        for (std::size_t i = 0; i < all.size(); ++i)
            if (!in_dev[i]) train_v.push_back(all[i]);
    };
    if (corpus.parallel())
        place(corpus.pairs, train.pairs, dev.pairs);
    else
        place(corpus.segments, train.segments, dev.segments);
    return {train, dev};
}

} // namespace mdt
