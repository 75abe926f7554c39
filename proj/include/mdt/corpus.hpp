#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mdt/common.hpp"

namespace mdt {

enum class Provenance { genuine, synthetic };

std::string provenance_name(Provenance p);
Provenance parse_provenance(const std::string &s);

// Domain names are lowercase identifiers without whitespace.
struct Domain {
    std::string name;

    static Domain checked(const std::string &name);
    bool operator==(const Domain &o) const = default;
    auto operator<=>(const Domain &o) const = default;
};

struct ParallelPair {
    std::string id;
    std::string src;
    std::string tgt;
    Domain domain;
    Provenance provenance = Provenance::genuine;

    bool operator==(const ParallelPair &o) const = default;
};

struct MonoSegment {
    std::string id;
    std::string text; // target-language side
    Domain domain;

    bool operator==(const MonoSegment &o) const = default;
};

enum class CorpusFormat { jsonl, tsv, plain };

CorpusFormat parse_format(const std::string &s);

// A corpus holds either parallel pairs or monolingual segments, never both.
// Immutable by convention once loaded/built.
struct Corpus {
    std::vector<ParallelPair> pairs;
    std::vector<MonoSegment> segments;
    std::string label; // language-pair or provenance label, free-form

    bool parallel() const { return segments.empty(); }
    std::size_t size() const { return parallel() ? pairs.size() : segments.size(); }
    bool empty() const { return pairs.empty() && segments.empty(); }
};

struct LoadOptions {
    bool monolingual = false;              // plain/tsv: interpret as MonoSegments
    bool allow_duplicate_ids = false;      // upsampled mixes carry repeated ids
    std::optional<Domain> default_domain;  // required for plain format
    std::optional<Provenance> default_provenance;
};

Corpus load_corpus(const std::filesystem::path &path, CorpusFormat format,
                   const LoadOptions &opts = {});
void write_corpus(const Corpus &corpus, const std::filesystem::path &path, CorpusFormat format);

// Uniform sample of n elements without replacement (dev), rest in original
// order (train). Deterministic given seed.
std::pair<Corpus, Corpus> split_dev(const Corpus &corpus, std::size_t n, std::uint64_t seed);

} // namespace mdt
