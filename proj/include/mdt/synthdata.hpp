#pragma once

#include <map>
#include <string>
#include <vector>

#include "mdt/corpus.hpp"

namespace mdt {

// Three pseudoword "domains" sharing a core lexicon. Each domain applies an
// invertible word-level transform: a substitution cipher whose mapping on a
// divergent word block depends on the domain, an always-inserted domain
// function word, and optional adjacent-pair reordering. "generic" is the
// core cipher with none of the domain quirks; the base model trains on it.
struct SynthConfig {
    std::uint64_t seed = 0;
    std::vector<std::string> domains = {"reviews", "messaging", "descriptions"};

    int vocab_words = 120;          // word types per language
    int divergent_words = 12;       // cipher differs per domain on these
    int private_words_per_domain = 10;
    double divergent_rate = 0.25;   // chance a sampled word comes from the divergent block

    int min_len = 3; // content words per sentence
    int max_len = 10;

    std::size_t generic_pairs = 4000;
    std::size_t generic_dev = 200;
    std::size_t genuine_per_domain = 2000;
    std::size_t mono_per_domain = 10000;
    std::size_t dev_per_domain = 200;
    std::size_t test_per_domain = 200;

    void validate() const;
};

struct SynthDataset {
    Corpus generic_train; // parallel, domain "generic"
    Corpus generic_dev;
    std::map<std::string, Corpus> genuine; // parallel, per domain
    std::map<std::string, Corpus> mono;    // target-side monolingual
    std::map<std::string, Corpus> dev;
    std::map<std::string, Corpus> test;
};

enum class Direction { fwd, rev }; // fwd = source language -> target language

class SynthWorld {
  public:
    explicit SynthWorld(const SynthConfig &cfg);

    SynthDataset generate() const;
    std::string oracle_translate(const std::string &text, const std::string &domain,
                                 Direction dir) const;

    const SynthConfig &config() const { return cfg_; }
    // full word inventories, e.g. for vocabulary sanity checks
    const std::vector<std::string> &source_words() const { return src_words_; }
    const std::vector<std::string> &target_words() const { return tgt_words_; }

  private:
    struct DomainRules {
        int index = -1;          // -1 = generic
        std::string function_word; // empty for generic
        bool swap_pairs = false;
        int rotation = 0;        // divergent-block cipher rotation
    };

    DomainRules rules_for(const std::string &domain) const;
    std::string sample_source(const std::string &domain, Rng &rng) const;

    SynthConfig cfg_;
    std::vector<std::string> src_words_;
    std::vector<std::string> tgt_words_;
    std::map<std::string, int> src_index_;
    std::map<std::string, int> tgt_index_;
    // per-domain sampling weights over source word indices (unnormalized)
    std::map<std::string, std::vector<double>> skew_;
    std::map<std::string, std::vector<int>> lexicon_; // allowed source indices per domain
};

} // namespace mdt
