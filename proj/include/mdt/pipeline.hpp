#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mdt/bpe.hpp"
#include "mdt/corpus.hpp"
#include "mdt/decoding.hpp"
#include "mdt/tagging.hpp"
#include "mdt/training.hpp"

namespace mdt {

struct RecipeConfig {
    std::string pair_label = "xx-yy";
    std::vector<std::string> domains;
    std::size_t bpe_vocab_size = 512;

    ModelConfig model;          // vocab fields are filled from the learned BPE
    OptimizerConfig optimizer;
    EarlyStopPolicy early_stop;
    std::size_t max_steps_base = 10000;
    std::size_t max_steps_finetune = 10000;

    int topk = 10;              // back-translation sampling pool
    DecodeConfig eval_decode;   // beam settings for evaluation/translation

    bool ablation = false;      // also train the untagged multi-domain variant
    std::uint64_t seed = 0;
    int jobs = 1;
    std::filesystem::path out_dir;

    TagSchema schema() const { return TagSchema::default_schema(domains); }
    void validate() const;
};

struct RecipeData {
    Corpus generic_train; // parallel
    Corpus generic_dev;
    std::map<std::string, Corpus> genuine; // per-domain parallel
    std::map<std::string, Corpus> mono;    // per-domain target monolingual
    std::map<std::string, Corpus> dev;     // per-domain parallel dev
};

struct RecipeArtifacts {
    BpeModel bpe;
    ModelConfig model; // with vocab sizes resolved
    Checkpoint base_fwd;
    Checkpoint base_rev;
    std::map<std::string, Checkpoint> top10; // per-domain untagged baselines
    Checkpoint mdt;
    std::optional<Checkpoint> untagged; // ablation variant
    std::map<std::string, Corpus> backtranslated;
    std::map<std::string, Corpus> mixed;
    Corpus mdt_corpus;
    std::string manifest_json; // also written to out_dir/manifest.json
};

// BPE-encode parallel pairs; silently drops pairs that exceed the model's
// length budget (src > max_len or tgt+<s> > max_len).
std::vector<EncodedPair> encode_pairs(const BpeModel &bpe, const Corpus &corpus,
                                      int max_len);

// Order-preserving translation of raw lines (tags included in the text if
// wanted). Deterministic for any `jobs`: per-line seeds derive from the line
// index.
std::vector<std::string> translate_lines(const ModelConfig &cfg, const ModelParameters &params,
                                         const BpeModel &bpe,
                                         const std::vector<std::string> &lines,
                                         const DecodeConfig &decode_cfg, int jobs);

// Target-side monolingual -> synthetic parallel via top-k sampling with the
// reverse model. Failed segments are skipped and their ids reported.
Corpus backtranslate(const ModelConfig &cfg, const ModelParameters &reverse_params,
                     const BpeModel &bpe, const Corpus &mono, int k, std::uint64_t seed,
                     int jobs, std::vector<std::string> *skipped_ids = nullptr);

// Repeats genuine pairs floor(S/G) times plus a seeded remainder sample so
// genuine copies == synthetic count exactly; result is shuffled.
Corpus upsample_mix(const Corpus &genuine, const Corpus &synthetic, std::uint64_t seed);

// Tags every pair from its own metadata (SYNTHETIC from provenance, DOMAIN
// from the pair), in schema order.
Corpus tag_corpus(const Corpus &corpus, const TagSchema &schema);

// Concatenates all domains' mixed corpora, tags unless ablation, shuffles.
Corpus build_finetune_set(const std::map<std::string, Corpus> &mixed, const TagSchema &schema,
                          bool ablation, std::uint64_t seed);

RecipeArtifacts run_recipe(const RecipeConfig &cfg, const RecipeData &data);

} // namespace mdt
