#pragma once

#include <memory>
#include <vector>

#include "mdt/model.hpp"

namespace mdt {

// Anything that can score next-token continuations. The transformer is one
// implementation; tests use rigged models with known distributions.
class ScoringModel {
  public:
    virtual ~ScoringModel() = default;
    virtual int vocab_size() const = 0;
    virtual int bos_id() const = 0;
    virtual int eos_id() const = 0;
    // log P(next | prefix); prefix starts with <s>
    virtual std::vector<double> next_log_probs(const std::vector<int> &prefix) = 0;
};

// Caches the encoder memory once per sentence; the decoder stack is
// recomputed per step.
class TransformerScorer : public ScoringModel {
  public:
    TransformerScorer(const ModelConfig &cfg, const ModelParameters &params,
                      const std::vector<int> &src);

    int vocab_size() const override { return cfg_.tgt_vocab; }
    int bos_id() const override { return cfg_.bos_id; }
    int eos_id() const override { return cfg_.eos_id; }
    std::vector<double> next_log_probs(const std::vector<int> &prefix) override;

  private:
    const ModelConfig &cfg_;
    const ModelParameters &params_;
    Mat memory_;
};

enum class DecodeMode { greedy, beam, sample_topk };

struct DecodeConfig {
    DecodeMode mode = DecodeMode::beam;
    int beam_width = 4;
    int k = 10;              // top-k sampling pool
    int max_len = 64;        // generated tokens, excluding <s>
    double length_penalty = 0.6;
    std::uint64_t seed = 0;  // sampling only
};

struct DecodeResult {
    std::vector<int> tokens;  // without <s> or </s>
    double log_prob = 0.0;    // sum over generated tokens incl. </s> if emitted
    bool finished = false;    // hit </s> within max_len
};

DecodeResult decode(ScoringModel &model, const DecodeConfig &cfg);

DecodeResult greedy_decode(ScoringModel &model, int max_len);
DecodeResult beam_search(ScoringModel &model, int beam_width, int max_len,
                         double length_penalty);
DecodeResult sample_topk(ScoringModel &model, int k, int max_len, std::uint64_t seed);

} // namespace mdt
