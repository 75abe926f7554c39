#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mdt/autograd.hpp"
#include "mdt/common.hpp"

namespace mdt {

struct ModelConfig {
    int d_model = 64;
    int n_heads = 4;
    int n_layers = 2; // encoder and decoder depth
    int d_ffn = 256;
    double dropout = 0.1;
    int src_vocab = 0;
    int tgt_vocab = 0;
    bool tied_embeddings = false; // share source/target embedding table (joint vocab)
    int max_len = 64;

    // structural token ids within the vocabularies
    int pad_id = 0;
    int bos_id = 1;
    int eos_id = 2;

    void validate() const;
    int d_head() const { return d_model / n_heads; }
};

// Named parameter tensors in a fixed, deterministic order.
class ModelParameters {
  public:
    Mat &add(const std::string &name, long rows, long cols);
    Mat &at(const std::string &name);
    const Mat &at(const std::string &name) const;
    bool has(const std::string &name) const { return index_.count(name) > 0; }

    const std::vector<std::string> &names() const { return names_; }
    std::size_t scalar_count() const;
    bool all_finite() const;
    void set_zero();

    // zero-filled tensors with the same names and shapes
    ModelParameters zeros_like() const;

  private:
    std::vector<std::string> names_;
    std::vector<Mat> tensors_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Parameter layout for the post-norm encoder-decoder; also used for
// optimizer moment storage.
ModelParameters init_params(const ModelConfig &cfg, std::uint64_t seed);

enum class RunMode { train, infer };

struct EncodedPair {
    std::vector<int> src; // BPE ids, no bos/eos
    std::vector<int> tgt;
};

// Logits for one sentence: rows = decoder input positions, cols = tgt vocab.
// tgt_in must already start with <s>.
Mat forward_logits(const ModelConfig &cfg, const ModelParameters &params,
                   const std::vector<int> &src, const std::vector<int> &tgt_in, RunMode mode,
                   std::uint64_t dropout_seed = 0);

// Encoder output for a source sentence (infer mode), for incremental decoding.
Mat encode_memory(const ModelConfig &cfg, const ModelParameters &params,
                  const std::vector<int> &src);
Mat decoder_logits(const ModelConfig &cfg, const ModelParameters &params, const Mat &memory,
                   const std::vector<int> &tgt_in);

struct BatchStats {
    double loss_sum = 0.0;    // summed over target tokens
    std::size_t tokens = 0;   // gold target tokens (incl. </s>)
};

// Accumulates d(sum loss)/dparam into `grads` (shaped like params) and
// returns the summed loss. The per-token mean is loss_sum / tokens.
BatchStats accumulate_loss_grad(const ModelConfig &cfg, const ModelParameters &params,
                                std::span<const EncodedPair> batch, double label_smoothing,
                                std::uint64_t dropout_seed, ModelParameters *grads);

// Convenience for tests and dev evaluation: mean label-smoothed loss,
// dropout disabled.
double batch_loss(const ModelConfig &cfg, const ModelParameters &params,
                  std::span<const EncodedPair> batch, double label_smoothing);

} // namespace mdt
