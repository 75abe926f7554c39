#include "mdt/model.hpp"

#include <cmath>

namespace mdt {

void ModelConfig::validate() const {
    if (d_model <= 0 || n_heads <= 0 || n_layers <= 0 || d_ffn <= 0 || max_len <= 0)
        throw Error("model config: all dimensions must be positive");
    if (d_model % n_heads != 0) throw Error("model config: d_model must be divisible by n_heads");
    if (dropout < 0.0 || dropout >= 1.0) throw Error("model config: dropout must be in [0,1)");
    if (src_vocab <= 0 || tgt_vocab <= 0) throw Error("model config: vocab sizes must be set");
    if (tied_embeddings && src_vocab != tgt_vocab)
        throw Error("model config: tied embeddings require equal vocab sizes");
}

Mat &ModelParameters::add(const std::string &name, long rows, long cols) {
    if (index_.count(name)) throw Error("duplicate parameter: " + name);
    index_[name] = names_.size();
    names_.push_back(name);
    tensors_.push_back(Mat::Zero(rows, cols));
    return tensors_.back();
}

Mat &ModelParameters::at(const std::string &name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("unknown parameter: " + name);
    return tensors_[it->second];
}

const Mat &ModelParameters::at(const std::string &name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("unknown parameter: " + name);
    return tensors_[it->second];
}

std::size_t ModelParameters::scalar_count() const {
    std::size_t n = 0;
    for (const auto &t : tensors_) n += std::size_t(t.size());
    return n;
}

bool ModelParameters::all_finite() const {
    for (const auto &t : tensors_)
        if (!t.allFinite()) return false;
    return true;
}

void ModelParameters::set_zero() {
    for (auto &t : tensors_) t.setZero();
}

ModelParameters ModelParameters::zeros_like() const {
    ModelParameters out;
    for (std::size_t i = 0; i < names_.size(); ++i)
        out.add(names_[i], tensors_[i].rows(), tensors_[i].cols());
    return out;
}

namespace {

void fill_gaussian(Mat &m, Rng &rng, double stddev) {
    for (long r = 0; r < m.rows(); ++r)
        for (long c = 0; c < m.cols(); ++c) m(r, c) = rng.next_gaussian() * stddev;
}

void fill_glorot(Mat &m, Rng &rng) {
    double limit = std::sqrt(6.0 / double(m.rows() + m.cols()));
    for (long r = 0; r < m.rows(); ++r)
        for (long c = 0; c < m.cols(); ++c) m(r, c) = (rng.next_double() * 2.0 - 1.0) * limit;
}

void add_attention(ModelParameters &p, Rng &rng, const std::string &prefix, int d) {
    for (const char *w : {"wq", "wk", "wv", "wo"}) fill_glorot(p.add(prefix + w, d, d), rng);
    for (const char *b : {"bq", "bk", "bv", "bo"}) p.add(prefix + b, 1, d);
}

void add_layernorm(ModelParameters &p, const std::string &prefix, int d) {
    p.add(prefix + "g", 1, d).setOnes();
    p.add(prefix + "b", 1, d);
}

void add_ffn(ModelParameters &p, Rng &rng, const std::string &prefix, int d, int ffn) {
    fill_glorot(p.add(prefix + "w1", d, ffn), rng);
    p.add(prefix + "b1", 1, ffn);
    fill_glorot(p.add(prefix + "w2", ffn, d), rng);
    p.add(prefix + "b2", 1, d);
}

} // namespace

ModelParameters init_params(const ModelConfig &cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    ModelParameters p;
    double emb_std = 1.0 / std::sqrt(double(cfg.d_model));
    if (cfg.tied_embeddings) {
        fill_gaussian(p.add("embed", cfg.src_vocab, cfg.d_model), rng, emb_std);
    } else {
        fill_gaussian(p.add("src_embed", cfg.src_vocab, cfg.d_model), rng, emb_std);
        fill_gaussian(p.add("tgt_embed", cfg.tgt_vocab, cfg.d_model), rng, emb_std);
    }
    for (int i = 0; i < cfg.n_layers; ++i) {
        std::string e = "enc" + std::to_string(i) + ".";
        add_attention(p, rng, e + "attn.", cfg.d_model);
        add_layernorm(p, e + "ln1.", cfg.d_model);
        add_ffn(p, rng, e + "ffn.", cfg.d_model, cfg.d_ffn);
        add_layernorm(p, e + "ln2.", cfg.d_model);
    }
    for (int i = 0; i < cfg.n_layers; ++i) {
        std::string d = "dec" + std::to_string(i) + ".";
        add_attention(p, rng, d + "self.", cfg.d_model);
        add_layernorm(p, d + "ln1.", cfg.d_model);
        add_attention(p, rng, d + "cross.", cfg.d_model);
        add_layernorm(p, d + "ln2.", cfg.d_model);
        add_ffn(p, rng, d + "ffn.", cfg.d_model, cfg.d_ffn);
        add_layernorm(p, d + "ln3.", cfg.d_model);
    }
    fill_glorot(p.add("out.w", cfg.d_model, cfg.tgt_vocab), rng);
    p.add("out.b", 1, cfg.tgt_vocab);
    return p;
}

namespace {

// Builds the encoder-decoder graph on a tape. Parameters are leafed in by
// name on first use; when `grads` is set their gradients accumulate there.
struct Builder {
    Tape &t;
    const ModelConfig &cfg;
    const ModelParameters &params;
    ModelParameters *grads;
    Rng *rng; // dropout randomness, train mode only
    bool train;
    std::unordered_map<std::string, Var> leafed;

    Var P(const std::string &name) {
        auto it = leafed.find(name);
        if (it != leafed.end()) return it->second;
        Mat *gout = grads ? &grads->at(name) : nullptr;
        Var v = t.leaf_ref(&params.at(name), gout);
        leafed[name] = v;
        return v;
    }

    Var drop(Var x) { return train ? t.dropout(x, cfg.dropout, *rng, true) : x; }

    Var linear(Var x, const std::string &w, const std::string &b) {
        return t.add_rowvec(t.matmul(x, P(w)), P(b));
    }

    Var embed(const std::string &table, const std::vector<int> &ids) {
        Var e = t.scale(t.gather_rows(P(table), ids), std::sqrt(double(cfg.d_model)));
        e = t.add_const(e, sinusoidal_positions(int(ids.size()), cfg.d_model));
        return drop(e);
    }

    Var attention(Var queries, Var keys_values, const std::string &prefix, const Mat *mask) {
        Var q = linear(queries, prefix + "wq", prefix + "bq");
        Var k = linear(keys_values, prefix + "wk", prefix + "bk");
        Var v = linear(keys_values, prefix + "wv", prefix + "bv");
        int dh = cfg.d_head();
        std::vector<Var> heads;
        for (int h = 0; h < cfg.n_heads; ++h) {
            Var qh = t.slice_cols(q, h * dh, dh);
            Var kh = t.slice_cols(k, h * dh, dh);
            Var vh = t.slice_cols(v, h * dh, dh);
            Var scores = t.scale(t.matmul_nt(qh, kh), 1.0 / std::sqrt(double(dh)));
            Var p = mask ? t.softmax_rows_masked(scores, *mask) : t.softmax_rows(scores);
            p = drop(p);
            heads.push_back(t.matmul(p, vh));
        }
        return linear(t.concat_cols(heads), prefix + "wo", prefix + "bo");
    }

    // post-norm residual: LN(x + Dropout(sub))
    Var residual(Var x, Var sub, const std::string &ln) {
        return t.layernorm(t.add(x, drop(sub)), P(ln + "g"), P(ln + "b"));
    }

    Var ffn(Var x, const std::string &prefix) {
        Var h = drop(t.relu(linear(x, prefix + "w1", prefix + "b1")));
        return t.add_rowvec(t.matmul(h, P(prefix + "w2")), P(prefix + "b2"));
    }

    Var encoder(const std::vector<int> &src) {
        Var x = embed(cfg.tied_embeddings ? "embed" : "src_embed", src);
        for (int i = 0; i < cfg.n_layers; ++i) {
            std::string e = "enc" + std::to_string(i) + ".";
            x = residual(x, attention(x, x, e + "attn.", nullptr), e + "ln1.");
            x = residual(x, ffn(x, e + "ffn."), e + "ln2.");
        }
        return x;
    }

    Var decoder(Var memory, const std::vector<int> &tgt_in) {
        int n = int(tgt_in.size());
        Mat causal = Mat::Zero(n, n);
        for (int r = 0; r < n; ++r)
            for (int c = r + 1; c < n; ++c) causal(r, c) = -1e30;
        Var x = embed(cfg.tied_embeddings ? "embed" : "tgt_embed", tgt_in);
        for (int i = 0; i < cfg.n_layers; ++i) {
            std::string d = "dec" + std::to_string(i) + ".";
            x = residual(x, attention(x, x, d + "self.", &causal), d + "ln1.");
            x = residual(x, attention(x, memory, d + "cross.", nullptr), d + "ln2.");
            x = residual(x, ffn(x, d + "ffn."), d + "ln3.");
        }
        return linear(x, "out.w", "out.b");
    }

    void check_lengths(const std::vector<int> &src, const std::vector<int> &tgt_in) const {
        if (src.empty() || tgt_in.empty()) throw Error("forward: empty sentence");
        if (int(src.size()) > cfg.max_len || int(tgt_in.size()) > cfg.max_len)
            throw Error("forward: sentence exceeds max_len " + std::to_string(cfg.max_len));
        for (int id : src)
            if (id < 0 || id >= cfg.src_vocab) throw Error("forward: src token out of range");
        for (int id : tgt_in)
            if (id < 0 || id >= cfg.tgt_vocab) throw Error("forward: tgt token out of range");
    }
};

} // namespace

Mat forward_logits(const ModelConfig &cfg, const ModelParameters &params,
                   const std::vector<int> &src, const std::vector<int> &tgt_in, RunMode mode,
                   std::uint64_t dropout_seed) {
    cfg.validate();
    Tape t;
    Rng rng(dropout_seed);
    Builder b{t, cfg, params, nullptr, &rng, mode == RunMode::train};
    b.check_lengths(src, tgt_in);
    Var logits = b.decoder(b.encoder(src), tgt_in);
    return t.value(logits);
}

Mat encode_memory(const ModelConfig &cfg, const ModelParameters &params,
                  const std::vector<int> &src) {
    Tape t;
    Builder b{t, cfg, params, nullptr, nullptr, false};
    b.check_lengths(src, {cfg.bos_id});
    return t.value(b.encoder(src));
}

Mat decoder_logits(const ModelConfig &cfg, const ModelParameters &params, const Mat &memory,
                   const std::vector<int> &tgt_in) {
    Tape t;
    Builder b{t, cfg, params, nullptr, nullptr, false};
    if (tgt_in.empty() || int(tgt_in.size()) > cfg.max_len)
        throw Error("decoder_logits: bad target length");
    Var mem = t.leaf(memory, false);
    return t.value(b.decoder(mem, tgt_in));
}

BatchStats accumulate_loss_grad(const ModelConfig &cfg, const ModelParameters &params,
                                std::span<const EncodedPair> batch, double label_smoothing,
                                std::uint64_t dropout_seed, ModelParameters *grads) {
    cfg.validate();
    BatchStats stats;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto &pair = batch[i];
        std::vector<int> tgt_in;
        tgt_in.reserve(pair.tgt.size() + 1);
        tgt_in.push_back(cfg.bos_id);
        tgt_in.insert(tgt_in.end(), pair.tgt.begin(), pair.tgt.end());
        std::vector<int> gold = pair.tgt;
        gold.push_back(cfg.eos_id);

        Tape t;
        Rng rng(derive_seed(dropout_seed, std::to_string(i)));
        Builder b{t, cfg, params, grads, &rng, grads != nullptr};
        b.check_lengths(pair.src, tgt_in);
        Var logits = b.decoder(b.encoder(pair.src), tgt_in);
        Var loss = t.smoothed_ce_sum(logits, gold, cfg.pad_id, label_smoothing);
        if (grads) t.backward(loss);
        stats.loss_sum += t.value(loss)(0, 0);
        stats.tokens += gold.size();
    }
    return stats;
}

double batch_loss(const ModelConfig &cfg, const ModelParameters &params,
                  std::span<const EncodedPair> batch, double label_smoothing) {
    auto stats = accumulate_loss_grad(cfg, params, batch, label_smoothing, 0, nullptr);
    return stats.loss_sum / double(stats.tokens);
}

} // namespace mdt
