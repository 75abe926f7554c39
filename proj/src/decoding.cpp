#include "mdt/decoding.hpp"

#include <algorithm>
#include <cmath>

namespace mdt {

TransformerScorer::TransformerScorer(const ModelConfig &cfg, const ModelParameters &params,
                                     const std::vector<int> &src)
    : cfg_(cfg), params_(params), memory_(encode_memory(cfg, params, src)) {}

std::vector<double> TransformerScorer::next_log_probs(const std::vector<int> &prefix) {
    Mat logits = decoder_logits(cfg_, params_, memory_, prefix);
    Eigen::RowVectorXd row = logits.row(logits.rows() - 1);
    double mx = row.maxCoeff();
    double lse = mx + std::log((row.array() - mx).exp().sum());
    std::vector<double> out(std::size_t(row.size()));
    for (long i = 0; i < row.size(); ++i) out[std::size_t(i)] = row(i) - lse;
    return out;
}

namespace {

std::vector<int> strip_frame(const std::vector<int> &with_bos, int eos, bool finished) {
    std::vector<int> out(with_bos.begin() + 1, with_bos.end());
    if (finished && !out.empty() && out.back() == eos) out.pop_back();
    return out;
}

double norm_score(double log_prob, std::size_t generated, double alpha) {
    // generated includes </s>; never zero here
    return log_prob / std::pow(double(generated), alpha);
}

} // namespace

DecodeResult greedy_decode(ScoringModel &model, int max_len) {
    std::vector<int> prefix{model.bos_id()};
    double lp = 0.0;
    bool finished = false;
    for (int step = 0; step < max_len; ++step) {
        auto logp = model.next_log_probs(prefix);
        std::size_t best = 0;
        for (std::size_t i = 1; i < logp.size(); ++i)
            if (logp[i] > logp[best]) best = i;
        lp += logp[best];
        prefix.push_back(int(best));
        if (int(best) == model.eos_id()) {
            finished = true;
            break;
        }
    }
    return {strip_frame(prefix, model.eos_id(), finished), lp, finished};
}

DecodeResult beam_search(ScoringModel &model, int beam_width, int max_len,
                         double length_penalty) {
    if (beam_width <= 0) throw Error("beam_search: beam_width must be positive");
    struct Hyp {
        std::vector<int> tokens; // with <s>
        double log_prob = 0.0;
    };
    std::vector<Hyp> live{{{model.bos_id()}, 0.0}};
    std::vector<Hyp> finished;

    for (int step = 0; step < max_len && !live.empty(); ++step) {
        struct Cand {
            std::size_t parent;
            int token;
            double log_prob;
        };
        std::vector<Cand> cands;
        for (std::size_t h = 0; h < live.size(); ++h) {
            auto logp = model.next_log_probs(live[h].tokens);
            for (std::size_t t = 0; t < logp.size(); ++t)
                cands.push_back({h, int(t), live[h].log_prob + logp[t]});
        }
        std::size_t keep = std::min<std::size_t>(std::size_t(beam_width), cands.size());
        // stable partial sort keeps ties deterministic (parent, then token id)
        std::stable_sort(cands.begin(), cands.end(),
                         [](const Cand &a, const Cand &b) { return a.log_prob > b.log_prob; });
        std::vector<Hyp> next;
        for (std::size_t i = 0; i < keep; ++i) {
            Hyp h = live[cands[i].parent];
            h.tokens.push_back(cands[i].token);
            h.log_prob = cands[i].log_prob;
            if (cands[i].token == model.eos_id())
                finished.push_back(std::move(h));
            else
                next.push_back(std::move(h));
        }
        live = std::move(next);
        if (finished.size() >= std::size_t(beam_width)) break;
    }

    auto pick = [&](const std::vector<Hyp> &pool) {
        std::size_t best = 0;
        double best_score = -HUGE_VAL;
        for (std::size_t i = 0; i < pool.size(); ++i) {
            double s = norm_score(pool[i].log_prob, pool[i].tokens.size() - 1, length_penalty);
            if (s > best_score) {
                best_score = s;
                best = i;
            }
        }
        return best;
    };

    if (!finished.empty()) {
        const Hyp &h = finished[pick(finished)];
        return {strip_frame(h.tokens, model.eos_id(), true), h.log_prob, true};
    }
    const Hyp &h = live[pick(live)];
    return {strip_frame(h.tokens, model.eos_id(), false), h.log_prob, false};
}

DecodeResult sample_topk(ScoringModel &model, int k, int max_len, std::uint64_t seed) {
    if (k <= 0) throw Error("sample_topk: k must be positive");
    Rng rng(seed);
    std::vector<int> prefix{model.bos_id()};
    double lp = 0.0;
    bool finished = false;
    for (int step = 0; step < max_len; ++step) {
        auto logp = model.next_log_probs(prefix);
        std::vector<std::size_t> idx(logp.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::size_t pool = std::min<std::size_t>(std::size_t(k), idx.size());
        std::stable_sort(idx.begin(), idx.end(),
                         [&](std::size_t a, std::size_t b) { return logp[a] > logp[b]; });
        idx.resize(pool);

        // renormalize over the pool and draw by inverse CDF
        double mx = logp[idx[0]];
        std::vector<double> p(pool);
        double z = 0.0;
        for (std::size_t i = 0; i < pool; ++i) {
            p[i] = std::exp(logp[idx[i]] - mx);
            z += p[i];
        }
        double u = rng.next_double() * z;
        std::size_t chosen = pool - 1;
        double acc = 0.0;
        for (std::size_t i = 0; i < pool; ++i) {
            acc += p[i];
            if (u < acc) {
                chosen = i;
                break;
            }
        }
        lp += logp[idx[chosen]];
        prefix.push_back(int(idx[chosen]));
        if (int(idx[chosen]) == model.eos_id()) {
            finished = true;
            break;
        }
    }
    return {strip_frame(prefix, model.eos_id(), finished), lp, finished};
}

DecodeResult decode(ScoringModel &model, const DecodeConfig &cfg) {
    switch (cfg.mode) {
    case DecodeMode::greedy: return greedy_decode(model, cfg.max_len);
    case DecodeMode::beam: return beam_search(model, cfg.beam_width, cfg.max_len, cfg.length_penalty);
    case DecodeMode::sample_topk: return sample_topk(model, cfg.k, cfg.max_len, cfg.seed);
    }
    throw Error("decode: unknown mode");
}

} // namespace mdt
