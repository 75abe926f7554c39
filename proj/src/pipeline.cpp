#include "mdt/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <set>
#include <thread>

#include <json.hpp>

namespace mdt {

using nlohmann::json;

void RecipeConfig::validate() const {
    if (domains.empty()) throw Error("recipe config: no domains");
    if (std::set<std::string>(domains.begin(), domains.end()).size() != domains.size())
        throw Error("recipe config: duplicate domains");
    for (const auto &d : domains) Domain::checked(d);
    if (bpe_vocab_size < 16) throw Error("recipe config: bpe_vocab_size too small");
    if (topk <= 0) throw Error("recipe config: topk must be positive");
    if (jobs <= 0) throw Error("recipe config: jobs must be positive");
    optimizer.validate();
    if (out_dir.empty()) throw Error("recipe config: out_dir not set");
}

std::vector<EncodedPair> encode_pairs(const BpeModel &bpe, const Corpus &corpus, int max_len) {
    if (!corpus.parallel()) throw Error("encode_pairs: corpus is monolingual");
    std::vector<EncodedPair> out;
    out.reserve(corpus.pairs.size());
    for (const auto &p : corpus.pairs) {
        EncodedPair e{bpe_encode(bpe, p.src), bpe_encode(bpe, p.tgt)};
        if (e.src.empty() || e.tgt.empty()) continue;
        if (int(e.src.size()) > max_len || int(e.tgt.size()) + 1 > max_len) continue;
        out.push_back(std::move(e));
    }
    return out;
}

namespace {

// index-sharded worker pool; output order equals input order
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn &&fn) {
    jobs = std::max(1, jobs);
    if (jobs == 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> threads;
    for (int w = 0; w < jobs; ++w)
        threads.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
        });
    for (auto &t : threads) t.join();
}

} // namespace

std::vector<std::string> translate_lines(const ModelConfig &cfg, const ModelParameters &params,
                                         const BpeModel &bpe,
                                         const std::vector<std::string> &lines,
                                         const DecodeConfig &decode_cfg, int jobs) {
    std::vector<std::string> out(lines.size());
    parallel_for(lines.size(), jobs, [&](std::size_t i) {
        TokenSeq src = bpe_encode(bpe, lines[i]);
        if (src.empty() || int(src.size()) > cfg.max_len) {
            out[i] = "";
            return;
        }
        DecodeConfig dc = decode_cfg;
        dc.seed = derive_seed(decode_cfg.seed, "line:" + std::to_string(i));
        TransformerScorer scorer(cfg, params, src);
        out[i] = bpe_decode(bpe, decode(scorer, dc).tokens);
    });
    return out;
}

Corpus backtranslate(const ModelConfig &cfg, const ModelParameters &reverse_params,
                     const BpeModel &bpe, const Corpus &mono, int k, std::uint64_t seed,
                     int jobs, std::vector<std::string> *skipped_ids) {
    if (mono.parallel() && !mono.empty())
        throw Error("backtranslate: expected a monolingual corpus");
    std::vector<std::string> sources(mono.segments.size());
    std::vector<char> ok(mono.segments.size(), 0);
    parallel_for(mono.segments.size(), jobs, [&](std::size_t i) {
        const MonoSegment &seg = mono.segments[i];
        TokenSeq tgt = bpe_encode(bpe, seg.text);
        if (tgt.empty() || int(tgt.size()) > cfg.max_len) return;
        DecodeConfig dc;
        dc.mode = DecodeMode::sample_topk;
        dc.k = k;
        dc.max_len = cfg.max_len;
        dc.seed = derive_seed(seed, "bt:" + seg.id);
        TransformerScorer scorer(cfg, reverse_params, tgt);
        std::string src = bpe_decode(bpe, decode(scorer, dc).tokens);
        if (src.empty()) return;
        sources[i] = std::move(src);
        ok[i] = 1;
    });

    Corpus out;
    out.label = mono.label + "+bt";
    for (std::size_t i = 0; i < mono.segments.size(); ++i) {
        const MonoSegment &seg = mono.segments[i];
        if (!ok[i]) {
            if (skipped_ids) skipped_ids->push_back(seg.id);
            continue;
        }
        out.pairs.push_back(
            {seg.id, sources[i], seg.text, seg.domain, Provenance::synthetic});
    }
    return out;
}

Corpus upsample_mix(const Corpus &genuine, const Corpus &synthetic, std::uint64_t seed) {
    if (genuine.empty() || synthetic.empty())
        throw Error("upsample_mix: both sides must be non-empty");
    if (!genuine.parallel() || !synthetic.parallel())
        throw Error("upsample_mix: both sides must be parallel corpora");
    std::size_t g = genuine.pairs.size();
    std::size_t s = synthetic.pairs.size();

    Corpus out;
    out.label = genuine.label + "+mix";
    std::size_t whole = s / g;
    for (std::size_t rep = 0; rep < whole; ++rep)
        out.pairs.insert(out.pairs.end(), genuine.pairs.begin(), genuine.pairs.end());
    Rng rng(derive_seed(seed, "upsample"));
    for (std::size_t idx : sample_without_replacement(g, s % g, rng))
        out.pairs.push_back(genuine.pairs[idx]);
    out.pairs.insert(out.pairs.end(), synthetic.pairs.begin(), synthetic.pairs.end());

    Rng shuffle_rng(derive_seed(seed, "mix-shuffle"));
    shuffle(out.pairs, shuffle_rng);
    return out;
}

Corpus tag_corpus(const Corpus &corpus, const TagSchema &schema) {
    Corpus out;
    out.label = corpus.label;
    out.pairs.reserve(corpus.pairs.size());
    for (const auto &p : corpus.pairs) {
        TagSet tags;
        tags.assignments["SYNTHETIC"] = p.provenance == Provenance::synthetic ? "1" : "0";
        tags.assignments["DOMAIN"] = p.domain.name;
        ParallelPair q = p;
        q.src = inject_tags(p.src, tags, schema);
        out.pairs.push_back(std::move(q));
    }
    return out;
}

Corpus build_finetune_set(const std::map<std::string, Corpus> &mixed, const TagSchema &schema,
                          bool ablation, std::uint64_t seed) {
    Corpus out;
    out.label = ablation ? "finetune-untagged" : "finetune-mdt";
    for (const auto &[domain, corpus] : mixed) {
        Corpus part = ablation ? corpus : tag_corpus(corpus, schema);
        out.pairs.insert(out.pairs.end(), part.pairs.begin(), part.pairs.end());
    }
    Rng rng(derive_seed(seed, "finetune-shuffle"));
    shuffle(out.pairs, rng);
    return out;
}

namespace {

Corpus swap_sides(const Corpus &corpus) {
    Corpus out;
    out.label = corpus.label + "+rev";
    for (const auto &p : corpus.pairs) {
        ParallelPair q = p;
        std::swap(q.src, q.tgt);
        out.pairs.push_back(std::move(q));
    }
    return out;
}

Corpus pool(const std::map<std::string, Corpus> &per_domain) {
    Corpus out;
    out.label = "pooled";
    for (const auto &[d, c] : per_domain)
        out.pairs.insert(out.pairs.end(), c.pairs.begin(), c.pairs.end());
    return out;
}

} // namespace

RecipeArtifacts run_recipe(const RecipeConfig &cfg, const RecipeData &data) {
    cfg.validate();
    const std::string stage_err = "recipe stage ";
    for (const auto &d : cfg.domains) {
        if (!data.genuine.count(d)) throw Error("recipe: no genuine data for domain " + d);
        if (!data.mono.count(d)) throw Error("recipe: no monolingual data for domain " + d);
        if (!data.dev.count(d)) throw Error("recipe: no dev data for domain " + d);
    }
    std::filesystem::create_directories(cfg.out_dir);
    TagSchema schema = cfg.schema();

    json manifest;
    manifest["pair"] = cfg.pair_label;
    manifest["seed"] = cfg.seed;
    manifest["domains"] = cfg.domains;
    auto record = [&](const std::string &stage, const std::string &name,
                      const std::filesystem::path &path) {
        manifest["stages"][stage][name] = {{"path", path.filename().string()},
                                           {"fnv64", hash_file_hex(path)}};
    };
    auto save_corpus = [&](const Corpus &c, const std::string &stage, const std::string &name) {
        auto path = cfg.out_dir / (stage + "-" + name + ".jsonl");
        write_corpus(c, path, CorpusFormat::jsonl);
        record(stage, name, path);
    };
    auto save_ckpt = [&](const Checkpoint &c, const std::string &stage,
                         const std::string &name) {
        auto path = cfg.out_dir / (stage + "-" + name + ".ckpt");
        save_checkpoint(c, path);
        record(stage, name, path);
    };

    RecipeArtifacts art;

    // stage 1: shared BPE + base models on generic data
    try {
        std::vector<std::string> text;
        for (const auto &p : data.generic_train.pairs) {
            text.push_back(p.src);
            text.push_back(p.tgt);
        }
        for (const auto &[d, c] : data.genuine)
            for (const auto &p : c.pairs) {
                text.push_back(p.src);
                text.push_back(p.tgt);
            }
        for (const auto &[d, c] : data.mono)
            for (const auto &seg : c.segments) text.push_back(seg.text);
        art.bpe = learn_bpe(text, cfg.bpe_vocab_size, schema.all_tokens());
        save_bpe(art.bpe, cfg.out_dir / "bpe.merges", cfg.out_dir / "bpe.vocab");
        record("base", "bpe.merges", cfg.out_dir / "bpe.merges");
        record("base", "bpe.vocab", cfg.out_dir / "bpe.vocab");

        art.model = cfg.model;
        art.model.src_vocab = int(art.bpe.vocab_size());
        art.model.tgt_vocab = int(art.bpe.vocab_size());
        art.model.tied_embeddings = true; // joint BPE, shared table

        auto train_stage = [&](const Corpus &train_c, const Corpus &dev_c,
                               const std::string &label, std::size_t max_steps,
                               const ModelParameters *init) {
            TrainOptions opts;
            opts.seed = derive_seed(cfg.seed, "train:" + label);
            opts.max_steps = max_steps;
            opts.jobs = cfg.jobs;
            if (init) opts.init_from = *init;
            auto train_enc = encode_pairs(art.bpe, train_c, art.model.max_len);
            auto dev_enc = encode_pairs(art.bpe, dev_c, art.model.max_len);
            return train(art.model, train_enc, dev_enc, cfg.optimizer, cfg.early_stop, opts);
        };

        art.base_fwd = train_stage(data.generic_train, data.generic_dev, "base-fwd",
                                   cfg.max_steps_base, nullptr);
        art.base_rev = train_stage(swap_sides(data.generic_train), swap_sides(data.generic_dev),
                                   "base-rev", cfg.max_steps_base, nullptr);
        save_ckpt(art.base_fwd, "base", "fwd");
        save_ckpt(art.base_rev, "base", "rev");
    } catch (const Error &e) {
        throw Error(stage_err + "base: " + e.what());
    }

    // stage 2: back-translation + 1:1 mixing
    try {
        for (const auto &d : cfg.domains) {
            std::vector<std::string> skipped;
            Corpus bt = backtranslate(art.model, art.base_rev.params, art.bpe, data.mono.at(d),
                                      cfg.topk, derive_seed(cfg.seed, "bt:" + d), cfg.jobs,
                                      &skipped);
            std::string sidecar;
            for (const auto &id : skipped) sidecar += id + "\n";
            write_file(cfg.out_dir / ("bt-" + d + ".skipped"), sidecar);
            art.backtranslated[d] = bt;
            save_corpus(bt, "bt", d);
            art.mixed[d] =
                upsample_mix(data.genuine.at(d), bt, derive_seed(cfg.seed, "mix:" + d));
            save_corpus(art.mixed[d], "mix", d);
        }
    } catch (const Error &e) {
        throw Error(stage_err + "backtranslate: " + e.what());
    }

    // stage 3: fine-tunes
    try {
        auto finetune = [&](const Corpus &train_c, const Corpus &dev_c, const std::string &label) {
            TrainOptions opts;
            opts.seed = derive_seed(cfg.seed, "train:" + label);
            opts.max_steps = cfg.max_steps_finetune;
            opts.jobs = cfg.jobs;
            opts.init_from = art.base_fwd.params;
            auto train_enc = encode_pairs(art.bpe, train_c, art.model.max_len);
            auto dev_enc = encode_pairs(art.bpe, dev_c, art.model.max_len);
            return train(art.model, train_enc, dev_enc, cfg.optimizer, cfg.early_stop, opts);
        };

        for (const auto &d : cfg.domains) {
            art.top10[d] = finetune(art.mixed.at(d), data.dev.at(d), "top10:" + d);
            save_ckpt(art.top10.at(d), "finetune", "top10-" + d);
        }

        Corpus pooled_dev = pool(data.dev);
        art.mdt_corpus = build_finetune_set(art.mixed, schema, false,
                                            derive_seed(cfg.seed, "mdt-corpus"));
        save_corpus(art.mdt_corpus, "finetune", "mdt-data");
        art.mdt = finetune(art.mdt_corpus, tag_corpus(pooled_dev, schema), "mdt");
        save_ckpt(art.mdt, "finetune", "mdt");

        if (cfg.ablation) {
            Corpus untagged_corpus = build_finetune_set(art.mixed, schema, true,
                                                        derive_seed(cfg.seed, "mdt-corpus"));
            art.untagged = finetune(untagged_corpus, pooled_dev, "untagged");
            save_ckpt(*art.untagged, "finetune", "untagged");
        }
    } catch (const Error &e) {
        throw Error(stage_err + "finetune: " + e.what());
    }

    art.manifest_json = manifest.dump(2) + "\n";
    write_file(cfg.out_dir / "manifest.json", art.manifest_json);
    return art;
}

} // namespace mdt
