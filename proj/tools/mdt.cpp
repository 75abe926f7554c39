#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mdt/config.hpp"
#include "mdt/eval.hpp"
#include "mdt/pipeline.hpp"
#include "mdt/synthdata.hpp"

using namespace mdt;
using nlohmann::json;

namespace {

bool verbose() {
    const char *v = std::getenv("MDT_LOG");
    return v != nullptr && *v != '\0';
}

void log(const std::string &msg) {
    if (verbose()) std::cerr << "[mdt] " << msg << "\n";
}

std::vector<std::string> read_lines(const std::filesystem::path &path) {
    std::vector<std::string> lines;
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

void write_lines(const std::filesystem::path &path, const std::vector<std::string> &lines) {
    std::string out;
    for (const auto &l : lines) out += l + "\n";
    write_file(path, out);
}

ExperimentConfig config_or_default(const std::string &config_path, std::uint64_t seed) {
    ExperimentConfig cfg;
    if (!config_path.empty())
        cfg = load_experiment_config(config_path);
    else
        cfg.synth.seed = cfg.recipe.seed = cfg.seed = seed;
    return cfg;
}

void write_dataset(const SynthDataset &ds, const std::filesystem::path &out) {
    std::filesystem::create_directories(out);
    json manifest;
    auto put = [&](const Corpus &c, const std::string &name) {
        auto path = out / (name + ".jsonl");
        write_corpus(c, path, CorpusFormat::jsonl);
        manifest[name] = {{"path", path.filename().string()},
                          {"count", c.size()},
                          {"fnv64", hash_file_hex(path)}};
    };
    put(ds.generic_train, "generic-train");
    put(ds.generic_dev, "generic-dev");
    for (const auto &[d, c] : ds.genuine) put(c, d + "-train");
    for (const auto &[d, c] : ds.mono) put(c, d + "-mono");
    for (const auto &[d, c] : ds.dev) put(c, d + "-dev");
    for (const auto &[d, c] : ds.test) put(c, d + "-test");
    write_file(out / "manifest.json", manifest.dump(2) + "\n");
}

RecipeData dataset_to_recipe_data(const SynthDataset &ds) {
    RecipeData data;
    data.generic_train = ds.generic_train;
    data.generic_dev = ds.generic_dev;
    data.genuine = ds.genuine;
    data.mono = ds.mono;
    data.dev = ds.dev;
    return data;
}

// Test-set translation for each trained system; MDT sees inference tags
// (SYNTHETIC=0 plus the domain), baselines see plain sources.
std::map<std::string, std::map<std::string, double>>
score_systems(const ExperimentConfig &cfg, const RecipeArtifacts &art, const SynthDataset &ds) {
    TagSchema schema = cfg.recipe.schema();
    std::map<std::string, std::map<std::string, double>> bleu; // system -> domain -> score

    auto run = [&](const std::string &system, const ModelParameters &params,
                   const std::string &domain, bool tagged) {
        const Corpus &test = ds.test.at(domain);
        std::vector<std::string> src, refs;
        for (const auto &p : test.pairs) {
            std::string s = p.src;
            if (tagged) {
                TagSet tags;
                tags.assignments["SYNTHETIC"] = "0";
                tags.assignments["DOMAIN"] = domain;
                s = inject_tags(s, tags, schema);
            }
            src.push_back(s);
            refs.push_back(p.tgt);
        }
        DecodeConfig dc = cfg.recipe.eval_decode;
        dc.max_len = art.model.max_len;
        auto hyps = translate_lines(art.model, params, art.bpe, src, dc, cfg.recipe.jobs);
        bleu[system][domain] = corpus_bleu(hyps, refs).score;
        log("BLEU " + system + "/" + domain + " = " + std::to_string(bleu[system][domain]));
    };

    for (const auto &d : cfg.domains) {
        run("base", art.base_fwd.params, d, false);
        run("top10", art.top10.at(d).params, d, false);
        run("mdt", art.mdt.params, d, true);
        if (art.untagged) run("untagged", art.untagged->params, d, false);
    }
    return bleu;
}

std::string render_bleu_report(const ExperimentConfig &cfg,
                               const std::map<std::string, std::map<std::string, double>> &bleu,
                               const std::string &title) {
    ReportTable table;
    table.title = title;
    for (const auto &d : cfg.domains) {
        table.columns.push_back(d);
        table.column_groups.push_back(cfg.recipe.pair_label);
    }
    table.base_system = "base";
    for (const auto &sys : {"base", "top10", "mdt", "untagged"}) {
        if (!bleu.count(sys)) continue;
        table.systems.push_back(sys);
        for (const auto &d : cfg.domains)
            table.values[{sys, d}] = bleu.at(sys).at(d);
    }
    return render_report({table});
}

int run_recipe_cmd(const std::string &config_path, bool force_ablation) {
    ExperimentConfig cfg = load_experiment_config(config_path);
    if (force_ablation) cfg.recipe.ablation = true;
    std::filesystem::create_directories(cfg.out_root);
    write_file(cfg.out_root / "config.normalized.toml", render_config_toml(cfg));

    log("generating testbed");
    SynthWorld world(cfg.synth);
    SynthDataset ds = world.generate();
    write_dataset(ds, cfg.out_root / "data");

    log("running recipe");
    RecipeArtifacts art = run_recipe(cfg.recipe, dataset_to_recipe_data(ds));

    log("scoring systems");
    auto bleu = score_systems(cfg, art, ds);
    json scores;
    for (const auto &[sys, per_domain] : bleu)
        for (const auto &[d, v] : per_domain) scores[sys][d] = v;
    write_file(cfg.out_root / "bleu.json", scores.dump(2) + "\n");
    std::string report = render_bleu_report(
        cfg, bleu, force_ablation ? "BLEU score (tag-removal ablation)" : "BLEU score");
    write_file(cfg.out_root / "report.md", report);
    std::cout << report;
    return 0;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"multidimensional tagging for tagged back-translation"};
    app.require_subcommand(1);
    app.fallthrough(); // global options may follow the subcommand
    std::string config_path;
    std::uint64_t seed = 0;
    int jobs = 1;
    std::string out;
    app.add_option("--config", config_path, "experiment config (TOML)");
    app.add_option("--seed", seed, "global seed");
    app.add_option("--jobs", jobs, "parallel workers (1 = bit-reproducible)");
    app.add_option("--out", out, "output directory");

    // gen-data
    auto *gen = app.add_subcommand("gen-data", "generate the synthetic testbed");
    // bpe-learn
    auto *bl = app.add_subcommand("bpe-learn", "learn a BPE model");
    std::vector<std::string> bl_inputs;
    std::size_t bl_vocab = 512;
    std::vector<std::string> bl_reserved;
    bl->add_option("--input", bl_inputs, "text files (one sentence per line)")->required();
    bl->add_option("--vocab-size", bl_vocab, "target vocab size");
    bl->add_option("--reserved", bl_reserved, "extra atomic tokens");
    // bpe-apply
    auto *ba = app.add_subcommand("bpe-apply", "encode text to token ids");
    std::string ba_merges, ba_vocab, ba_input, ba_output;
    std::vector<std::string> ba_reserved;
    ba->add_option("--merges", ba_merges)->required();
    ba->add_option("--vocab", ba_vocab)->required();
    ba->add_option("--input", ba_input)->required();
    ba->add_option("--output", ba_output)->required();
    ba->add_option("--reserved", ba_reserved, "atomic tokens used at learn time");
    // tag
    auto *tg = app.add_subcommand("tag", "inject tags from pair metadata");
    std::string tg_input, tg_output;
    std::vector<std::string> tg_domains = {"reviews", "messaging", "descriptions"};
    tg->add_option("--input", tg_input, "parallel JSONL")->required();
    tg->add_option("--output", tg_output)->required();
    tg->add_option("--domains", tg_domains, "schema DOMAIN values");
    // backtranslate
    auto *bt = app.add_subcommand("backtranslate", "top-k back-translate monolingual data");
    std::string bt_ckpt, bt_merges, bt_vocab, bt_input, bt_output;
    int bt_k = 10;
    std::vector<std::string> bt_domains = {"reviews", "messaging", "descriptions"};
    bt->add_option("--ckpt", bt_ckpt, "reverse-model checkpoint")->required();
    bt->add_option("--merges", bt_merges)->required();
    bt->add_option("--vocab", bt_vocab)->required();
    bt->add_option("--input", bt_input, "monolingual JSONL")->required();
    bt->add_option("--output", bt_output)->required();
    bt->add_option("--k", bt_k, "sampling pool size");
    bt->add_option("--domains", bt_domains, "schema DOMAIN values (for reserved tokens)");
    // mix
    auto *mx = app.add_subcommand("mix", "upsample genuine data to 1:1 with synthetic");
    std::string mx_genuine, mx_synth, mx_output;
    mx->add_option("--genuine", mx_genuine)->required();
    mx->add_option("--synthetic", mx_synth)->required();
    mx->add_option("--output", mx_output)->required();
    // train
    auto *tr = app.add_subcommand("train", "train or fine-tune a model");
    std::string tr_train, tr_dev, tr_merges, tr_vocab, tr_init;
    std::size_t tr_max_steps = 0;
    tr->add_option("--train", tr_train, "parallel JSONL")->required();
    tr->add_option("--dev", tr_dev, "parallel JSONL")->required();
    tr->add_option("--merges", tr_merges)->required();
    tr->add_option("--vocab", tr_vocab)->required();
    tr->add_option("--init", tr_init, "checkpoint to fine-tune from");
    tr->add_option("--max-steps", tr_max_steps, "override step budget");
    // translate
    auto *tl = app.add_subcommand("translate", "translate text lines");
    std::string tl_ckpt, tl_merges, tl_vocab, tl_input, tl_output, tl_domain;
    std::string tl_mode = "beam";
    std::vector<std::string> tl_domains = {"reviews", "messaging", "descriptions"};
    tl->add_option("--ckpt", tl_ckpt)->required();
    tl->add_option("--merges", tl_merges)->required();
    tl->add_option("--vocab", tl_vocab)->required();
    tl->add_option("--input", tl_input, "plain text, one sentence per line")->required();
    tl->add_option("--output", tl_output)->required();
    tl->add_option("--mode", tl_mode, "beam|greedy|topk");
    tl->add_option("--domain", tl_domain, "inject <SYNTHETIC=0> <DOMAIN=...> tags");
    tl->add_option("--domains", tl_domains, "schema DOMAIN values");
    // score
    auto *sc = app.add_subcommand("score", "corpus BLEU");
    std::string sc_hyps, sc_refs;
    bool sc_json = false;
    sc->add_option("--hyps", sc_hyps)->required();
    sc->add_option("--refs", sc_refs)->required();
    sc->add_flag("--json", sc_json, "print full components");
    // human-sample
    auto *hs = app.add_subcommand("human-sample", "draw a blinded human-eval sample");
    std::string hs_test;
    std::vector<std::string> hs_systems;
    std::size_t hs_n = 250;
    hs->add_option("--test", hs_test, "test JSONL")->required();
    hs->add_option("--system", hs_systems, "name=hyps-file, repeatable")->required();
    hs->add_option("--n", hs_n, "samples");
    // human-aggregate
    auto *ha = app.add_subcommand("human-aggregate", "mean adequacy per domain and system");
    std::string ha_scores;
    ha->add_option("--scores", ha_scores, "CSV of rater scores")->required();
    // report
    auto *rp = app.add_subcommand("report", "render a result table");
    std::string rp_bleu, rp_human, rp_base = "base";
    rp->add_option("--bleu", rp_bleu, "CSV: system,column,group,value");
    rp->add_option("--human", rp_human, "rater score CSV");
    rp->add_option("--base", rp_base, "base system name");
    // run-recipe / ablate / validate-config
    auto *rr = app.add_subcommand("run-recipe", "run the full three-stage recipe");
    auto *ab = app.add_subcommand("ablate", "recipe plus the untagged-mix ablation");
    auto *vc = app.add_subcommand("validate-config", "check a config and echo it normalized");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        app.exit(e);
        return 0;
    } catch (const CLI::ParseError &e) {
        std::cerr << e.what() << "\n\n" << app.help();
        return 2;
    }

    try {
        if (gen->parsed()) {
            ExperimentConfig cfg = config_or_default(config_path, seed);
            if (!out.empty()) cfg.out_root = out;
            SynthWorld world(cfg.synth);
            write_dataset(world.generate(), cfg.out_root / "data");
            log("testbed written to " + (cfg.out_root / "data").string());
        } else if (bl->parsed()) {
            std::vector<std::string> lines;
            for (const auto &f : bl_inputs) {
                auto part = read_lines(f);
                lines.insert(lines.end(), part.begin(), part.end());
            }
            BpeModel model = learn_bpe(lines, bl_vocab, bl_reserved);
            std::filesystem::path dir = out.empty() ? "." : out;
            std::filesystem::create_directories(dir);
            save_bpe(model, dir / "bpe.merges", dir / "bpe.vocab");
        } else if (ba->parsed()) {
            BpeModel model = load_bpe(ba_merges, ba_vocab, ba_reserved);
            std::vector<std::string> encoded;
            for (const auto &line : read_lines(ba_input)) {
                std::vector<std::string> ids;
                for (int id : bpe_encode(model, line)) ids.push_back(std::to_string(id));
                encoded.push_back(join(ids, " "));
            }
            write_lines(ba_output, encoded);
        } else if (tg->parsed()) {
            Corpus corpus =
                load_corpus(tg_input, CorpusFormat::jsonl, {.allow_duplicate_ids = true});
            TagSchema schema = TagSchema::default_schema(tg_domains);
            write_corpus(tag_corpus(corpus, schema), tg_output, CorpusFormat::jsonl);
        } else if (bt->parsed()) {
            TagSchema schema = TagSchema::default_schema(bt_domains);
            BpeModel bpe = load_bpe(bt_merges, bt_vocab, schema.all_tokens());
            Checkpoint ckpt = load_checkpoint(bt_ckpt);
            Corpus mono = load_corpus(bt_input, CorpusFormat::jsonl, {.monolingual = true});
            std::vector<std::string> skipped;
            Corpus result = backtranslate(ckpt.config, ckpt.params, bpe, mono, bt_k, seed,
                                          jobs, &skipped);
            write_corpus(result, bt_output, CorpusFormat::jsonl);
            std::string sidecar;
            for (const auto &id : skipped) sidecar += id + "\n";
            write_file(std::string(bt_output) + ".skipped", sidecar);
            log(std::to_string(result.size()) + " pairs, " + std::to_string(skipped.size()) +
                " skipped");
        } else if (mx->parsed()) {
            Corpus genuine = load_corpus(mx_genuine, CorpusFormat::jsonl);
            Corpus synthetic = load_corpus(mx_synth, CorpusFormat::jsonl);
            write_corpus(upsample_mix(genuine, synthetic, seed), mx_output, CorpusFormat::jsonl);
        } else if (tr->parsed()) {
            ExperimentConfig cfg = config_or_default(config_path, seed);
            TagSchema schema = cfg.recipe.schema();
            BpeModel bpe = load_bpe(tr_merges, tr_vocab, schema.all_tokens());
            ModelConfig mc = cfg.recipe.model;
            mc.src_vocab = mc.tgt_vocab = int(bpe.vocab_size());
            mc.tied_embeddings = true;
            Corpus train_c =
                load_corpus(tr_train, CorpusFormat::jsonl, {.allow_duplicate_ids = true});
            Corpus dev_c = load_corpus(tr_dev, CorpusFormat::jsonl);
            TrainOptions opts;
            opts.seed = seed;
            opts.jobs = jobs;
            opts.max_steps = tr_max_steps ? tr_max_steps : cfg.recipe.max_steps_base;
            opts.checkpoint_dir = out.empty() ? "checkpoints" : out;
            if (!tr_init.empty()) opts.init_from = load_checkpoint(tr_init).params;
            Checkpoint best =
                train(mc, encode_pairs(bpe, train_c, mc.max_len),
                      encode_pairs(bpe, dev_c, mc.max_len), cfg.recipe.optimizer,
                      cfg.recipe.early_stop, opts);
            log("best checkpoint at step " + std::to_string(best.step));
        } else if (tl->parsed()) {
            TagSchema schema = TagSchema::default_schema(tl_domains);
            BpeModel bpe = load_bpe(tl_merges, tl_vocab, schema.all_tokens());
            Checkpoint ckpt = load_checkpoint(tl_ckpt);
            std::vector<std::string> lines = read_lines(tl_input);
            if (!tl_domain.empty()) {
                TagSet tags;
                tags.assignments["SYNTHETIC"] = "0";
                tags.assignments["DOMAIN"] = tl_domain;
                for (auto &line : lines) line = inject_tags(line, tags, schema);
            }
            DecodeConfig dc;
            dc.max_len = ckpt.config.max_len;
            dc.seed = seed;
            if (tl_mode == "beam")
                dc.mode = DecodeMode::beam;
            else if (tl_mode == "greedy")
                dc.mode = DecodeMode::greedy;
            else if (tl_mode == "topk")
                dc.mode = DecodeMode::sample_topk;
            else
                throw Error("unknown decode mode: " + tl_mode);
            write_lines(tl_output,
                        translate_lines(ckpt.config, ckpt.params, bpe, lines, dc, jobs));
        } else if (sc->parsed()) {
            BleuScore b = corpus_bleu(read_lines(sc_hyps), read_lines(sc_refs));
            if (sc_json)
                std::cout << b.to_json() << "\n";
            else
                std::printf("%.1f\n", b.score);
        } else if (hs->parsed()) {
            Corpus test = load_corpus(hs_test, CorpusFormat::jsonl);
            std::map<std::string, std::vector<std::string>> outputs;
            for (const auto &spec : hs_systems) {
                auto eq = spec.find('=');
                if (eq == std::string::npos)
                    throw Error("--system expects name=path, got " + spec);
                outputs[spec.substr(0, eq)] = read_lines(spec.substr(eq + 1));
            }
            auto rows = sample_for_human_eval(test, outputs, hs_n, seed);
            std::filesystem::path dir = out.empty() ? "." : out;
            std::filesystem::create_directories(dir);
            write_human_eval_manifest(rows, dir / "human-eval.jsonl", dir / "human-eval.key");
        } else if (ha->parsed()) {
            auto means = aggregate_human(load_human_scores(ha_scores));
            std::cout << "domain,system,mean\n";
            for (const auto &[key, mean] : means) {
                char buf[32];
                std::snprintf(buf, sizeof buf, "%.2f", mean);
                std::cout << key.first << "," << key.second << "," << buf << "\n";
            }
        } else if (rp->parsed()) {
            std::vector<ReportTable> tables;
            if (!rp_human.empty()) {
                auto means = aggregate_human(load_human_scores(rp_human));
                ReportTable t;
                t.title = "Human score";
                t.base_system = rp_base;
                t.human_style_deltas = true;
                for (const auto &[key, mean] : means) {
                    if (std::find(t.columns.begin(), t.columns.end(), key.first) ==
                        t.columns.end()) {
                        t.columns.push_back(key.first);
                        t.column_groups.push_back("all");
                    }
                    if (std::find(t.systems.begin(), t.systems.end(), key.second) ==
                        t.systems.end())
                        t.systems.push_back(key.second);
                    t.values[{key.second, key.first}] = mean;
                }
                tables.push_back(std::move(t));
            }
            if (!rp_bleu.empty()) {
                ReportTable t;
                t.title = "BLEU score";
                t.base_system = rp_base;
                auto lines = read_lines(rp_bleu);
                for (std::size_t i = 0; i < lines.size(); ++i) {
                    if (i == 0 && lines[i].rfind("system,", 0) == 0) continue;
                    if (trim(lines[i]).empty()) continue;
                    std::vector<std::string> f;
                    std::string cur;
                    for (char c : lines[i]) {
                        if (c == ',') {
                            f.push_back(cur);
                            cur.clear();
                        } else
                            cur += c;
                    }
                    f.push_back(cur);
                    if (f.size() != 4)
                        throw Error("bad BLEU csv line " + std::to_string(i + 1));
                    if (std::find(t.columns.begin(), t.columns.end(), f[1]) == t.columns.end()) {
                        t.columns.push_back(f[1]);
                        t.column_groups.push_back(f[2]);
                    }
                    if (std::find(t.systems.begin(), t.systems.end(), f[0]) == t.systems.end())
                        t.systems.push_back(f[0]);
                    t.values[{f[0], f[1]}] = std::stod(f[3]);
                }
                tables.push_back(std::move(t));
            }
            if (tables.empty()) throw Error("report: need --bleu and/or --human");
            std::string rendered = render_report(tables);
            std::cout << rendered;
            if (!out.empty()) {
                std::filesystem::create_directories(out);
                write_file(std::filesystem::path(out) / "report.md", rendered);
            }
        } else if (rr->parsed()) {
            if (config_path.empty()) throw Error("run-recipe requires --config");
            return run_recipe_cmd(config_path, false);
        } else if (ab->parsed()) {
            if (config_path.empty()) throw Error("ablate requires --config");
            return run_recipe_cmd(config_path, true);
        } else if (vc->parsed()) {
            if (config_path.empty()) throw Error("validate-config requires --config");
            ExperimentConfig cfg = load_experiment_config(config_path);
            std::string echo = render_config_toml(cfg);
            std::cout << echo;
            std::filesystem::create_directories(cfg.out_root);
            write_file(cfg.out_root / "config.normalized.toml", echo);
        }
    } catch (const std::exception &e) {
        std::cerr << "mdt: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
