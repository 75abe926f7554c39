#include "mdt/config.hpp"

#include <set>
#include <sstream>

#include "mdt/toml.hpp"

namespace mdt {

using nlohmann::json;

namespace {

// tracks which keys of one table were read, so typos are caught
class TableReader {
  public:
    TableReader(const json &doc, const std::string &path) : path_(path) {
        if (path.empty()) {
            table_ = &doc;
        } else if (doc.contains(path)) {
            table_ = &doc.at(path);
            if (!table_->is_object()) throw Error("config key " + path + ": expected a table");
        }
    }

    bool present() const { return table_ != nullptr; }

    template <typename T>
    void get(const char *key, T &out) {
        if (!table_ || !table_->contains(key)) return;
        seen_.insert(key);
        const json &v = table_->at(key);
        try {
            if constexpr (std::is_same_v<T, std::filesystem::path>) {
                out = v.get<std::string>();
            } else {
                out = v.get<T>();
            }
        } catch (const json::exception &) {
            throw Error("config key " + full(key) + ": wrong type");
        }
    }

    void finish() const {
        if (!table_) return;
        for (const auto &[k, v] : table_->items())
            if (!seen_.count(k) && !allowed_sub_.count(k))
                throw Error("config key " + full(k) + ": unknown key");
    }

    void allow_subtable(const std::string &name) { allowed_sub_.insert(name); }

  private:
    std::string full(const std::string &key) const {
        return path_.empty() ? key : path_ + "." + key;
    }

    const json *table_ = nullptr;
    std::string path_;
    std::set<std::string> seen_;
    std::set<std::string> allowed_sub_;
};

} // namespace

void ExperimentConfig::validate() const {
    if (domains.empty()) throw Error("config key domains: must be non-empty");
    synth.validate();
    recipe.validate();
    if (std::set<std::string>(synth.domains.begin(), synth.domains.end()) !=
        std::set<std::string>(domains.begin(), domains.end()))
        throw Error("config: synth domains differ from declared domains");
    // schema DOMAIN values must cover exactly the data domains
    TagSchema schema = recipe.schema();
    const TagDimension *dim = schema.find("DOMAIN");
    std::set<std::string> schema_vals(dim->values.begin(), dim->values.end());
    std::set<std::string> data_vals(domains.begin(), domains.end());
    if (schema_vals != data_vals) {
        auto render = [](const std::set<std::string> &s) {
            std::string out = "{";
            for (const auto &v : s) out += (out.size() > 1 ? "," : "") + v;
            return out + "}";
        };
        throw Error("config: schema DOMAIN values " + render(schema_vals) +
                    " do not match data domains " + render(data_vals));
    }
    if (human_samples == 0) throw Error("config key eval.human_samples: must be positive");
}

ExperimentConfig parse_experiment_config(const std::string &toml_text,
                                         const std::string &origin) {
    json doc = parse_toml(toml_text, origin);
    ExperimentConfig cfg;

    TableReader top(doc, "");
    top.get("seed", cfg.seed);
    top.get("out", cfg.out_root);
    top.get("domains", cfg.domains);
    for (const char *sub : {"synth", "bpe", "model", "optimizer", "train", "decode", "eval",
                            "schema", "recipe"})
        top.allow_subtable(sub);
    top.finish();

    cfg.synth.seed = cfg.seed;
    cfg.synth.domains = cfg.domains;
    TableReader synth(doc, "synth");
    synth.get("vocab_words", cfg.synth.vocab_words);
    synth.get("divergent_words", cfg.synth.divergent_words);
    synth.get("private_words_per_domain", cfg.synth.private_words_per_domain);
    synth.get("divergent_rate", cfg.synth.divergent_rate);
    synth.get("min_len", cfg.synth.min_len);
    synth.get("max_len", cfg.synth.max_len);
    synth.get("generic_pairs", cfg.synth.generic_pairs);
    synth.get("generic_dev", cfg.synth.generic_dev);
    synth.get("genuine_per_domain", cfg.synth.genuine_per_domain);
    synth.get("mono_per_domain", cfg.synth.mono_per_domain);
    synth.get("dev_per_domain", cfg.synth.dev_per_domain);
    synth.get("test_per_domain", cfg.synth.test_per_domain);
    synth.finish();

    cfg.recipe.seed = cfg.seed;
    cfg.recipe.domains = cfg.domains;
    cfg.recipe.out_dir = cfg.out_root / "recipe";
    TableReader recipe(doc, "recipe");
    recipe.get("pair_label", cfg.recipe.pair_label);
    recipe.get("ablation", cfg.recipe.ablation);
    recipe.finish();

    TableReader bpe(doc, "bpe");
    bpe.get("vocab_size", cfg.recipe.bpe_vocab_size);
    bpe.finish();

    TableReader model(doc, "model");
    model.get("d_model", cfg.recipe.model.d_model);
    model.get("n_heads", cfg.recipe.model.n_heads);
    model.get("n_layers", cfg.recipe.model.n_layers);
    model.get("d_ffn", cfg.recipe.model.d_ffn);
    model.get("dropout", cfg.recipe.model.dropout);
    model.get("max_len", cfg.recipe.model.max_len);
    model.finish();

    TableReader opt(doc, "optimizer");
    opt.get("beta1", cfg.recipe.optimizer.beta1);
    opt.get("beta2", cfg.recipe.optimizer.beta2);
    opt.get("epsilon", cfg.recipe.optimizer.epsilon);
    opt.get("label_smoothing", cfg.recipe.optimizer.label_smoothing);
    opt.get("initial_lr", cfg.recipe.optimizer.initial_lr);
    opt.get("warmup_steps", cfg.recipe.optimizer.warmup_steps);
    opt.get("effective_batch_tokens", cfg.recipe.optimizer.effective_batch_tokens);
    opt.finish();

    TableReader tr(doc, "train");
    tr.get("eval_interval", cfg.recipe.early_stop.eval_interval_steps);
    tr.get("patience", cfg.recipe.early_stop.patience_evals);
    tr.get("max_steps_base", cfg.recipe.max_steps_base);
    tr.get("max_steps_finetune", cfg.recipe.max_steps_finetune);
    tr.get("jobs", cfg.recipe.jobs);
    tr.finish();

    TableReader dec(doc, "decode");
    dec.get("beam_width", cfg.recipe.eval_decode.beam_width);
    dec.get("k", cfg.recipe.topk);
    dec.get("length_penalty", cfg.recipe.eval_decode.length_penalty);
    dec.finish();
    cfg.recipe.eval_decode.mode = DecodeMode::beam;
    cfg.recipe.eval_decode.max_len = cfg.recipe.model.max_len;
    cfg.recipe.eval_decode.k = cfg.recipe.topk;

    TableReader ev(doc, "eval");
    ev.get("human_samples", cfg.human_samples);
    ev.finish();

    // optional explicit DOMAIN value list, cross-checked against `domains`
    TableReader schema(doc, "schema");
    std::vector<std::string> domain_values = cfg.domains;
    schema.get("domain_values", domain_values);
    schema.finish();
    if (std::set<std::string>(domain_values.begin(), domain_values.end()) !=
        std::set<std::string>(cfg.domains.begin(), cfg.domains.end())) {
        std::string a = join(domain_values, ",");
        std::string b = join(cfg.domains, ",");
        throw Error("config key schema.domain_values: {" + a +
                    "} does not match domains {" + b + "}");
    }

    cfg.validate();
    return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path &path) {
    return parse_experiment_config(read_file(path), path.string());
}

namespace {

std::string fmt_double(double v) {
    std::ostringstream os;
    os << v;
    std::string s = os.str();
    // TOML floats need a decimal point or exponent
    if (s.find_first_of(".eE") == std::string::npos) s += ".0";
    return s;
}

std::string fmt_list(const std::vector<std::string> &v) {
    std::string out = "[";
    for (std::size_t i = 0; i < v.size(); ++i)
        out += (i ? ", \"" : "\"") + v[i] + "\"";
    return out + "]";
}

} // namespace

std::string render_config_toml(const ExperimentConfig &cfg) {
    std::ostringstream os;
    os << "seed = " << cfg.seed << "\n";
    os << "out = \"" << cfg.out_root.string() << "\"\n";
    os << "domains = " << fmt_list(cfg.domains) << "\n\n";

    os << "[synth]\n";
    os << "vocab_words = " << cfg.synth.vocab_words << "\n";
    os << "divergent_words = " << cfg.synth.divergent_words << "\n";
    os << "private_words_per_domain = " << cfg.synth.private_words_per_domain << "\n";
    os << "divergent_rate = " << fmt_double(cfg.synth.divergent_rate) << "\n";
    os << "min_len = " << cfg.synth.min_len << "\n";
    os << "max_len = " << cfg.synth.max_len << "\n";
    os << "generic_pairs = " << cfg.synth.generic_pairs << "\n";
    os << "generic_dev = " << cfg.synth.generic_dev << "\n";
    os << "genuine_per_domain = " << cfg.synth.genuine_per_domain << "\n";
    os << "mono_per_domain = " << cfg.synth.mono_per_domain << "\n";
    os << "dev_per_domain = " << cfg.synth.dev_per_domain << "\n";
    os << "test_per_domain = " << cfg.synth.test_per_domain << "\n\n";

    os << "[recipe]\n";
    os << "pair_label = \"" << cfg.recipe.pair_label << "\"\n";
    os << "ablation = " << (cfg.recipe.ablation ? "true" : "false") << "\n\n";

    os << "[bpe]\n";
    os << "vocab_size = " << cfg.recipe.bpe_vocab_size << "\n\n";

    os << "[model]\n";
    os << "d_model = " << cfg.recipe.model.d_model << "\n";
    os << "n_heads = " << cfg.recipe.model.n_heads << "\n";
    os << "n_layers = " << cfg.recipe.model.n_layers << "\n";
    os << "d_ffn = " << cfg.recipe.model.d_ffn << "\n";
    os << "dropout = " << fmt_double(cfg.recipe.model.dropout) << "\n";
    os << "max_len = " << cfg.recipe.model.max_len << "\n\n";

    os << "[optimizer]\n";
    os << "beta1 = " << fmt_double(cfg.recipe.optimizer.beta1) << "\n";
    os << "beta2 = " << fmt_double(cfg.recipe.optimizer.beta2) << "\n";
    os << "epsilon = " << fmt_double(cfg.recipe.optimizer.epsilon) << "\n";
    os << "label_smoothing = " << fmt_double(cfg.recipe.optimizer.label_smoothing) << "\n";
    os << "initial_lr = " << fmt_double(cfg.recipe.optimizer.initial_lr) << "\n";
    os << "warmup_steps = " << cfg.recipe.optimizer.warmup_steps << "\n";
    os << "effective_batch_tokens = " << cfg.recipe.optimizer.effective_batch_tokens << "\n\n";

    os << "[train]\n";
    os << "eval_interval = " << cfg.recipe.early_stop.eval_interval_steps << "\n";
    os << "patience = " << cfg.recipe.early_stop.patience_evals << "\n";
    os << "max_steps_base = " << cfg.recipe.max_steps_base << "\n";
    os << "max_steps_finetune = " << cfg.recipe.max_steps_finetune << "\n";
    os << "jobs = " << cfg.recipe.jobs << "\n\n";

    os << "[decode]\n";
    os << "beam_width = " << cfg.recipe.eval_decode.beam_width << "\n";
    os << "k = " << cfg.recipe.topk << "\n";
    os << "length_penalty = " << fmt_double(cfg.recipe.eval_decode.length_penalty) << "\n\n";

    os << "[eval]\n";
    os << "human_samples = " << cfg.human_samples << "\n";
    return os.str();
}

} // namespace mdt
