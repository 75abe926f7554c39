#include "mdt/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <atomic>
#include <thread>

#include <json.hpp>

namespace mdt {

using nlohmann::json;

void OptimizerConfig::validate() const {
    if (beta1 <= 0.0 || beta1 >= 1.0 || beta2 <= 0.0 || beta2 >= 1.0)
        throw Error("optimizer config: betas must be in (0,1)");
    if (initial_lr <= 0.0) throw Error("optimizer config: initial_lr must be positive");
    if (epsilon <= 0.0) throw Error("optimizer config: epsilon must be positive");
    if (label_smoothing < 0.0 || label_smoothing >= 1.0)
        throw Error("optimizer config: label_smoothing must be in [0,1)");
    if (warmup_steps == 0 || effective_batch_tokens == 0)
        throw Error("optimizer config: warmup_steps and effective_batch_tokens must be positive");
}

double lr_at(std::size_t step, const OptimizerConfig &cfg, int d_model) {
    if (step == 0) throw Error("lr_at: step must be >= 1");
    double s = double(step);
    double w = double(cfg.warmup_steps);
    return cfg.initial_lr / std::sqrt(double(d_model)) *
           std::min(1.0 / std::sqrt(s), s * std::pow(w, -1.5));
}

void EarlyStopTracker::record(double dev_loss) {
    if (!history_.empty() && dev_loss >= history_.back())
        ++consecutive_bad_;
    else
        consecutive_bad_ = 0;
    history_.push_back(dev_loss);
}

std::size_t EarlyStopTracker::best_eval() const {
    if (history_.empty()) throw Error("no evaluations recorded");
    auto it = std::min_element(history_.begin(), history_.end());
    return std::size_t(it - history_.begin()) + 1;
}

double EarlyStopTracker::best_loss() const {
    if (history_.empty()) throw Error("no evaluations recorded");
    return *std::min_element(history_.begin(), history_.end());
}

namespace {

json config_to_json(const ModelConfig &c) {
    return json{{"d_model", c.d_model},     {"n_heads", c.n_heads},
                {"n_layers", c.n_layers},   {"d_ffn", c.d_ffn},
                {"dropout", c.dropout},     {"src_vocab", c.src_vocab},
                {"tgt_vocab", c.tgt_vocab}, {"tied_embeddings", c.tied_embeddings},
                {"max_len", c.max_len},     {"pad_id", c.pad_id},
                {"bos_id", c.bos_id},       {"eos_id", c.eos_id}};
}

ModelConfig config_from_json(const json &j) {
    ModelConfig c;
    c.d_model = j.at("d_model");
    c.n_heads = j.at("n_heads");
    c.n_layers = j.at("n_layers");
    c.d_ffn = j.at("d_ffn");
    c.dropout = j.at("dropout");
    c.src_vocab = j.at("src_vocab");
    c.tgt_vocab = j.at("tgt_vocab");
    c.tied_embeddings = j.at("tied_embeddings");
    c.max_len = j.at("max_len");
    c.pad_id = j.at("pad_id");
    c.bos_id = j.at("bos_id");
    c.eos_id = j.at("eos_id");
    return c;
}

void write_tensors(std::ostream &out, const ModelParameters &p) {
    for (const auto &name : p.names()) {
        const Mat &m = p.at(name);
        out.write(reinterpret_cast<const char *>(m.data()),
                  std::streamsize(std::size_t(m.size()) * sizeof(double)));
    }
}

void read_tensors(std::istream &in, ModelParameters &p) {
    for (const auto &name : p.names()) {
        Mat &m = p.at(name);
        in.read(reinterpret_cast<char *>(m.data()),
                std::streamsize(std::size_t(m.size()) * sizeof(double)));
        if (!in) throw Error("checkpoint truncated while reading " + name);
    }
}

constexpr char kMagic[8] = {'M', 'D', 'T', 'C', 'K', 'P', 'T', '1'};

} // namespace

void save_checkpoint(const Checkpoint &ckpt, const std::filesystem::path &path) {
    json tensors = json::array();
    for (const auto &name : ckpt.params.names()) {
        const Mat &m = ckpt.params.at(name);
        tensors.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
    }
    json header{{"config", config_to_json(ckpt.config)},
                {"step", ckpt.step},
                {"dev_loss_history", ckpt.dev_loss_history},
                {"tensors", tensors}};
    std::string hs = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write checkpoint: " + path.string());
    out.write(kMagic, 8);
    std::uint64_t len = hs.size();
    out.write(reinterpret_cast<const char *>(&len), 8);
    out.write(hs.data(), std::streamsize(hs.size()));
    write_tensors(out, ckpt.params);
    write_tensors(out, ckpt.adam_m);
    write_tensors(out, ckpt.adam_v);
    if (!out) throw Error("checkpoint write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open checkpoint: " + path.string());
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw Error("not a checkpoint file: " + path.string());
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char *>(&len), 8);
    std::string hs(len, '\0');
    in.read(hs.data(), std::streamsize(len));
    if (!in) throw Error("checkpoint header truncated: " + path.string());
    json header = json::parse(hs);

    Checkpoint ckpt;
    ckpt.config = config_from_json(header.at("config"));
    ckpt.step = header.at("step");
    ckpt.dev_loss_history = header.at("dev_loss_history").get<std::vector<double>>();
    for (const auto &t : header.at("tensors"))
        ckpt.params.add(t.at("name"), t.at("rows"), t.at("cols"));
    ckpt.adam_m = ckpt.params.zeros_like();
    ckpt.adam_v = ckpt.params.zeros_like();
    read_tensors(in, ckpt.params);
    read_tensors(in, ckpt.adam_m);
    read_tensors(in, ckpt.adam_v);
    return ckpt;
}

double evaluate_dev_loss(const ModelConfig &cfg, const ModelParameters &params,
                         const std::vector<EncodedPair> &dev, double label_smoothing) {
    if (dev.empty()) throw Error("evaluate_dev_loss: dev set is empty");
    return batch_loss(cfg, params, dev, label_smoothing);
}

namespace {

// Gradients for one effective batch. Dropout seeds derive from the global
// sentence index, so `jobs` only changes floating-point summation order;
// jobs == 1 is the strict sequential, bit-reproducible mode.
BatchStats parallel_grads(const ModelConfig &cfg, const ModelParameters &params,
                          std::span<const EncodedPair> batch, double label_smoothing,
                          std::uint64_t dropout_seed, int jobs, ModelParameters &grads) {
    jobs = std::max(1, std::min<int>(jobs, int(batch.size())));
    auto sentence = [&](std::size_t i, ModelParameters *out) {
        return accumulate_loss_grad(cfg, params, batch.subspan(i, 1), label_smoothing,
                                    derive_seed(dropout_seed, "sent:" + std::to_string(i)),
                                    out);
    };

    BatchStats total;
    if (jobs == 1) {
        for (std::size_t i = 0; i < batch.size(); ++i) {
            auto s = sentence(i, &grads);
            total.loss_sum += s.loss_sum;
            total.tokens += s.tokens;
        }
        return total;
    }

    std::vector<ModelParameters> worker_grads;
    std::vector<BatchStats> worker_stats(static_cast<std::size_t>(jobs), BatchStats{});
    worker_grads.reserve(std::size_t(jobs));
    for (int w = 0; w < jobs; ++w) worker_grads.push_back(grads.zeros_like());

    std::atomic<std::size_t> next{0};
    std::vector<std::thread> threads;
    for (int w = 0; w < jobs; ++w) {
        threads.emplace_back([&, w] {
            for (std::size_t i = next.fetch_add(1); i < batch.size(); i = next.fetch_add(1)) {
                auto s = sentence(i, &worker_grads[std::size_t(w)]);
                worker_stats[std::size_t(w)].loss_sum += s.loss_sum;
                worker_stats[std::size_t(w)].tokens += s.tokens;
            }
        });
    }
    for (auto &t : threads) t.join();

    for (int w = 0; w < jobs; ++w) {
        total.loss_sum += worker_stats[std::size_t(w)].loss_sum;
        total.tokens += worker_stats[std::size_t(w)].tokens;
        for (const auto &name : grads.names())
            grads.at(name) += worker_grads[std::size_t(w)].at(name);
    }
    return total;
}

} // namespace

Checkpoint train(const ModelConfig &model_cfg, const std::vector<EncodedPair> &train_data,
                 const std::vector<EncodedPair> &dev_data, const OptimizerConfig &opt_cfg,
                 const EarlyStopPolicy &policy, const TrainOptions &opts) {
    model_cfg.validate();
    opt_cfg.validate();
    if (train_data.empty()) throw Error("train: empty training data");
    if (dev_data.empty()) throw Error("train: empty dev data");
    if (policy.eval_interval_steps == 0 || policy.patience_evals <= 0)
        throw Error("train: bad early-stop policy");

    Checkpoint current;
    current.config = model_cfg;
    current.params =
        opts.init_from ? *opts.init_from : init_params(model_cfg, derive_seed(opts.seed, "init"));
    current.adam_m = current.params.zeros_like();
    current.adam_v = current.params.zeros_like();

    std::ofstream log;
    if (opts.checkpoint_dir) {
        std::filesystem::create_directories(*opts.checkpoint_dir);
        log.open(*opts.checkpoint_dir / "train_log.jsonl");
    }

    EarlyStopTracker tracker(policy.patience_evals);
    Checkpoint best;
    bool have_best = false;

    Rng order_rng(derive_seed(opts.seed, "order"));
    std::vector<std::size_t> order(train_data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    ModelParameters grads = current.params.zeros_like();
    std::vector<EncodedPair> pending;
    std::size_t pending_tokens = 0;
    std::size_t cursor = order.size(); // forces an initial shuffle
    bool done = false;

    auto finalize = [&]() -> Checkpoint {
        if (!have_best) {
            best = current;
            best.dev_loss_history = tracker.history();
        }
        if (opts.checkpoint_dir) {
            auto best_path = *opts.checkpoint_dir / ("step-" + std::to_string(best.step) + ".ckpt");
            if (!std::filesystem::exists(best_path)) save_checkpoint(best, best_path);
            write_file(*opts.checkpoint_dir / "best",
                       "step-" + std::to_string(best.step) + ".ckpt\n");
        }
        return best;
    };

    while (!done) {
        if (cursor >= order.size()) {
            shuffle(order, order_rng);
            cursor = 0;
        }
        const EncodedPair &pair = train_data[order[cursor++]];
        pending.push_back(pair);
        pending_tokens += pair.tgt.size() + 1;
        if (pending_tokens < opt_cfg.effective_batch_tokens) continue;

        // one optimizer update per accumulated effective batch
        std::size_t step = current.step + 1;
        grads.set_zero();
        auto stats = parallel_grads(model_cfg, current.params, pending,
                                    opt_cfg.label_smoothing,
                                    derive_seed(opts.seed, "drop" + std::to_string(step)),
                                    opts.jobs, grads);
        pending.clear();
        pending_tokens = 0;

        double train_loss = stats.loss_sum / double(stats.tokens);
        if (!std::isfinite(train_loss))
            throw Error("training diverged (non-finite loss) at step " + std::to_string(step));

        double lr = lr_at(step, opt_cfg, model_cfg.d_model);
        double scale = 1.0 / double(stats.tokens);
        double bc1 = 1.0 - std::pow(opt_cfg.beta1, double(step));
        double bc2 = 1.0 - std::pow(opt_cfg.beta2, double(step));
        for (const auto &name : current.params.names()) {
            Mat g = grads.at(name) * scale;
            Mat &m = current.adam_m.at(name);
            Mat &v = current.adam_v.at(name);
            m = opt_cfg.beta1 * m + (1.0 - opt_cfg.beta1) * g;
            v = (opt_cfg.beta2 * v.array() + (1.0 - opt_cfg.beta2) * g.array().square()).matrix();
            Mat update =
                ((m.array() / bc1) / ((v.array() / bc2).sqrt() + opt_cfg.epsilon)).matrix();
            current.params.at(name) -= lr * update;
        }
        current.step = step;
        if (!current.params.all_finite())
            throw Error("training diverged (non-finite parameters) at step " +
                        std::to_string(step));

        if (log.is_open())
            log << json{{"step", step}, {"train_loss", train_loss}, {"lr", lr}}.dump() << "\n";

        if (step % policy.eval_interval_steps == 0) {
            double dev_loss =
                evaluate_dev_loss(model_cfg, current.params, dev_data, opt_cfg.label_smoothing);
            tracker.record(dev_loss);
            current.dev_loss_history = tracker.history();
            if (log.is_open())
                log << json{{"step", step}, {"dev_loss", dev_loss}}.dump() << "\n";
            if (opts.checkpoint_dir)
                save_checkpoint(current,
                                *opts.checkpoint_dir / ("step-" + std::to_string(step) + ".ckpt"));
            if (tracker.best_eval() == tracker.evals()) {
                best = current;
                have_best = true;
            }
            if (tracker.should_stop()) done = true;
        }
        if (step >= opts.max_steps) done = true;
    }
    return finalize();
}

} // namespace mdt
