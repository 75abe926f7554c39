#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "mdt/model.hpp"

namespace mdt {

struct OptimizerConfig {
    double beta1 = 0.9;
    double beta2 = 0.998;
    double epsilon = 1e-9;
    double label_smoothing = 0.1;
    double initial_lr = 2.0;
    std::size_t warmup_steps = 400;
    // desk-scale default; the full-scale recipe uses 25,000
    std::size_t effective_batch_tokens = 2000;

    void validate() const;
};

struct EarlyStopPolicy {
    std::size_t eval_interval_steps = 200;
    int patience_evals = 2;
};

// noam schedule: initial_lr * d_model^-1/2 * min(step^-1/2, step * warmup^-3/2)
double lr_at(std::size_t step, const OptimizerConfig &cfg, int d_model);

// Dev-loss history with "stop after `patience` consecutive non-decreasing
// evaluations" semantics and best-checkpoint tracking.
class EarlyStopTracker {
  public:
    explicit EarlyStopTracker(int patience) : patience_(patience) {}

    void record(double dev_loss);
    bool should_stop() const { return consecutive_bad_ >= patience_; }
    std::size_t evals() const { return history_.size(); }
    std::size_t best_eval() const; // 1-based index of the minimum
    double best_loss() const;
    const std::vector<double> &history() const { return history_; }

  private:
    int patience_;
    int consecutive_bad_ = 0;
    std::vector<double> history_;
};

struct Checkpoint {
    ModelConfig config;
    ModelParameters params;
    ModelParameters adam_m; // first moments
    ModelParameters adam_v; // second moments
    std::size_t step = 0;
    std::vector<double> dev_loss_history;
};

void save_checkpoint(const Checkpoint &ckpt, const std::filesystem::path &path);
Checkpoint load_checkpoint(const std::filesystem::path &path);

struct TrainOptions {
    std::uint64_t seed = 0;
    std::size_t max_steps = 10000; // desk-scale guard against non-convergence
    int jobs = 1;                  // parallel gradient workers; reduction order is fixed
    std::optional<std::filesystem::path> checkpoint_dir; // numbered ckpts + "best" + log
    std::optional<ModelParameters> init_from;            // fine-tuning start point
};

// Adam + noam schedule with gradient accumulation to effective_batch_tokens,
// periodic dev evaluation and early stopping. Returns the checkpoint with
// minimum dev loss.
Checkpoint train(const ModelConfig &model_cfg, const std::vector<EncodedPair> &train_data,
                 const std::vector<EncodedPair> &dev_data, const OptimizerConfig &opt_cfg,
                 const EarlyStopPolicy &policy, const TrainOptions &opts);

double evaluate_dev_loss(const ModelConfig &cfg, const ModelParameters &params,
                         const std::vector<EncodedPair> &dev, double label_smoothing);

} // namespace mdt
