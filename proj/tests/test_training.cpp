#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "mdt/training.hpp"

using namespace mdt;

namespace {

std::filesystem::path tmpdir() {
    auto p = std::filesystem::temp_directory_path() / "mdt-training-tests";
    std::filesystem::create_directories(p);
    return p;
}

ModelConfig tiny_config(int vocab = 12) {
    ModelConfig cfg;
    cfg.d_model = 16;
    cfg.n_heads = 2;
    cfg.n_layers = 1;
    cfg.d_ffn = 32;
    cfg.dropout = 0.0;
    cfg.src_vocab = vocab;
    cfg.tgt_vocab = vocab;
    cfg.max_len = 12;
    return cfg;
}

// copy task: target equals source
std::vector<EncodedPair> copy_data(std::size_t n, int vocab, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<EncodedPair> out;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t len = 2 + rng.next_below(4);
        std::vector<int> s;
        for (std::size_t j = 0; j < len; ++j) s.push_back(4 + int(rng.next_below(std::uint64_t(vocab - 4))));
        out.push_back({s, s});
    }
    return out;
}

OptimizerConfig fast_opt() {
    OptimizerConfig opt;
    opt.warmup_steps = 40;
    opt.effective_batch_tokens = 250;
    return opt;
}

bool params_equal(const ModelParameters &a, const ModelParameters &b) {
    if (a.names() != b.names()) return false;
    for (const auto &n : a.names())
        if (a.at(n).rows() != b.at(n).rows() || a.at(n).cols() != b.at(n).cols() ||
            (a.at(n) - b.at(n)).cwiseAbs().maxCoeff() != 0.0)
            return false;
    return true;
}

} // namespace

TEST_CASE("noam schedule spot values") {
    OptimizerConfig opt; // initial_lr 2.0, warmup 400
    // closed form: 2 / sqrt(64) * min(s^-1/2, s * 400^-3/2)
    CHECK(lr_at(400, opt, 64) == doctest::Approx(0.0125).epsilon(1e-12));
    CHECK(lr_at(1, opt, 64) == doctest::Approx(0.25 * 1.0 * std::pow(400.0, -1.5)).epsilon(1e-12));
    CHECK(lr_at(100, opt, 64) == doctest::Approx(0.25 * 100.0 * std::pow(400.0, -1.5)).epsilon(1e-12));
    CHECK(lr_at(1600, opt, 64) == doctest::Approx(0.25 / 40.0).epsilon(1e-12));
    CHECK_THROWS_AS(lr_at(0, opt, 64), Error);

    OptimizerConfig other;
    other.initial_lr = 1.0;
    other.warmup_steps = 100;
    CHECK(lr_at(100, other, 16) == doctest::Approx(0.25 * 0.1).epsilon(1e-12));
    CHECK(lr_at(50, other, 16) == doctest::Approx(0.25 * 50.0 * 1e-3).epsilon(1e-12));
}

TEST_CASE("early stopping halts after two non-decreasing evals and keeps the best") {
    EarlyStopTracker t(2);
    t.record(2.0);
    CHECK_FALSE(t.should_stop());
    t.record(1.5);
    CHECK_FALSE(t.should_stop());
    t.record(1.6);
    CHECK_FALSE(t.should_stop());
    t.record(1.7);
    CHECK(t.should_stop());
    CHECK(t.evals() == 4);
    CHECK(t.best_eval() == 2);
    CHECK(t.best_loss() == doctest::Approx(1.5));
}

TEST_CASE("equal losses count as non-decreasing") {
    EarlyStopTracker t(2);
    t.record(1.0);
    t.record(1.0);
    CHECK_FALSE(t.should_stop());
    t.record(1.0);
    CHECK(t.should_stop());
    CHECK(t.best_eval() == 1);
}

TEST_CASE("a decreasing run never stops") {
    EarlyStopTracker t(2);
    for (double v : {3.0, 2.5, 2.0, 1.5, 1.0}) {
        t.record(v);
        CHECK_FALSE(t.should_stop());
    }
    CHECK(t.best_eval() == 5);
}

TEST_CASE("checkpoint save/load roundtrips bit-exactly") {
    ModelConfig cfg = tiny_config();
    Checkpoint ckpt;
    ckpt.config = cfg;
    ckpt.params = init_params(cfg, 3);
    ckpt.adam_m = init_params(cfg, 4);
    ckpt.adam_v = init_params(cfg, 5);
    ckpt.step = 123;
    ckpt.dev_loss_history = {2.5, 2.25, 2.125};

    auto path = tmpdir() / "roundtrip.ckpt";
    save_checkpoint(ckpt, path);
    Checkpoint back = load_checkpoint(path);

    CHECK(back.step == 123);
    CHECK(back.dev_loss_history == ckpt.dev_loss_history);
    CHECK(back.config.d_model == cfg.d_model);
    CHECK(back.config.tgt_vocab == cfg.tgt_vocab);
    CHECK(params_equal(back.params, ckpt.params));
    CHECK(params_equal(back.adam_m, ckpt.adam_m));
    CHECK(params_equal(back.adam_v, ckpt.adam_v));
}

TEST_CASE("load rejects non-checkpoint files") {
    auto path = tmpdir() / "junk.ckpt";
    write_file(path, "not a checkpoint at all");
    CHECK_THROWS_AS(load_checkpoint(path), Error);
}

TEST_CASE("training learns the copy task") {
    ModelConfig cfg = tiny_config();
    auto train_data = copy_data(80, cfg.src_vocab, 1);
    auto dev_data = copy_data(20, cfg.src_vocab, 2);

    double initial = evaluate_dev_loss(cfg, init_params(cfg, derive_seed(7, "init")), dev_data, 0.1);

    TrainOptions opts;
    opts.seed = 7;
    opts.max_steps = 120;
    EarlyStopPolicy policy{20, 3};
    Checkpoint best = train(cfg, train_data, dev_data, fast_opt(), policy, opts);

    double final_loss = evaluate_dev_loss(cfg, best.params, dev_data, 0.1);
    CHECK(final_loss < 0.6 * initial);
    CHECK(best.step > 0);
    CHECK(!best.dev_loss_history.empty());
    // returned checkpoint is the dev-loss minimum seen
    double mn = *std::min_element(best.dev_loss_history.begin(), best.dev_loss_history.end());
    CHECK(final_loss == doctest::Approx(mn).epsilon(1e-9));
}

TEST_CASE("training is deterministic and jobs does not change the result") {
    ModelConfig cfg = tiny_config();
    auto train_data = copy_data(40, cfg.src_vocab, 3);
    auto dev_data = copy_data(10, cfg.src_vocab, 4);
    EarlyStopPolicy policy{10, 2};

    TrainOptions a;
    a.seed = 11;
    a.max_steps = 20;
    TrainOptions b = a;
    TrainOptions c = a;
    c.jobs = 3;

    Checkpoint ra = train(cfg, train_data, dev_data, fast_opt(), policy, a);
    Checkpoint rb = train(cfg, train_data, dev_data, fast_opt(), policy, b);
    Checkpoint rc = train(cfg, train_data, dev_data, fast_opt(), policy, c);
    CHECK(params_equal(ra.params, rb.params)); // sequential mode: bit-identical
    // parallel mode: identical up to floating-point summation order
    double diff = 0.0;
    for (const auto &n : ra.params.names())
        diff = std::max(diff, (ra.params.at(n) - rc.params.at(n)).cwiseAbs().maxCoeff());
    CHECK(diff < 1e-8);
    CHECK(ra.step == rc.step);
}

TEST_CASE("checkpoint dir receives numbered checkpoints, best pointer and a log") {
    ModelConfig cfg = tiny_config();
    auto train_data = copy_data(40, cfg.src_vocab, 5);
    auto dev_data = copy_data(10, cfg.src_vocab, 6);
    auto dir = tmpdir() / "run1";
    std::filesystem::remove_all(dir);

    TrainOptions opts;
    opts.seed = 1;
    opts.max_steps = 20;
    opts.checkpoint_dir = dir;
    EarlyStopPolicy policy{10, 2};
    Checkpoint best = train(cfg, train_data, dev_data, fast_opt(), policy, opts);

    CHECK(std::filesystem::exists(dir / "train_log.jsonl"));
    CHECK(std::filesystem::exists(dir / "best"));
    std::string pointer = trim(read_file(dir / "best"));
    CHECK(std::filesystem::exists(dir / pointer));
    Checkpoint pointed = load_checkpoint(dir / pointer);
    CHECK(params_equal(pointed.params, best.params));

    // log lines are JSON with step + train_loss or dev_loss
    std::ifstream log(dir / "train_log.jsonl");
    std::string line;
    std::size_t lines = 0;
    while (std::getline(log, line)) {
        CHECK(line.find("\"step\"") != std::string::npos);
        ++lines;
    }
    CHECK(lines >= 20);
}

TEST_CASE("fine-tuning starts from the provided parameters") {
    ModelConfig cfg = tiny_config();
    auto train_data = copy_data(40, cfg.src_vocab, 8);
    auto dev_data = copy_data(10, cfg.src_vocab, 9);
    EarlyStopPolicy policy{10, 2};

    TrainOptions opts;
    opts.seed = 2;
    opts.max_steps = 5; // few steps: result stays near the init
    Checkpoint first = train(cfg, train_data, dev_data, fast_opt(), policy, opts);

    TrainOptions ft = opts;
    ft.init_from = first.params;
    ft.max_steps = 1;
    Checkpoint second = train(cfg, train_data, dev_data, fast_opt(), policy, ft);
    // one step from the fine-tune init moves parameters only slightly
    double diff = 0.0;
    for (const auto &n : first.params.names())
        diff = std::max(diff, (first.params.at(n) - second.params.at(n)).cwiseAbs().maxCoeff());
    CHECK(diff > 0.0);
    CHECK(diff < 0.05);
}

TEST_CASE("divergence raises an error naming the step") {
    ModelConfig cfg = tiny_config();
    auto train_data = copy_data(40, cfg.src_vocab, 10);
    auto dev_data = copy_data(10, cfg.src_vocab, 11);
    ModelParameters poisoned = init_params(cfg, 1);
    poisoned.at("out.b")(0, 0) = std::nan("");
    TrainOptions opts;
    opts.seed = 3;
    opts.max_steps = 50;
    opts.init_from = poisoned;
    EarlyStopPolicy policy{10, 2};
    try {
        train(cfg, train_data, dev_data, fast_opt(), policy, opts);
        FAIL("expected divergence");
    } catch (const Error &e) {
        CHECK(std::string(e.what()).find("diverged") != std::string::npos);
        CHECK(std::string(e.what()).find("step") != std::string::npos);
    }
}

TEST_CASE("optimizer config validation") {
    OptimizerConfig opt;
    opt.beta2 = 1.0;
    CHECK_THROWS_AS(opt.validate(), Error);
    opt = OptimizerConfig{};
    opt.label_smoothing = 1.0;
    CHECK_THROWS_AS(opt.validate(), Error);
    opt = OptimizerConfig{};
    opt.effective_batch_tokens = 0;
    CHECK_THROWS_AS(opt.validate(), Error);
    CHECK_NOTHROW(OptimizerConfig{}.validate());
}
