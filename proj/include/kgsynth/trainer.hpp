#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "kgsynth/denoiser.hpp"
#include "kgsynth/metapath.hpp"
#include "kgsynth/noise_schedule.hpp"
#include "kgsynth/trajectory.hpp"

namespace kgsynth {

struct TrainConfig {
    double peak_lr = 2e-3;
    int warmup_steps = 100;
    int total_steps = 2000;
    int batch_size = 16;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double anneal = 0.1;  // fraction of steps over which the loss weight ramps to 1
    std::uint64_t seed = 0;
    int log_every = 50;
    std::size_t workers = 1;

    // total_steps == 0 is accepted (the run returns its initialisation);
    // otherwise warmup_steps < total_steps.
    void validate() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);

    // warmup = 5% of total, the default when the config does not give one.
    static int default_warmup(int total_steps) { return total_steps / 20; }
};

// Linear warm-up to peak, then half-cosine decay to zero at total_steps.
double lr_at(const TrainConfig& cfg, int step);

struct OptimState {
    std::vector<double> m;
    std::vector<double> v;
    std::int64_t step = 0;

    static OptimState zeros(std::size_t n) { return {std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), 0}; }
};

// Bias-corrected Adam. Throws NumericalError naming the parameter tensor if
// any gradient coordinate is not finite; nothing is modified in that case.
void adam_step(std::vector<double>& params, std::span<const double> grads, OptimState& opt, double lr,
               const TrainConfig& cfg, const ParamLayout* layout = nullptr);

struct Checkpoint {
    static constexpr int kFormatVersion = 1;

    NetConfig net;
    ScheduleParams schedule;
    TrainConfig train;
    DenoiserParams params;
    OptimState opt;
    std::string vocab_digest;

    std::int64_t step() const { return opt.step; }
};

void save_checkpoint(const Checkpoint& ckpt, std::ostream& out);
Checkpoint load_checkpoint(std::istream& in);
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

struct LossRecord {
    std::int64_t step;
    double loss;
    double lr;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<LossRecord> trace;  // every step
};

struct TrainHooks {
    // Called every log_every steps with the latest record.
    std::function<void(const LossRecord&)> on_log;
    // Called after each step whose index is a multiple of checkpoint_every.
    int checkpoint_every = 0;
    std::function<void(const Checkpoint&)> on_checkpoint;
    // Stop after this many total steps (simulates an interrupted run).
    std::optional<int> stop_after;
};

// Digest of the vocabulary a dataset and profile were encoded with.
std::string vocab_digest(const TokenVocab& vocab);

// Deterministic in (dataset, profile, configs, seed). Batches come from
// per-epoch shuffles; t and eps come from per-(step, slot) substreams, so a
// run resumed from any checkpoint reproduces the uninterrupted run exactly.
TrainResult train(std::span<const TrajectoryTensor> dataset, const MetaPathProfile& profile,
                  const ScheduleParams& schedule, const NetConfig& net, const TrainConfig& cfg,
                  const TrainHooks& hooks = {}, std::optional<Checkpoint> resume = std::nullopt);

// Mean of the trace over a window of steps [begin, end).
double window_mean(const std::vector<LossRecord>& trace, std::size_t begin, std::size_t end);

void write_loss_csv(std::ostream& out, const std::vector<LossRecord>& trace, int every);

}  // namespace kgsynth
