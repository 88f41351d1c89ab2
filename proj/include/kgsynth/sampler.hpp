#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "kgsynth/cohort_sim.hpp"
#include "kgsynth/denoiser.hpp"
#include "kgsynth/metapath.hpp"
#include "kgsynth/noise_schedule.hpp"
#include "kgsynth/trainer.hpp"
#include "kgsynth/trajectory.hpp"

namespace kgsynth {

enum class DriftMode {
    // dx = -beta_v s dt + sqrt(beta_v) dw, exactly as printed for the reverse SDE.
    PaperLiteral,
    // dx = [-beta_v/2 x - beta_v s] dt + sqrt(beta_v) dw, the reverse of the
    // variance-preserving forward process used in training.
    VpConsistent,
};

struct SamplerConfig {
    double step_size = 1e-3;
    DriftMode drift = DriftMode::VpConsistent;
    bool noise_on = true;
    int n_trajectories = 0;
    std::uint64_t seed = 0;
    std::size_t workers = 1;

    void validate() const;
};

// Number of Euler-Maruyama steps from t = 1 to t = 0.
int reverse_step_count(double step_size);

// One Euler-Maruyama step from t to t - dt. The score per token column is
// recovered from the noise estimate as -eps_hat / sqrt(1 - alpha_v(t)).
Matrix reverse_step(const Matrix& x, std::span<const std::uint8_t> mask, double t, double dt,
                    const EpsPredictor& predictor, std::span<const double> psi, const ScheduleParams& schedule,
                    const SamplerConfig& cfg, Rng& rng);

// Full reverse integration from x_1 ~ N(0, I); returns x at t = 0.
// `on_eval`, when set, sees every time at which the predictor is called.
Matrix integrate_reverse(const EpsPredictor& predictor, std::span<const std::uint8_t> mask,
                         Eigen::Index rows, Eigen::Index cols, std::span<const double> psi,
                         const ScheduleParams& schedule, const SamplerConfig& cfg, Rng& rng,
                         const std::function<void(double)>& on_eval = {});

struct DecodedRow {
    TokenId lab;
    TokenId med;
    bool ae;
    bool unique;  // every block had a single strict maximum

    friend bool operator==(const DecodedRow&, const DecodedRow&) = default;
};

// Per unmasked row: argmax within each field block, ties to the lowest id.
std::vector<DecodedRow> decode(const Matrix& x0_hat, std::span<const std::uint8_t> mask, const TokenVocab& vocab);

// t_1 = 0, then i.i.d. resampled gaps floored at kMinGap.
inline constexpr double kMinGap = 1e-3;
std::vector<double> sample_timestamps(const EmpiricalGapDistribution& gaps, int length, Rng& rng);

struct SampleStats {
    std::size_t rows = 0;
    std::size_t unique_rows = 0;
};

// Deterministic per (checkpoint, cfg.seed); trajectory k uses its own
// substreams, so output does not depend on the worker count.
std::vector<SyntheticTrajectory> sample_trajectories(const Checkpoint& checkpoint, const MetaPathProfile& profile,
                                                     const EmpiricalGapDistribution& gaps,
                                                     const EmpiricalLengthDistribution& lengths,
                                                     const SamplerConfig& cfg, SampleStats* stats = nullptr);

}  // namespace kgsynth
