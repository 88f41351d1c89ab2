#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "kgsynth/linalg.hpp"
#include "kgsynth/noise_schedule.hpp"
#include "kgsynth/rng.hpp"
#include "kgsynth/trajectory.hpp"

namespace kgsynth {

enum class Precision { Float64, Float32 };

// Noise-prediction network:
//
//   embed      E  = (mask . x_t) W_embed                       L x h
//   stem       H0 = silu(conv_k(E) + b_stem + tau(t) W_time + b_time)
//   block b    A  = MHA(H)  (padding keys masked)
//              H1 = H + (1 + c Ws + bs) . A + (c Wh + bh)     FiLM, c = x_t log1p(Psi)
//              H' = H1 + silu(H1 W1 + b1) W2 + b2
//   output     eps = H_B W_out + b_out + (mask . x_t) . (tau(t) W_skip + b_skip)
//
// tau(t) is an h-wide sinusoidal time embedding. Parameter count:
//   3 V h + 2 V + 4 h^2 + 2 h + B (6 h^2 + 2 h d + 5 h)
// for kernel size 3 (the stem contributes k h^2 + h).
struct NetConfig {
    int vocab_size = 0;  // V
    int max_len = 0;     // L
    int hidden = 32;     // h
    int blocks = 3;      // B
    int heads = 4;
    int film_width = 1;  // d
    int kernel = 3;      // stem taps, odd
    Precision precision = Precision::Float64;

    void validate() const;
    nlohmann::json to_json() const;
    static NetConfig from_json(const nlohmann::json& j);

    friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

std::size_t parameter_count(const NetConfig& cfg);

struct ParamTensor {
    std::string name;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    std::size_t offset = 0;

    std::size_t size() const { return static_cast<std::size_t>(rows * cols); }
};

class ParamLayout {
public:
    static ParamLayout for_config(const NetConfig& cfg);

    const std::vector<ParamTensor>& tensors() const { return tensors_; }
    std::size_t total_size() const { return total_; }
    const ParamTensor& at(std::string_view name) const;
    // Name of the tensor holding flat coordinate i.
    const ParamTensor& owner_of(std::size_t i) const;

private:
    void add(std::string name, Eigen::Index rows, Eigen::Index cols);

    std::vector<ParamTensor> tensors_;
    std::size_t total_ = 0;
};

struct DenoiserParams {
    NetConfig config;
    ParamLayout layout;
    std::vector<double> values;

    Eigen::Map<Matrix> view(std::string_view name);
    Eigen::Map<const Matrix> view(std::string_view name) const;
};

// Fan-in uniform weights, zero biases, and zero FiLM generators so that the
// modulation starts as the identity. Deterministic in (cfg, seed).
DenoiserParams init_params(const NetConfig& cfg, std::uint64_t seed);

// Inference wrapper holding precision-converted weights and the FiLM token
// features log1p(Psi).
class Denoiser {
public:
    Denoiser(const DenoiserParams& params, const Matrix& psi);
    ~Denoiser();
    Denoiser(Denoiser&&) noexcept;
    Denoiser& operator=(Denoiser&&) noexcept;

    // x_t is L x V; returns the L x V noise estimate. Rows with mask 0 never
    // influence rows with mask 1.
    Matrix predict(const Matrix& x_t, std::span<const std::uint8_t> mask, double t) const;

    const NetConfig& config() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

Matrix forward(const DenoiserParams& params, const Matrix& x_t, std::span<const std::uint8_t> mask, double t,
               const Matrix& psi);

// One (t, eps) draw per training sample.
struct NoiseDraw {
    double t = 0.0;
    Matrix eps;
};

// t ~ U(0, 1) first, then eps ~ N(0, I) row-major over L x V.
NoiseDraw draw_noise(Rng& rng, Eigen::Index rows, Eigen::Index cols);

// x_t = sqrt(alpha_v(t)) x0 + sqrt(1 - alpha_v(t)) eps, column-wise per token.
Matrix perturb(const Matrix& x0, const Matrix& eps, double t, const ScheduleParams& schedule,
               std::span<const double> psi);

struct LossOptions {
    double weight_scale = 1.0;  // annealing multiplier applied to the gradient
    std::size_t workers = 1;
};

struct LossResult {
    double loss = 0.0;  // mean_i w(t_i) * sum over unmasked entries (eps - eps_hat)^2
    std::vector<double> gradient;
};

// Exact gradient of weight_scale * loss with respect to params.values.
// Per-sample work may run in parallel; the reduction is a fixed pairwise tree.
LossResult loss_and_gradient(const DenoiserParams& params, std::span<const TrajectoryTensor> batch,
                             const Matrix& psi, std::span<const double> psi_scores,
                             const ScheduleParams& schedule, std::span<const NoiseDraw> draws,
                             const LossOptions& options = {});

LossResult loss_and_gradient(const DenoiserParams& params, std::span<const TrajectoryTensor> batch,
                             const Matrix& psi, std::span<const double> psi_scores,
                             const ScheduleParams& schedule, Rng& rng, const LossOptions& options = {});

using EpsPredictor = std::function<Matrix(const Matrix& x_t, std::span<const std::uint8_t> mask, double t)>;

// The same objective evaluated for an arbitrary predictor (no gradient).
double denoising_loss(const EpsPredictor& predictor, std::span<const TrajectoryTensor> batch,
                      std::span<const double> psi_scores, const ScheduleParams& schedule,
                      std::span<const NoiseDraw> draws);

}  // namespace kgsynth
