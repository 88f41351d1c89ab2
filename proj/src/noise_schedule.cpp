#include "kgsynth/noise_schedule.hpp"

#include <cmath>
#include <numbers>

#include "kgsynth/error.hpp"

namespace kgsynth {

namespace {

void check_time(double t) {
    if (!(t >= 0.0 && t <= 1.0)) throw InvalidArgument("diffusion time must lie in [0, 1]");
}

double modulation(const ScheduleParams& p, double psi) {
    if (p.lambda == 0.0) return 1.0;
    if (psi < 0.0) throw InvalidArgument("meta-path score must be non-negative");
    const double m = 1.0 - p.lambda * psi;
    if (!(m > 0.0)) throw InvalidArgument("lambda * psi >= 1 violates the clipping contract");
    return m;
}

}  // namespace

void ScheduleParams::validate() const {
    if (!(beta_min > 0.0)) throw InvalidArgument("beta_min must be positive");
    if (!(beta_max >= beta_min)) throw InvalidArgument("beta_max must be >= beta_min");
    if (!(lambda >= 0.0 && lambda < 1.0)) throw InvalidArgument("lambda must lie in [0, 1)");
    if (steps < 1) throw InvalidArgument("schedule steps must be positive");
}

nlohmann::json ScheduleParams::to_json() const {
    return {{"beta_min", beta_min}, {"beta_max", beta_max}, {"lambda", lambda}, {"steps", steps}};
}

ScheduleParams ScheduleParams::from_json(const nlohmann::json& j) {
    ScheduleParams p;
    p.beta_min = j.at("beta_min").get<double>();
    p.beta_max = j.at("beta_max").get<double>();
    p.lambda = j.at("lambda").get<double>();
    p.steps = j.at("steps").get<int>();
    p.validate();
    return p;
}

double beta_tilde(const ScheduleParams& p, double t) {
    check_time(t);
    return p.beta_min + (p.beta_max - p.beta_min) * t;
}

double beta_tilde_integral(const ScheduleParams& p, double t) {
    check_time(t);
    return p.beta_min * t + 0.5 * (p.beta_max - p.beta_min) * t * t;
}

double beta_v(const ScheduleParams& p, double t, double psi) {
    const double b = beta_tilde(p, t);
    if (p.lambda == 0.0) return b;
    return b * modulation(p, psi);
}

double alpha_v(const ScheduleParams& p, double t, double psi) {
    const double integral = beta_tilde_integral(p, t);
    if (p.lambda == 0.0) return std::exp(-integral);
    return std::exp(-modulation(p, psi) * integral);
}

double loss_weight(double t) {
    check_time(t);
    // Half-angle form: exact at t = 0, 0.5 and 1.
    return 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

}  // namespace kgsynth
