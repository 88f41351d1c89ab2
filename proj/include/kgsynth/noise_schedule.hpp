#pragma once

#include <json.hpp>

namespace kgsynth {

// Linear base schedule on normalised time t in [0, 1], modulated per token by
// (1 - lambda * psi). `steps` is the discrete horizon used by solvers.
struct ScheduleParams {
    double beta_min = 0.1;
    double beta_max = 20.0;
    double lambda = 0.0;
    int steps = 1000;

    void validate() const;

    nlohmann::json to_json() const;
    static ScheduleParams from_json(const nlohmann::json& j);

    friend bool operator==(const ScheduleParams&, const ScheduleParams&) = default;
};

double beta_tilde(const ScheduleParams& p, double t);

// Integral of beta_tilde over [0, t].
double beta_tilde_integral(const ScheduleParams& p, double t);

// beta_tilde(t) * (1 - lambda * psi). Throws if lambda * psi >= 1.
double beta_v(const ScheduleParams& p, double t, double psi);

// exp(-(1 - lambda psi) * integral of beta_tilde): surviving signal fraction.
double alpha_v(const ScheduleParams& p, double t, double psi);

// cos^2(pi t / 2).
double loss_weight(double t);

}  // namespace kgsynth
