#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "kgsynth/error.hpp"
#include "kgsynth/metapath.hpp"
#include "kgsynth/noise_schedule.hpp"

using namespace kgsynth;

namespace {

double simpson(const std::function<double(double)>& f, double a, double b, double fa, double fm, double fb,
               double whole, double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * tol)
        return left + right + (left + right - whole) / 15.0;
    return simpson(f, a, m, fa, flm, fm, left, tol / 2, depth - 1) +
           simpson(f, m, b, fm, frm, fb, right, tol / 2, depth - 1);
}

double integrate(const std::function<double(double)>& f, double a, double b) {
    const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    return simpson(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), 1e-13, 40);
}

}  // namespace

TEST_CASE("base schedule endpoints") {
    ScheduleParams p;
    CHECK(beta_tilde(p, 0.0) == 0.1);
    CHECK(beta_tilde(p, 1.0) == 20.0);
    CHECK(beta_tilde(p, 0.5) == doctest::Approx(10.05).epsilon(1e-15));
    CHECK_THROWS_AS(beta_tilde(p, 1.5), InvalidArgument);
    CHECK_THROWS_AS(beta_tilde(p, -0.1), InvalidArgument);
}

TEST_CASE("per-token rate") {
    ScheduleParams p;
    for (double t : {0.0, 0.3, 1.0}) CHECK(beta_v(p, t, 0.0) == beta_tilde(p, t));
    p.lambda = 0.0;
    for (double psi : {0.0, 2.0, 50.0}) CHECK(beta_v(p, 0.7, psi) == beta_tilde(p, 0.7));
    p.lambda = 0.3;
    CHECK(beta_v(p, 0.4, 0.0) == beta_tilde(p, 0.4));
    CHECK(beta_v(p, 1.0, 1.0) == doctest::Approx(14.0).epsilon(1e-15));
    CHECK_THROWS_AS(beta_v(p, 0.5, 1.0 / 0.3), InvalidArgument);
    CHECK_THROWS_AS(beta_v(p, 0.5, -1.0), InvalidArgument);
    CHECK(beta_v(p, 0.5, psi_max_for(0.3)) > 0.0);
}

TEST_CASE("signal fraction") {
    ScheduleParams p;
    p.lambda = 0.4;
    CHECK(alpha_v(p, 0.0, 1.3) == 1.0);
    p.lambda = 0.0;
    p.beta_min = p.beta_max = 2.5;
    for (double t : {0.1, 0.5, 0.9}) CHECK(alpha_v(p, t, 3.0) == doctest::Approx(std::exp(-2.5 * t)).epsilon(1e-15));
}

TEST_CASE("signal fraction matches quadrature") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 200; ++i) {
        ScheduleParams p;
        p.beta_min = 0.01 + u(rng);
        p.beta_max = p.beta_min + 25.0 * u(rng);
        p.lambda = 0.95 * u(rng);
        const double psi = u(rng) * (p.lambda > 0 ? psi_max_for(p.lambda) : 10.0);
        const double t = u(rng);
        const double integral = integrate([&](double s) { return beta_v(p, s, psi); }, 0.0, t);
        CHECK(std::abs(alpha_v(p, t, psi) - std::exp(-integral)) < 1e-8);
        CHECK(beta_v(p, t, psi) > 0.0);
        CHECK(beta_v(p, t, psi) <= beta_tilde(p, t));
    }
}

TEST_CASE("loss weight") {
    CHECK(loss_weight(0.0) == 1.0);
    CHECK(loss_weight(1.0) == 0.0);
    CHECK(loss_weight(0.5) == 0.5);
    CHECK(loss_weight(0.25) == doctest::Approx(std::pow(std::cos(M_PI / 8), 2)).epsilon(1e-15));
}

TEST_CASE("parameter validation and JSON") {
    ScheduleParams p;
    p.lambda = 0.2;
    p.steps = 77;
    CHECK(ScheduleParams::from_json(p.to_json()) == p);
    p.beta_min = 0.0;
    CHECK_THROWS_AS(p.validate(), InvalidArgument);
    p.beta_min = 30.0;
    CHECK_THROWS_AS(p.validate(), InvalidArgument);
    p.beta_min = 0.1;
    p.lambda = 1.0;
    CHECK_THROWS_AS(p.validate(), InvalidArgument);
}
