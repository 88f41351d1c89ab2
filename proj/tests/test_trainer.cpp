#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "kgsynth/error.hpp"
#include "kgsynth/trainer.hpp"
#include "support.hpp"

using namespace kgsynth;

namespace {

struct Toy {
    MetaPathProfile profile;
    std::vector<TrajectoryTensor> data;
    NetConfig net;
    ScheduleParams sched;
};

// Nine-token vocabulary; records favour L0 and M0 so there is structure to learn.
Toy toy(int patients, double lambda) {
    Toy t;
    const auto vocab = testing::small_vocab(4, 3);
    const auto V = static_cast<Eigen::Index>(vocab.size());
    t.profile.anchor = "D";
    t.profile.lambda = lambda;
    t.profile.psi_max = psi_max_for(lambda);
    t.profile.vocab = vocab;
    t.profile.psi_raw = {3, 1, 0, 0, 2, 0, 0, 0, 0};
    t.profile.psi_clipped = t.profile.psi_raw;
    for (auto& p : t.profile.psi_clipped) p = std::min(p, t.profile.psi_max);
    t.profile.features = Matrix::Zero(V, 2);
    for (Eigen::Index v = 0; v < V; ++v) t.profile.features(v, v % 2) = t.profile.psi_raw[v];
    t.profile.pattern_index = {{"a"}, {"b"}};

    const int L = 5;
    Rng rng = substream(17, Stream::Cohort);
    for (int i = 0; i < patients; ++i) {
        TrajectoryTensor x{Matrix::Zero(L, V), std::vector<std::uint8_t>(L, 0)};
        const int n = 2 + static_cast<int>(uniform_index(rng, L - 1));
        for (int l = 0; l < n; ++l) {
            x.mask[l] = 1;
            x.values(l, uniform01(rng) < 0.7 ? 0 : 1 + uniform_index(rng, 3)) = 1.0;
            x.values(l, uniform01(rng) < 0.7 ? 4 : 5 + uniform_index(rng, 2)) = 1.0;
            x.values(l, uniform01(rng) < 0.9 ? 7 : 8) = 1.0;
        }
        t.data.push_back(std::move(x));
    }
    t.net.vocab_size = static_cast<int>(V);
    t.net.max_len = L;
    t.net.hidden = 8;
    t.net.blocks = 1;
    t.net.heads = 2;
    t.net.film_width = 2;
    t.sched.lambda = lambda;
    return t;
}

TrainConfig short_run(int steps) {
    TrainConfig c;
    c.total_steps = steps;
    c.warmup_steps = steps / 10;
    c.batch_size = 8;
    c.peak_lr = 5e-3;
    c.seed = 3;
    return c;
}

}  // namespace

TEST_CASE("learning-rate schedule") {
    TrainConfig c;
    c.peak_lr = 0.01;
    c.warmup_steps = 10;
    c.total_steps = 110;
    CHECK(lr_at(c, 0) == 0.0);
    CHECK(lr_at(c, 5) == doctest::Approx(0.005));
    CHECK(lr_at(c, 10) == 0.01);
    CHECK(lr_at(c, 60) == doctest::Approx(0.005));
    CHECK(std::abs(lr_at(c, 110)) < 1e-18);
    CHECK(TrainConfig::default_warmup(2000) == 100);
}

TEST_CASE("Adam closed forms") {
    TrainConfig c;
    SUBCASE("zero gradient") {
        std::vector<double> w{1.0, -2.0};
        auto opt = OptimState::zeros(2);
        adam_step(w, std::vector<double>{0.0, 0.0}, opt, 0.1, c);
        CHECK(w == std::vector<double>{1.0, -2.0});
        CHECK(opt.m == std::vector<double>{0.0, 0.0});
        CHECK(opt.v == std::vector<double>{0.0, 0.0});
        CHECK(opt.step == 1);
    }
    SUBCASE("first step moves by lr against the sign") {
        std::vector<double> w{0.5, 0.5, 0.5};
        const std::vector<double> g{3.0, -0.2, 1e-3};
        auto opt = OptimState::zeros(3);
        adam_step(w, g, opt, 0.01, c);
        for (int i = 0; i < 3; ++i) {
            const double expected = 0.5 - 0.01 * g[i] / (std::abs(g[i]) + c.eps);
            CHECK(w[i] == doctest::Approx(expected).epsilon(1e-12));
        }
    }
    SUBCASE("convex descent") {
        std::vector<double> w(5, 1.0);
        auto opt = OptimState::zeros(5);
        auto f = [&] {
            double s = 0;
            for (double x : w) s += x * x;
            return s;
        };
        double prev = f();
        for (int k = 0; k < 10; ++k) {
            std::vector<double> g(5);
            for (int i = 0; i < 5; ++i) g[i] = 2 * w[i];
            adam_step(w, g, opt, 0.05, c);
            const double now = f();
            CHECK(now < prev);
            prev = now;
        }
    }
    SUBCASE("non-finite gradient leaves state untouched") {
        std::vector<double> w{1.0, 2.0};
        auto opt = OptimState::zeros(2);
        CHECK_THROWS_AS(adam_step(w, std::vector<double>{1.0, NAN}, opt, 0.1, c), NumericalError);
        CHECK(w == std::vector<double>{1.0, 2.0});
        CHECK(opt.step == 0);
    }
}

TEST_CASE("zero steps returns the initialisation") {
    auto t = toy(16, 0.3);
    const auto r = train(t.data, t.profile, t.sched, t.net, short_run(0));
    CHECK(r.checkpoint.params.values == init_params(t.net, 3).values);
    CHECK(r.trace.empty());
    CHECK(r.checkpoint.step() == 0);
}

TEST_CASE("configuration mismatches are rejected") {
    auto t = toy(8, 0.3);
    auto net = t.net;
    net.film_width = 3;
    CHECK_THROWS_AS(train(t.data, t.profile, t.sched, net, short_run(5)), InvalidArgument);
    auto sched = t.sched;
    sched.lambda = 0.1;
    CHECK_THROWS_AS(train(t.data, t.profile, sched, t.net, short_run(5)), InvalidArgument);
    auto cfg = short_run(5);
    cfg.warmup_steps = 5;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
}

TEST_CASE("training reduces the loss and is deterministic") {
    auto t = toy(64, 0.3);
    const auto cfg = short_run(400);
    const auto a = train(t.data, t.profile, t.sched, t.net, cfg);
    REQUIRE(a.trace.size() == 400);
    const double first = window_mean(a.trace, 0, 50);
    const double last = window_mean(a.trace, 350, 400);
    CHECK(last < 0.8 * first);
    const auto b = train(t.data, t.profile, t.sched, t.net, cfg);
    CHECK(a.checkpoint.params.values == b.checkpoint.params.values);
}

TEST_CASE("interrupted and resumed run matches the uninterrupted one") {
    auto t = toy(32, 0.3);
    const auto cfg = short_run(120);
    const auto full = train(t.data, t.profile, t.sched, t.net, cfg);

    TrainHooks stop;
    stop.stop_after = 50;
    const auto part = train(t.data, t.profile, t.sched, t.net, cfg, stop);
    CHECK(part.checkpoint.step() == 50);

    std::stringstream io;
    save_checkpoint(part.checkpoint, io);
    auto loaded = load_checkpoint(io);
    CHECK(loaded.params.values == part.checkpoint.params.values);
    CHECK(loaded.opt.m == part.checkpoint.opt.m);
    CHECK(loaded.opt.v == part.checkpoint.opt.v);
    CHECK(loaded.opt.step == part.checkpoint.opt.step);
    CHECK(loaded.vocab_digest == part.checkpoint.vocab_digest);

    const auto resumed = train(t.data, t.profile, t.sched, t.net, cfg, {}, std::move(loaded));
    CHECK(resumed.checkpoint.params.values == full.checkpoint.params.values);
    CHECK(resumed.checkpoint.opt.m == full.checkpoint.opt.m);
    CHECK(resumed.checkpoint.step() == 120);
}

TEST_CASE("checkpoint hooks fire on schedule") {
    auto t = toy(16, 0.0);
    TrainHooks hooks;
    hooks.checkpoint_every = 10;
    std::vector<std::int64_t> at;
    hooks.on_checkpoint = [&](const Checkpoint& c) { at.push_back(c.step()); };
    int logs = 0;
    hooks.on_log = [&](const LossRecord&) { ++logs; };
    auto cfg = short_run(30);
    cfg.log_every = 15;
    train(t.data, t.profile, t.sched, t.net, cfg, hooks);
    CHECK(at == std::vector<std::int64_t>{10, 20, 30});
    CHECK(logs == 2);
}

TEST_CASE("loss CSV") {
    std::vector<LossRecord> trace{{1, 2.0, 0.1}, {2, 1.5, 0.2}, {3, 1.0, 0.3}};
    std::ostringstream out;
    write_loss_csv(out, trace, 2);
    const auto s = out.str();
    CHECK(s.rfind("step,", 0) == 0);
    CHECK(window_mean(trace, 0, 3) == doctest::Approx(1.5));
}
