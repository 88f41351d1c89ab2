#include "kgsynth/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <ostream>
#include <sstream>

#include "kgsynth/digest.hpp"
#include "kgsynth/error.hpp"

namespace kgsynth {

void TrainConfig::validate() const {
    if (!(peak_lr > 0.0)) throw InvalidArgument("train: peak_lr must be positive");
    if (total_steps < 0) throw InvalidArgument("train: total_steps must be non-negative");
    if (warmup_steps < 0) throw InvalidArgument("train: warmup_steps must be non-negative");
    if (total_steps > 0 && warmup_steps >= total_steps)
        throw InvalidArgument("train: warmup_steps must be smaller than total_steps");
    if (batch_size < 1) throw InvalidArgument("train: batch_size must be at least 1");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
        throw InvalidArgument("train: Adam betas must lie in [0, 1)");
    if (!(eps > 0.0)) throw InvalidArgument("train: Adam eps must be positive");
    if (!(anneal >= 0.0 && anneal <= 1.0)) throw InvalidArgument("train: anneal must lie in [0, 1]");
    if (log_every < 1) throw InvalidArgument("train: log_every must be positive");
}

nlohmann::json TrainConfig::to_json() const {
    return {{"peak_lr", peak_lr}, {"warmup_steps", warmup_steps}, {"total_steps", total_steps},
            {"batch_size", batch_size}, {"beta1", beta1}, {"beta2", beta2}, {"eps", eps},
            {"anneal", anneal}, {"seed", seed}, {"log_every", log_every}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.peak_lr = j.at("peak_lr").get<double>();
    c.warmup_steps = j.at("warmup_steps").get<int>();
    c.total_steps = j.at("total_steps").get<int>();
    c.batch_size = j.at("batch_size").get<int>();
    c.beta1 = j.at("beta1").get<double>();
    c.beta2 = j.at("beta2").get<double>();
    c.eps = j.at("eps").get<double>();
    c.anneal = j.at("anneal").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.log_every = j.at("log_every").get<int>();
    c.validate();
    return c;
}

double lr_at(const TrainConfig& cfg, int step) {
    if (step < 0 || step > cfg.total_steps) throw InvalidArgument("lr_at: step out of range");
    if (step < cfg.warmup_steps) return cfg.peak_lr * step / cfg.warmup_steps;
    const int span = cfg.total_steps - cfg.warmup_steps;
    if (span == 0) return cfg.peak_lr;
    const double progress = static_cast<double>(step - cfg.warmup_steps) / span;
    return cfg.peak_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void adam_step(std::vector<double>& params, std::span<const double> grads, OptimState& opt, double lr,
               const TrainConfig& cfg, const ParamLayout* layout) {
    const std::size_t n = params.size();
    if (grads.size() != n || opt.m.size() != n || opt.v.size() != n)
        throw InvalidArgument("adam_step: shape mismatch");
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(grads[i])) {
            std::string group = layout ? layout->owner_of(i).name : "coordinate " + std::to_string(i);
            throw NumericalError("non-finite gradient in parameter group '" + group + "' at step " +
                                 std::to_string(opt.step + 1));
        }
    }
    ++opt.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(opt.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(opt.step));
    for (std::size_t i = 0; i < n; ++i) {
        opt.m[i] = cfg.beta1 * opt.m[i] + (1.0 - cfg.beta1) * grads[i];
        opt.v[i] = cfg.beta2 * opt.v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
        const double mhat = opt.m[i] / bc1;
        const double vhat = opt.v[i] / bc2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
}

// --- Checkpoints ----------------------------------------------------------

void save_checkpoint(const Checkpoint& ckpt, std::ostream& out) {
    nlohmann::json j;
    j["format"] = "kgsynth.checkpoint";
    j["version"] = Checkpoint::kFormatVersion;
    j["net"] = ckpt.net.to_json();
    j["schedule"] = ckpt.schedule.to_json();
    j["lambda"] = ckpt.schedule.lambda;
    j["train"] = ckpt.train.to_json();
    j["vocab_digest"] = ckpt.vocab_digest;
    j["step"] = ckpt.opt.step;
    // Streams are counter-based: (seed, step) is the complete rng state.
    j["rng"] = {{"seed", ckpt.train.seed}, {"step", ckpt.opt.step}};
    auto manifest = nlohmann::json::array();
    for (const auto& t : ckpt.params.layout.tensors())
        manifest.push_back({{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}});
    j["shapes"] = std::move(manifest);
    j["params"] = ckpt.params.values;
    j["adam_m"] = ckpt.opt.m;
    j["adam_v"] = ckpt.opt.v;
    out << j.dump() << '\n';
}

Checkpoint load_checkpoint(std::istream& in) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("checkpoint is not valid JSON: ") + e.what());
    }
    if (j.value("format", "") != "kgsynth.checkpoint") throw InvalidArgument("not a checkpoint file");
    if (j.at("version").get<int>() != Checkpoint::kFormatVersion)
        throw InvalidArgument("checkpoint version " + j.at("version").dump() + " is not supported (expected " +
                              std::to_string(Checkpoint::kFormatVersion) + ")");
    Checkpoint c;
    c.net = NetConfig::from_json(j.at("net"));
    c.schedule = ScheduleParams::from_json(j.at("schedule"));
    c.train = TrainConfig::from_json(j.at("train"));
    c.vocab_digest = j.at("vocab_digest").get<std::string>();
    c.params.config = c.net;
    c.params.layout = ParamLayout::for_config(c.net);
    const auto& shapes = j.at("shapes");
    const auto& tensors = c.params.layout.tensors();
    if (shapes.size() != tensors.size()) throw InvalidArgument("checkpoint shape manifest does not match config");
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        if (shapes[i].at("name").get<std::string>() != tensors[i].name ||
            shapes[i].at("rows").get<Eigen::Index>() != tensors[i].rows ||
            shapes[i].at("cols").get<Eigen::Index>() != tensors[i].cols)
            throw InvalidArgument("checkpoint tensor '" + tensors[i].name + "' has an unexpected shape");
    }
    c.params.values = j.at("params").get<std::vector<double>>();
    c.opt.m = j.at("adam_m").get<std::vector<double>>();
    c.opt.v = j.at("adam_v").get<std::vector<double>>();
    c.opt.step = j.at("step").get<std::int64_t>();
    const auto n = c.params.layout.total_size();
    if (c.params.values.size() != n || c.opt.m.size() != n || c.opt.v.size() != n)
        throw InvalidArgument("checkpoint arrays do not match the parameter layout");
    return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("io_error", "cannot write checkpoint '" + path + "'");
    save_checkpoint(ckpt, out);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("cannot read checkpoint '" + path + "'");
    return load_checkpoint(in);
}

std::string vocab_digest(const TokenVocab& vocab) { return sha256_hex(vocab.to_json().dump()); }

// --- Training loop --------------------------------------------------------

namespace {

class EpochSampler {
public:
    EpochSampler(std::size_t n, std::uint64_t seed) : n_(n), seed_(seed) {}

    std::size_t at(std::uint64_t position) {
        const std::uint64_t epoch = position / n_;
        if (epoch != epoch_ || perm_.empty()) {
            perm_.resize(n_);
            std::iota(perm_.begin(), perm_.end(), std::size_t{0});
            Rng rng = substream(seed_, Stream::Data, epoch);
            for (std::size_t i = n_; i > 1; --i) std::swap(perm_[i - 1], perm_[uniform_index(rng, i)]);
            epoch_ = epoch;
        }
        return perm_[position % n_];
    }

private:
    std::size_t n_;
    std::uint64_t seed_;
    std::uint64_t epoch_ = 0;
    std::vector<std::size_t> perm_;
};

}  // namespace

TrainResult train(std::span<const TrajectoryTensor> dataset, const MetaPathProfile& profile,
                  const ScheduleParams& schedule, const NetConfig& net, const TrainConfig& cfg,
                  const TrainHooks& hooks, std::optional<Checkpoint> resume) {
    cfg.validate();
    schedule.validate();
    net.validate();
    if (dataset.empty()) throw InvalidArgument("train: dataset is empty");
    if (static_cast<int>(profile.vocab_size()) != net.vocab_size)
        throw InvalidArgument("train: profile vocabulary size does not match the network");
    if (static_cast<int>(profile.width()) != net.film_width)
        throw InvalidArgument("train: profile feature width does not match the network");
    if (schedule.lambda != profile.lambda)
        throw InvalidArgument("train: schedule lambda differs from the profile lambda");
    for (const auto& x : dataset)
        if (x.rows() != net.max_len || x.cols() != net.vocab_size ||
            x.mask.size() != static_cast<std::size_t>(net.max_len))
            throw InvalidArgument("train: dataset tensor shape does not match the vocabulary/network");

    Checkpoint ckpt;
    if (resume) {
        if (!(resume->net == net) || !(resume->schedule == schedule))
            throw InvalidArgument("train: resume checkpoint was produced with a different configuration");
        if (resume->vocab_digest != vocab_digest(profile.vocab))
            throw InvalidArgument("train: resume checkpoint vocabulary does not match");
        ckpt = std::move(*resume);
        ckpt.train = cfg;
    } else {
        ckpt.net = net;
        ckpt.schedule = schedule;
        ckpt.train = cfg;
        ckpt.params = init_params(net, cfg.seed);
        ckpt.opt = OptimState::zeros(ckpt.params.values.size());
        ckpt.vocab_digest = vocab_digest(profile.vocab);
    }

    TrainResult result;
    EpochSampler sampler(dataset.size(), cfg.seed);
    const int end = hooks.stop_after ? std::min(*hooks.stop_after, cfg.total_steps) : cfg.total_steps;
    const double anneal_steps = cfg.anneal * cfg.total_steps;
    std::vector<TrajectoryTensor> batch(cfg.batch_size);
    std::vector<NoiseDraw> draws(cfg.batch_size);
    const auto rows = static_cast<Eigen::Index>(net.max_len);
    const auto cols = static_cast<Eigen::Index>(net.vocab_size);

    for (auto step = ckpt.opt.step; step < end; ++step) {
        for (int i = 0; i < cfg.batch_size; ++i) {
            const auto pos = static_cast<std::uint64_t>(step) * cfg.batch_size + i;
            batch[i] = dataset[sampler.at(pos)];
            Rng trng = substream(cfg.seed, Stream::Time, step, i);
            Rng nrng = substream(cfg.seed, Stream::Noise, step, i);
            draws[i].t = uniform01(trng);
            draws[i].eps.resize(rows, cols);
            for (Eigen::Index k = 0; k < draws[i].eps.size(); ++k) draws[i].eps.data()[k] = standard_normal(nrng);
        }
        LossOptions opts;
        opts.workers = cfg.workers;
        opts.weight_scale = anneal_steps > 0.0 ? std::min(1.0, static_cast<double>(step + 1) / anneal_steps) : 1.0;
        const auto lg = loss_and_gradient(ckpt.params, batch, profile.features, profile.psi_clipped, schedule,
                                          draws, opts);
        const double lr = lr_at(cfg, static_cast<int>(step + 1));
        adam_step(ckpt.params.values, lg.gradient, ckpt.opt, lr, cfg, &ckpt.params.layout);

        const LossRecord rec{ckpt.opt.step, lg.loss, lr};
        result.trace.push_back(rec);
        if (hooks.on_log && ckpt.opt.step % cfg.log_every == 0) hooks.on_log(rec);
        if (hooks.on_checkpoint && hooks.checkpoint_every > 0 && ckpt.opt.step % hooks.checkpoint_every == 0)
            hooks.on_checkpoint(ckpt);
    }
    result.checkpoint = std::move(ckpt);
    return result;
}

double window_mean(const std::vector<LossRecord>& trace, std::size_t begin, std::size_t end) {
    end = std::min(end, trace.size());
    if (begin >= end) throw InvalidArgument("window_mean: empty window");
    double s = 0.0;
    for (std::size_t i = begin; i < end; ++i) s += trace[i].loss;
    return s / static_cast<double>(end - begin);
}

void write_loss_csv(std::ostream& out, const std::vector<LossRecord>& trace, int every) {
    out << "step,loss,lr\n";
    for (const auto& r : trace) {
        if (every > 1 && r.step % every != 0) continue;
        char buf[96];
        std::snprintf(buf, sizeof buf, "%lld,%.10g,%.10g\n", static_cast<long long>(r.step), r.loss, r.lr);
        out << buf;
    }
}

}  // namespace kgsynth
