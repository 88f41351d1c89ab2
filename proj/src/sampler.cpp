#include "kgsynth/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "kgsynth/error.hpp"
#include "kgsynth/parallel.hpp"

namespace kgsynth {

void SamplerConfig::validate() const {
    if (!(step_size > 0.0 && step_size <= 1.0)) throw InvalidArgument("sampler: step_size must lie in (0, 1]");
    if (n_trajectories < 0) throw InvalidArgument("sampler: n_trajectories must be non-negative");
}

int reverse_step_count(double step_size) {
    if (!(step_size > 0.0 && step_size <= 1.0)) throw InvalidArgument("sampler: step_size must lie in (0, 1]");
    // Guard against 1/0.001 landing a hair above 1000.
    return static_cast<int>(std::ceil(1.0 / step_size - 1e-9));
}

Matrix reverse_step(const Matrix& x, std::span<const std::uint8_t> mask, double t, double dt,
                    const EpsPredictor& predictor, std::span<const double> psi, const ScheduleParams& schedule,
                    const SamplerConfig& cfg, Rng& rng) {
    const Eigen::Index rows = x.rows(), cols = x.cols();
    if (static_cast<Eigen::Index>(psi.size()) != cols || static_cast<Eigen::Index>(mask.size()) != rows)
        throw InvalidArgument("reverse_step: shape mismatch");
    const Matrix eps_hat = predictor(x, mask, t);

    std::vector<double> beta(cols), inv_sigma(cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
        beta[j] = beta_v(schedule, t, psi[j]);
        const double var = 1.0 - alpha_v(schedule, t, psi[j]);
        inv_sigma[j] = var > 0.0 ? 1.0 / std::sqrt(var) : 0.0;
    }

    Matrix out = x;
    for (Eigen::Index i = 0; i < rows; ++i) {
        if (!mask[i]) {
            out.row(i).setZero();
            continue;
        }
        for (Eigen::Index j = 0; j < cols; ++j) {
            const double score = -eps_hat(i, j) * inv_sigma[j];
            double drift = beta[j] * score;
            if (cfg.drift == DriftMode::VpConsistent) drift += 0.5 * beta[j] * x(i, j);
            double v = x(i, j) + drift * dt;
            if (cfg.noise_on) v += std::sqrt(beta[j] * dt) * standard_normal(rng);
            out(i, j) = v;
        }
    }
    return out;
}

Matrix integrate_reverse(const EpsPredictor& predictor, std::span<const std::uint8_t> mask, Eigen::Index rows,
                         Eigen::Index cols, std::span<const double> psi, const ScheduleParams& schedule,
                         const SamplerConfig& cfg, Rng& rng, const std::function<void(double)>& on_eval) {
    const int n = reverse_step_count(cfg.step_size);
    Matrix x = Matrix::Zero(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        if (mask[i])
            for (Eigen::Index j = 0; j < cols; ++j) x(i, j) = standard_normal(rng);

    for (int k = 0; k < n; ++k) {
        const double t = 1.0 - k * cfg.step_size;
        if (t <= 0.0) break;
        const double dt = std::min(cfg.step_size, t);
        if (on_eval) on_eval(t);
        x = reverse_step(x, mask, t, dt, predictor, psi, schedule, cfg, rng);
        if (!x.allFinite())
            throw NumericalError("reverse integration produced a non-finite value at step " + std::to_string(k) +
                                 " (t = " + std::to_string(t) + ")");
    }
    return x;
}

namespace {

// Index of the maximum within a block; ties go to the lowest token id.
std::pair<TokenId, bool> block_argmax(const Matrix& x, Eigen::Index row, std::span<const TokenId> block) {
    TokenId best = block[0];
    double top = x(row, best);
    bool unique = true;
    for (std::size_t k = 1; k < block.size(); ++k) {
        const double v = x(row, block[k]);
        if (v > top) {
            top = v;
            best = block[k];
            unique = true;
        } else if (v == top) {
            unique = false;
            best = std::min(best, block[k]);
        }
    }
    return {best, unique};
}

}  // namespace

std::vector<DecodedRow> decode(const Matrix& x0_hat, std::span<const std::uint8_t> mask, const TokenVocab& vocab) {
    if (x0_hat.cols() != static_cast<Eigen::Index>(vocab.size()))
        throw InvalidArgument("decode: matrix width does not match the vocabulary");
    if (static_cast<Eigen::Index>(mask.size()) != x0_hat.rows()) throw InvalidArgument("decode: mask length mismatch");
    std::vector<DecodedRow> out;
    for (Eigen::Index i = 0; i < x0_hat.rows(); ++i) {
        if (!mask[i]) continue;
        const auto [lab, u1] = block_argmax(x0_hat, i, vocab.block(Field::Lab));
        const auto [med, u2] = block_argmax(x0_hat, i, vocab.block(Field::Med));
        const auto [ae, u3] = block_argmax(x0_hat, i, vocab.block(Field::AEFlag));
        out.push_back({lab, med, ae == vocab.ae_present(), u1 && u2 && u3});
    }
    return out;
}

std::vector<double> sample_timestamps(const EmpiricalGapDistribution& gaps, int length, Rng& rng) {
    if (length < 1) throw InvalidArgument("trajectory length must be at least 1");
    if (gaps.gaps.empty()) throw InvalidArgument("gap distribution is empty");
    std::vector<double> t(length, 0.0);
    for (int i = 1; i < length; ++i)
        t[i] = t[i - 1] + std::max(kMinGap, gaps.gaps[uniform_index(rng, gaps.gaps.size())]);
    return t;
}

std::vector<SyntheticTrajectory> sample_trajectories(const Checkpoint& checkpoint, const MetaPathProfile& profile,
                                                     const EmpiricalGapDistribution& gaps,
                                                     const EmpiricalLengthDistribution& lengths,
                                                     const SamplerConfig& cfg, SampleStats* stats) {
    cfg.validate();
    const NetConfig& net = checkpoint.net;
    if (checkpoint.vocab_digest != vocab_digest(profile.vocab))
        throw InvalidArgument("checkpoint was trained on a different vocabulary than the profile");
    if (static_cast<std::size_t>(net.vocab_size) != profile.vocab_size() ||
        static_cast<std::size_t>(net.film_width) != profile.width())
        throw InvalidArgument("checkpoint network shape does not match the profile");
    if (lengths.lengths.empty()) throw InvalidArgument("length distribution is empty");

    const Denoiser model(checkpoint.params, profile.features);
    const EpsPredictor predictor = [&model](const Matrix& x, std::span<const std::uint8_t> m, double t) {
        return model.predict(x, m, t);
    };
    const auto L = static_cast<Eigen::Index>(net.max_len);
    const auto V = static_cast<Eigen::Index>(net.vocab_size);

    std::vector<SyntheticTrajectory> out(cfg.n_trajectories);
    std::vector<SampleStats> per(cfg.n_trajectories);
    parallel_for(static_cast<std::size_t>(cfg.n_trajectories), cfg.workers, [&](std::size_t k) {
        Rng len_rng = substream(cfg.seed, Stream::Length, k);
        const int length =
            std::min<int>(lengths.lengths[uniform_index(len_rng, lengths.lengths.size())], static_cast<int>(L));
        std::vector<std::uint8_t> mask(L, 0);
        std::fill(mask.begin(), mask.begin() + length, 1);

        Rng rng = substream(cfg.seed, Stream::Sample, k);
        const Matrix x0 = integrate_reverse(predictor, mask, L, V, profile.psi_clipped, checkpoint.schedule, cfg, rng);
        const auto rows = decode(x0, mask, profile.vocab);

        Rng ts_rng = substream(cfg.seed, Stream::Timestamp, k);
        const auto times = sample_timestamps(gaps, length, ts_rng);

        SyntheticTrajectory& traj = out[k];
        traj.id = static_cast<std::int64_t>(k);
        for (int i = 0; i < length; ++i) {
            traj.events.push_back({times[i], rows[i].lab, rows[i].med, rows[i].ae});
            per[k].rows += 1;
            per[k].unique_rows += rows[i].unique ? 1 : 0;
        }
        validate_trajectory(traj, profile.vocab);
    });
    if (stats) {
        *stats = {};
        for (const auto& s : per) {
            stats->rows += s.rows;
            stats->unique_rows += s.unique_rows;
        }
    }
    return out;
}

}  // namespace kgsynth
