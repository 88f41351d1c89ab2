#include "kgsynth/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "kgsynth/error.hpp"
#include "kgsynth/parallel.hpp"
#include "kgsynth/rng.hpp"

namespace kgsynth {

// --- Feature views ---------------------------------------------------------

Matrix count_features(std::span<const Trajectory> set, const TokenVocab& vocab) {
    Matrix f = Matrix::Zero(static_cast<Eigen::Index>(set.size()), static_cast<Eigen::Index>(vocab.size()));
    for (std::size_t r = 0; r < set.size(); ++r) {
        const auto row = static_cast<Eigen::Index>(r);
        for (const auto& e : set[r].events) {
            if (e.lab) f(row, *e.lab) += 1.0;
            if (e.med) f(row, *e.med) += 1.0;
            f(row, e.ae ? vocab.ae_present() : vocab.ae_absent()) += 1.0;
        }
    }
    return f;
}

Matrix gap_features(std::span<const Trajectory> set) {
    std::vector<double> gaps;
    for (const auto& t : set)
        for (std::size_t i = 1; i < t.events.size(); ++i) gaps.push_back(t.events[i].time - t.events[i - 1].time);
    Matrix f(static_cast<Eigen::Index>(gaps.size()), 1);
    for (std::size_t i = 0; i < gaps.size(); ++i) f(static_cast<Eigen::Index>(i), 0) = gaps[i];
    return f;
}

// --- MMD -------------------------------------------------------------------

namespace {

double sq_dist(const Matrix& A, Eigen::Index i, const Matrix& B, Eigen::Index j) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < A.cols(); ++k) {
        const double d = A(i, k) - B(j, k);
        s += d * d;
    }
    return s;
}

Matrix stack_rows(const Matrix& A, const Matrix& B) {
    if (A.cols() != B.cols()) throw InvalidArgument("feature sets have different dimensions");
    Matrix P(A.rows() + B.rows(), A.cols());
    P.topRows(A.rows()) = A;
    P.bottomRows(B.rows()) = B;
    return P;
}

double median_of(std::vector<double>& v) {
    const std::size_t n = v.size();
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(v.begin(), mid, v.end());
    const double upper = *mid;
    if (n % 2 == 1) return upper;
    const double lower = *std::max_element(v.begin(), mid);
    return 0.5 * (lower + upper);
}

// MMD^2_u from a pooled kernel matrix, with group membership given by `in_x`.
double mmd2_from_kernel(const Matrix& K, const std::vector<std::uint8_t>& in_x) {
    const Eigen::Index N = K.rows();
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    double n = 0.0;
    for (Eigen::Index i = 0; i < N; ++i) n += in_x[i];
    const double m = static_cast<double>(N) - n;
    for (Eigen::Index i = 0; i < N; ++i) {
        for (Eigen::Index j = i + 1; j < N; ++j) {
            const double k = K(i, j);
            if (in_x[i] && in_x[j]) sxx += k;
            else if (!in_x[i] && !in_x[j]) syy += k;
            else sxy += k;
        }
    }
    return static_cast<double>(2.0L * sxx / (n * (n - 1.0)) + 2.0L * syy / (m * (m - 1.0)) - 2.0L * sxy / (n * m));
}

}  // namespace

double median_heuristic_bandwidth(const Matrix& points) {
    std::vector<double> d;
    d.reserve(static_cast<std::size_t>(points.rows() * (points.rows() - 1) / 2));
    for (Eigen::Index i = 0; i < points.rows(); ++i)
        for (Eigen::Index j = i + 1; j < points.rows(); ++j) {
            const double s = sq_dist(points, i, points, j);
            if (s > 0.0) d.push_back(std::sqrt(s));
        }
    if (d.empty()) throw InvalidArgument("median heuristic: all points are identical");
    return median_of(d);
}

double mmd2_unbiased(const Matrix& X, const Matrix& Y, double sigma) {
    if (X.rows() < 2 || Y.rows() < 2) throw InvalidArgument("MMD needs at least two samples on each side");
    if (!(sigma > 0.0)) throw InvalidArgument("MMD bandwidth must be positive");
    if (X.cols() != Y.cols()) throw InvalidArgument("feature sets have different dimensions");
    const double n = static_cast<double>(X.rows()), m = static_cast<double>(Y.rows());
    // Extended-precision sums keep the final cancellation accurate for small MMD values.
    long double sxx = 0.0L, syy = 0.0L, sxy = 0.0L;
    for (Eigen::Index i = 0; i < X.rows(); ++i)
        for (Eigen::Index j = i + 1; j < X.rows(); ++j) sxx += gaussian_kernel(sq_dist(X, i, X, j), sigma);
    for (Eigen::Index i = 0; i < Y.rows(); ++i)
        for (Eigen::Index j = i + 1; j < Y.rows(); ++j) syy += gaussian_kernel(sq_dist(Y, i, Y, j), sigma);
    for (Eigen::Index i = 0; i < X.rows(); ++i)
        for (Eigen::Index j = 0; j < Y.rows(); ++j) sxy += gaussian_kernel(sq_dist(X, i, Y, j), sigma);
    return static_cast<double>(2.0L * sxx / (n * (n - 1.0)) + 2.0L * syy / (m * (m - 1.0)) - 2.0L * sxy / (n * m));
}

MmdResult mmd_with_median_bandwidth(const Matrix& real, const Matrix& synth) {
    MmdResult r;
    r.sigma = median_heuristic_bandwidth(stack_rows(real, synth));
    r.value = mmd2_unbiased(real, synth, r.sigma);
    return r;
}

MmdResult cat_mmd(std::span<const Trajectory> real, std::span<const Trajectory> synth, const TokenVocab& vocab) {
    return mmd_with_median_bandwidth(count_features(real, vocab), count_features(synth, vocab));
}

MmdResult cont_mmd(std::span<const Trajectory> real, std::span<const Trajectory> synth) {
    return mmd_with_median_bandwidth(gap_features(real), gap_features(synth));
}

std::vector<double> mmd_permutation_null(const Matrix& X, const Matrix& Y, double sigma, int permutations,
                                         std::uint64_t seed) {
    if (X.rows() < 2 || Y.rows() < 2) throw InvalidArgument("MMD needs at least two samples on each side");
    if (!(sigma > 0.0)) throw InvalidArgument("MMD bandwidth must be positive");
    const Matrix P = stack_rows(X, Y);
    const Eigen::Index N = P.rows();
    Matrix K(N, N);
    for (Eigen::Index i = 0; i < N; ++i) {
        K(i, i) = 1.0;
        for (Eigen::Index j = i + 1; j < N; ++j) K(i, j) = K(j, i) = gaussian_kernel(sq_dist(P, i, P, j), sigma);
    }
    std::vector<std::uint8_t> in_x(N, 0);
    std::vector<double> out;
    out.reserve(permutations);
    Rng rng = substream(seed, Stream::Eval, 0xA11u);
    std::vector<Eigen::Index> perm(N);
    for (int p = 0; p < permutations; ++p) {
        std::iota(perm.begin(), perm.end(), 0);
        for (Eigen::Index i = N - 1; i > 0; --i)
            std::swap(perm[i], perm[uniform_index(rng, static_cast<std::uint64_t>(i + 1))]);
        std::fill(in_x.begin(), in_x.end(), 0);
        for (Eigen::Index i = 0; i < X.rows(); ++i) in_x[perm[i]] = 1;
        out.push_back(mmd2_from_kernel(K, in_x));
    }
    return out;
}

double quantile(std::vector<double> values, double q) {
    if (values.empty()) throw InvalidArgument("quantile of an empty set");
    if (!(q >= 0.0 && q <= 1.0)) throw InvalidArgument("quantile level must lie in [0, 1]");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

// --- Ranks and AUROC -------------------------------------------------------

std::vector<double> average_ranks(std::span<const double> values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    if (scores.size() != labels.size()) throw InvalidArgument("auroc: scores and labels differ in length");
    for (double s : scores)
        if (std::isnan(s)) throw InvalidArgument("auroc: NaN score");
    const auto ranks = average_ranks(scores);
    double n_pos = 0.0, rank_sum = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i]) {
            n_pos += 1.0;
            rank_sum += ranks[i];
        }
    const double n_neg = static_cast<double>(labels.size()) - n_pos;
    if (n_pos == 0.0 || n_neg == 0.0) throw InvalidArgument("auroc: both classes must be present");
    return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

double spearman(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2) throw InvalidArgument("spearman: need two equal-length samples of size >= 2");
    const auto ra = average_ranks(a), rb = average_ranks(b);
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
    const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

// --- Membership inference --------------------------------------------------

ProductKde::ProductKde(const Matrix& points) : points_(points) {
    if (points.rows() < 1) throw InvalidArgument("KDE needs at least one point");
    bool any_spread = false;
    const double half_log_2pi = 0.5 * std::log(2.0 * M_PI);
    h_.resize(static_cast<std::size_t>(points.cols()));
    log_norm_ = std::log(static_cast<double>(points.rows()));
    std::vector<double> d;
    for (Eigen::Index c = 0; c < points.cols(); ++c) {
        d.clear();
        for (Eigen::Index i = 0; i < points.rows(); ++i)
            for (Eigen::Index j = i + 1; j < points.rows(); ++j) {
                const double v = std::abs(points(i, c) - points(j, c));
                if (v > 0.0) d.push_back(v);
            }
        h_[c] = d.empty() ? 1.0 : median_of(d);
        any_spread = any_spread || !d.empty();
        log_norm_ += std::log(h_[c]) + half_log_2pi;
    }
    if (points.rows() > 1 && !any_spread) throw InvalidArgument("degenerate KDE: all points are identical");
}

double ProductKde::log_density(const Eigen::Ref<const RowVector>& x) const {
    if (x.size() != points_.cols()) throw InvalidArgument("KDE query has the wrong dimension");
    std::vector<double> e(static_cast<std::size_t>(points_.rows()));
    double top = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < points_.rows(); ++i) {
        double s = 0.0;
        for (Eigen::Index c = 0; c < points_.cols(); ++c) {
            const double z = (x(c) - points_(i, c)) / h_[c];
            s += z * z;
        }
        e[i] = -0.5 * s;
        top = std::max(top, e[i]);
    }
    double acc = 0.0;
    for (double v : e) acc += std::exp(v - top);
    return top + std::log(acc) - log_norm_;
}

std::vector<double> domias_scores(const Matrix& synth, const Matrix& reference, const Matrix& queries) {
    const ProductKde ps(synth), pr(reference);
    std::vector<double> out(static_cast<std::size_t>(queries.rows()));
    for (Eigen::Index i = 0; i < queries.rows(); ++i)
        out[i] = ps.log_density(queries.row(i)) - pr.log_density(queries.row(i));
    return out;
}

namespace {

std::vector<std::uint8_t> member_labels(Eigen::Index members, Eigen::Index nonmembers) {
    std::vector<std::uint8_t> y(members + nonmembers, 0);
    std::fill(y.begin(), y.begin() + members, 1);
    return y;
}

}  // namespace

double domias_auroc(const Matrix& synth, const Matrix& members, const Matrix& nonmembers, const Matrix& reference) {
    if (members.rows() != nonmembers.rows() || members.rows() < 10)
        throw InvalidArgument("DOMIAS needs equally many members and nonmembers, at least 10 each");
    const auto scores = domias_scores(synth, reference, stack_rows(members, nonmembers));
    return auroc(scores, member_labels(members.rows(), nonmembers.rows()));
}

std::vector<double> nearest_synth_scores(const Matrix& synth, const Matrix& queries) {
    if (synth.rows() < 1) throw InvalidArgument("no synthetic records to attack with");
    std::vector<double> out(static_cast<std::size_t>(queries.rows()));
    for (Eigen::Index i = 0; i < queries.rows(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < synth.rows(); ++j) best = std::min(best, sq_dist(queries, i, synth, j));
        out[i] = -std::sqrt(best);
    }
    return out;
}

ShadowAttack shadow_threshold_attack(const Matrix& synth, const Matrix& members, const Matrix& nonmembers,
                                     const Matrix& shadow) {
    if (shadow.rows() < 1) throw InvalidArgument("shadow set is empty");
    ShadowAttack a;
    a.threshold = quantile(nearest_synth_scores(synth, shadow), 0.95);
    const auto sm = nearest_synth_scores(synth, members);
    const auto sn = nearest_synth_scores(synth, nonmembers);
    std::vector<double> scores = sm;
    scores.insert(scores.end(), sn.begin(), sn.end());
    a.auroc = auroc(scores, member_labels(members.rows(), nonmembers.rows()));
    auto rate = [&](const std::vector<double>& s) {
        if (s.empty()) return 0.0;
        return static_cast<double>(std::count_if(s.begin(), s.end(), [&](double v) { return v > a.threshold; })) /
               static_cast<double>(s.size());
    };
    a.member_hit_rate = rate(sm);
    a.nonmember_hit_rate = rate(sn);
    return a;
}

// --- TSTR ------------------------------------------------------------------

namespace {

Trajectory most_recent(const Trajectory& t, int max_len) {
    if (static_cast<int>(t.events.size()) <= max_len) return t;
    Trajectory out{t.id, {}};
    out.events.assign(t.events.end() - max_len, t.events.end());
    return out;
}

struct Sequence {
    std::vector<std::array<int, 2>> steps;  // classifier input index per field, -1 if absent
    double y = 0.0;
};

class InputIndex {
public:
    explicit InputIndex(const TokenVocab& vocab) : pos_(vocab.size(), -1) {
        int k = 0;
        for (Field f : {Field::Lab, Field::Med})
            for (TokenId id : vocab.block(f)) pos_[id] = k++;
        width_ = k;
    }
    int width() const { return width_; }
    int operator()(std::optional<TokenId> id) const { return id ? pos_.at(*id) : -1; }

private:
    std::vector<int> pos_;
    int width_ = 0;
};

std::vector<Sequence> prepare(std::span<const Trajectory> set, const InputIndex& index, const LabelFn& label,
                              int max_len) {
    std::vector<Sequence> out;
    out.reserve(set.size());
    for (const auto& t : set) {
        const Trajectory w = most_recent(t, max_len);
        Sequence s;
        s.y = label(w) ? 1.0 : 0.0;
        for (const auto& e : w.events) s.steps.push_back({index(e.lab), index(e.med)});
        out.push_back(std::move(s));
    }
    return out;
}

// Flat parameter vector plus Adam moments.
struct Adam {
    std::vector<double> m, v;
    long t = 0;

    explicit Adam(std::size_t n) : m(n, 0.0), v(n, 0.0) {}

    void step(std::vector<double>& p, const std::vector<double>& g, double lr) {
        constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        ++t;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
        }
    }
};

double sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

// Single-layer tanh recurrence read out from the last hidden state, or a
// logistic model on token counts. Both expose logit() and add_gradient().
class Scorer {
public:
    Scorer(ClassifierKind kind, int inputs, int hidden, Rng& rng) : kind_(kind), D_(inputs), H_(hidden) {
        if (kind_ == ClassifierKind::Recurrent) {
            params_.resize(static_cast<std::size_t>(H_ * D_ + H_ * H_ + H_ + H_ + 1));
            const double a = 1.0 / std::sqrt(static_cast<double>(H_));
            for (std::size_t i = 0; i < static_cast<std::size_t>(H_ * D_ + H_ * H_ + H_ + H_); ++i)
                params_[i] = a * (2.0 * uniform01(rng) - 1.0);
            std::fill(params_.begin() + H_ * D_ + H_ * H_, params_.begin() + H_ * D_ + H_ * H_ + H_, 0.0);
        } else {
            params_.assign(static_cast<std::size_t>(D_ + 1), 0.0);
        }
    }

    std::vector<double>& params() { return params_; }

    double logit(const Sequence& s) const {
        if (kind_ == ClassifierKind::Logistic) {
            double z = params_[D_];
            for (const auto& st : s.steps)
                for (int k : st)
                    if (k >= 0) z += params_[k];
            return z;
        }
        std::vector<double> h(H_, 0.0), a(H_);
        for (const auto& st : s.steps) h = cell(st, h, a);
        return readout(h);
    }

    // Adds d(weight * bce)/d(params) to g and returns the loss term.
    double add_gradient(const Sequence& s, double weight, std::vector<double>& g) const {
        if (kind_ == ClassifierKind::Logistic) {
            const double z = logit(s);
            const double dz = weight * (sigmoid(z) - s.y);
            for (const auto& st : s.steps)
                for (int k : st)
                    if (k >= 0) g[k] += dz;
            g[D_] += dz;
            return weight * bce(z, s.y);
        }
        const std::size_t T = s.steps.size();
        std::vector<std::vector<double>> hs(T + 1, std::vector<double>(H_, 0.0));
        std::vector<double> a(H_);
        for (std::size_t t = 0; t < T; ++t) hs[t + 1] = cell(s.steps[t], hs[t], a);
        const double z = readout(hs[T]);
        const double dz = weight * (sigmoid(z) - s.y);

        const std::size_t oW = 0, oU = H_ * D_, ob = oU + H_ * H_, ow = ob + H_, oc = ow + H_;
        std::vector<double> dh(H_), da(H_);
        for (int i = 0; i < H_; ++i) {
            g[ow + i] += dz * hs[T][i];
            dh[i] = dz * params_[ow + i];
        }
        g[oc] += dz;
        for (std::size_t t = T; t-- > 0;) {
            for (int i = 0; i < H_; ++i) da[i] = dh[i] * (1.0 - hs[t + 1][i] * hs[t + 1][i]);
            for (int k : s.steps[t])
                if (k >= 0)
                    for (int i = 0; i < H_; ++i) g[oW + i * D_ + k] += da[i];
            for (int i = 0; i < H_; ++i) {
                g[ob + i] += da[i];
                for (int j = 0; j < H_; ++j) g[oU + i * H_ + j] += da[i] * hs[t][j];
            }
            for (int j = 0; j < H_; ++j) {
                double acc = 0.0;
                for (int i = 0; i < H_; ++i) acc += params_[oU + i * H_ + j] * da[i];
                dh[j] = acc;
            }
        }
        return weight * bce(z, s.y);
    }

private:
    static double bce(double z, double y) {
        // log(1 + e^z) - y z, computed stably
        return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))) - y * z;
    }

    std::vector<double> cell(const std::array<int, 2>& st, const std::vector<double>& h, std::vector<double>& a) const {
        const std::size_t oU = H_ * D_, ob = oU + H_ * H_;
        std::vector<double> out(H_);
        for (int i = 0; i < H_; ++i) {
            double s = params_[ob + i];
            for (int k : st)
                if (k >= 0) s += params_[i * D_ + k];
            for (int j = 0; j < H_; ++j) s += params_[oU + i * H_ + j] * h[j];
            a[i] = s;
            out[i] = std::tanh(s);
        }
        return out;
    }

    double readout(const std::vector<double>& h) const {
        const std::size_t ow = H_ * D_ + H_ * H_ + H_;
        double z = params_[ow + H_];
        for (int i = 0; i < H_; ++i) z += params_[ow + i] * h[i];
        return z;
    }

    ClassifierKind kind_;
    int D_;
    int H_;
    std::vector<double> params_;
};

}  // namespace

LabelFn any_ae_label(int max_len) {
    return [max_len](const Trajectory& t) {
        const std::size_t n = t.events.size();
        const std::size_t skip = n > static_cast<std::size_t>(max_len) ? n - max_len : 0;
        for (std::size_t i = skip; i < n; ++i)
            if (t.events[i].ae) return true;
        return false;
    };
}

double balanced_accuracy(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth) {
    if (predicted.size() != truth.size()) throw InvalidArgument("balanced accuracy: length mismatch");
    double tp = 0, tn = 0, pos = 0, neg = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i]) {
            pos += 1;
            tp += predicted[i] ? 1 : 0;
        } else {
            neg += 1;
            tn += predicted[i] ? 0 : 1;
        }
    }
    if (pos == 0 || neg == 0) throw InvalidArgument("balanced accuracy needs both classes in the test set");
    return 0.5 * (tp / pos + tn / neg);
}

double train_and_score(std::span<const Trajectory> train, std::span<const Trajectory> test, const TokenVocab& vocab,
                       const LabelFn& label, const ClassifierConfig& cfg) {
    if (train.empty()) throw InvalidArgument("classifier training set is empty");
    if (cfg.hidden < 1 || cfg.epochs < 0 || cfg.batch_size < 1 || cfg.max_len < 1 || !(cfg.lr > 0.0))
        throw InvalidArgument("invalid classifier configuration");
    const InputIndex index(vocab);
    const auto tr = prepare(train, index, label, cfg.max_len);
    const auto te = prepare(test, index, label, cfg.max_len);
    {
        std::vector<std::uint8_t> y(te.size());
        for (std::size_t i = 0; i < te.size(); ++i) y[i] = te[i].y > 0.5;
        if (std::count(y.begin(), y.end(), 1) == 0 || std::count(y.begin(), y.end(), 0) == 0)
            throw InvalidArgument("TSTR test fold holds a single class");
    }

    double n_pos = 0.0;
    for (const auto& s : tr) n_pos += s.y;
    const double n = static_cast<double>(tr.size());
    const double n_neg = n - n_pos;
    const double w_pos = n_pos > 0 ? n / (2.0 * n_pos) : 0.0;
    const double w_neg = n_neg > 0 ? n / (2.0 * n_neg) : 0.0;
    const double w_scale = (n_pos > 0 && n_neg > 0) ? 1.0 : 1.0 / std::max(w_pos, w_neg);

    Rng init_rng = substream(cfg.seed, Stream::Classifier, 0);
    Scorer model(cfg.kind, index.width(), cfg.hidden, init_rng);
    Adam opt(model.params().size());
    std::vector<double> grad(model.params().size());
    std::vector<std::size_t> order(tr.size());
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        Rng rng = substream(cfg.seed, Stream::Classifier, 1, static_cast<std::uint64_t>(epoch));
        for (std::size_t i = order.size(); i-- > 1;) std::swap(order[i], order[uniform_index(rng, i + 1)]);
        for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
            const std::size_t e = std::min(order.size(), b + cfg.batch_size);
            std::fill(grad.begin(), grad.end(), 0.0);
            const double inv = 1.0 / static_cast<double>(e - b);
            for (std::size_t k = b; k < e; ++k) {
                const auto& s = tr[order[k]];
                model.add_gradient(s, inv * w_scale * (s.y > 0.5 ? w_pos : w_neg), grad);
            }
            opt.step(model.params(), grad, cfg.lr);
        }
    }

    std::vector<std::uint8_t> pred(te.size()), truth(te.size());
    for (std::size_t i = 0; i < te.size(); ++i) {
        pred[i] = model.logit(te[i]) > 0.0;
        truth[i] = te[i].y > 0.5;
    }
    return balanced_accuracy(pred, truth);
}

TstrResult tstr_delta_bal_acc(std::span<const Trajectory> real_train, std::span<const Trajectory> real_test,
                              std::span<const Trajectory> synth_train, const TokenVocab& vocab, const LabelFn& label,
                              const ClassifierConfig& cfg) {
    TstrResult r;
    r.bal_acc_real = train_and_score(real_train, real_test, vocab, label, cfg);
    r.bal_acc_synth = train_and_score(synth_train, real_test, vocab, label, cfg);
    r.delta = r.bal_acc_real - r.bal_acc_synth;
    return r;
}

// --- Reports ---------------------------------------------------------------

nlohmann::json EvalReport::to_json() const {
    return {{"lambda", lambda},
            {"seed", seed},
            {"config_digest", config_digest},
            {"cat_mmd2", cat.value},
            {"cat_sigma", cat.sigma},
            {"cat_null_q95", cat_null_q95},
            {"cont_mmd2", cont.value},
            {"cont_sigma", cont.sigma},
            {"delta_bal_acc", tstr.delta},
            {"bal_acc_real", tstr.bal_acc_real},
            {"bal_acc_synth", tstr.bal_acc_synth},
            {"mia", mia},
            {"shadow_threshold", shadow_threshold},
            {"n_synth", n_synth},
            {"unique_decode_rate", unique_decode_rate}};
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
    EvalReport r;
    r.lambda = j.at("lambda").get<double>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.config_digest = j.at("config_digest").get<std::string>();
    r.cat = {j.at("cat_mmd2").get<double>(), j.at("cat_sigma").get<double>()};
    r.cat_null_q95 = j.at("cat_null_q95").get<double>();
    r.cont = {j.at("cont_mmd2").get<double>(), j.at("cont_sigma").get<double>()};
    r.tstr = {j.at("delta_bal_acc").get<double>(), j.at("bal_acc_real").get<double>(),
              j.at("bal_acc_synth").get<double>()};
    r.mia = j.at("mia").get<std::map<std::string, double>>();
    r.shadow_threshold = j.at("shadow_threshold").get<double>();
    r.n_synth = j.at("n_synth").get<std::size_t>();
    r.unique_decode_rate = j.at("unique_decode_rate").get<double>();
    return r;
}

namespace {

std::vector<Trajectory> truncate_all(std::span<const Trajectory> set, int max_len) {
    std::vector<Trajectory> out;
    out.reserve(set.size());
    for (const auto& t : set) out.push_back(most_recent(t, max_len));
    return out;
}

// k distinct indices of [0, n), ascending.
std::vector<std::size_t> choose(std::size_t n, std::size_t k, Rng& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + uniform_index(rng, n - i)]);
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

std::vector<Trajectory> pick(const std::vector<Trajectory>& set, const std::vector<std::size_t>& idx) {
    std::vector<Trajectory> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(set[i]);
    return out;
}

}  // namespace

EvalReport evaluate_synthetic(const CohortSplit& split, std::span<const Trajectory> synth, const TokenVocab& vocab,
                              const EvalConfig& cfg, std::uint64_t seed) {
    if (synth.size() < 2) throw InvalidArgument("evaluation needs at least two synthetic trajectories");
    const auto train = truncate_all(split.train, cfg.max_len);
    const auto valid = truncate_all(split.valid, cfg.max_len);
    const auto test = truncate_all(split.test, cfg.max_len);
    if (test.size() > train.size()) throw InvalidArgument("test fold is larger than the training fold");

    EvalReport r;
    r.seed = seed;
    r.n_synth = synth.size();

    const Matrix synth_counts = count_features(synth, vocab);
    const Matrix test_counts = count_features(test, vocab);
    r.cat = mmd_with_median_bandwidth(test_counts, synth_counts);
    r.cont = cont_mmd(test, synth);
    if (cfg.null_permutations > 0)
        r.cat_null_q95 =
            quantile(mmd_permutation_null(test_counts, synth_counts, r.cat.sigma, cfg.null_permutations, seed), 0.95);

    ClassifierConfig ccfg = cfg.classifier;
    ccfg.max_len = cfg.max_len;
    ccfg.seed = seed;
    r.tstr = tstr_delta_bal_acc(train, test, synth, vocab, any_ae_label(cfg.max_len), ccfg);

    Rng rng = substream(seed, Stream::Shadow);
    const auto members = pick(train, choose(train.size(), test.size(), rng));
    const std::size_t total = split.train.size() + split.valid.size() + split.test.size();
    const std::size_t n_shadow =
        std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(cfg.shadow_fraction * total)), 1, valid.size());
    const auto shadow = pick(valid, choose(valid.size(), n_shadow, rng));

    const Matrix member_counts = count_features(members, vocab);
    r.mia["domias"] = domias_auroc(synth_counts, member_counts, test_counts, count_features(valid, vocab));
    const auto sa = shadow_threshold_attack(synth_counts, member_counts, test_counts, count_features(shadow, vocab));
    r.mia["shadow"] = sa.auroc;
    r.shadow_threshold = sa.threshold;
    return r;
}

// --- Sweep -----------------------------------------------------------------

std::uint64_t replicate_seed(std::uint64_t base, int r) {
    if (r == 0) return base;
    return substream(base, Stream::Eval, static_cast<std::uint64_t>(r))();
}

EvalReport run_cell(const SweepInputs& in, double lambda, std::uint64_t seed, std::size_t workers) {
    const MetaPathProfile profile = with_lambda(in.profile, lambda);
    ScheduleParams schedule = in.schedule;
    schedule.lambda = lambda;

    std::vector<TrajectoryTensor> dataset;
    dataset.reserve(in.split.train.size());
    for (const auto& rec : in.split.train) dataset.push_back(encode_record(rec, profile.vocab, in.net.max_len));

    TrainConfig tcfg = in.train;
    tcfg.seed = seed;
    tcfg.workers = workers;
    const TrainResult trained = train(dataset, profile, schedule, in.net, tcfg);

    SamplerConfig scfg = in.sample;
    scfg.seed = seed;
    scfg.workers = workers;
    SampleStats stats;
    const auto synth = sample_trajectories(trained.checkpoint, profile, fit_gap_distribution(in.split.train),
                                           fit_length_distribution(in.split.train), scfg, &stats);

    EvalReport r = evaluate_synthetic(in.split, synth, profile.vocab, in.eval, seed);
    r.lambda = lambda;
    r.config_digest = in.config_digest;
    r.unique_decode_rate = stats.rows ? static_cast<double>(stats.unique_rows) / static_cast<double>(stats.rows) : 1.0;
    return r;
}

namespace {

double mean_of(const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

template <class F>
std::vector<double> collect(const std::vector<EvalReport>& rs, F f) {
    std::vector<double> out;
    for (const auto& r : rs) out.push_back(f(r));
    return out;
}

double mia_of(const EvalReport& r) { return r.mia.at("domias"); }

std::string fmt(double v, int precision = 4) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(precision) << v;
    return s.str();
}

}  // namespace

double SweepRow::cat_mean() const { return mean_of(collect(reports, [](auto& r) { return r.cat.value; })); }
double SweepRow::cat_sd() const { return sd_of(collect(reports, [](auto& r) { return r.cat.value; })); }
double SweepRow::mia_mean() const { return mean_of(collect(reports, mia_of)); }
double SweepRow::mia_sd() const { return sd_of(collect(reports, mia_of)); }
double SweepRow::delta_mean() const { return mean_of(collect(reports, [](auto& r) { return r.tstr.delta; })); }

nlohmann::json SweepTable::to_json() const {
    nlohmann::json rows_j = nlohmann::json::array();
    for (const auto& row : rows) {
        nlohmann::json cells = nlohmann::json::array();
        for (const auto& r : row.reports) cells.push_back(r.to_json());
        rows_j.push_back({{"lambda", row.lambda},
                          {"cat_mmd2_mean", row.cat_mean()},
                          {"cat_mmd2_sd", row.cat_sd()},
                          {"mia_auroc_mean", row.mia_mean()},
                          {"mia_auroc_sd", row.mia_sd()},
                          {"delta_bal_acc_mean", row.delta_mean()},
                          {"cells", cells}});
    }
    return {{"rows", rows_j}, {"spearman_lambda_cat_mmd2", spearman_lambda_cat},
            {"spearman_lambda_mia_auroc", spearman_lambda_mia}};
}

void SweepTable::write_text(std::ostream& out) const {
    out << std::left << std::setw(8) << "lambda" << std::setw(24) << "Cat-MMD2" << std::setw(24) << "MIA AUROC"
        << "dBalAcc\n";
    for (const auto& row : rows) {
        out << std::setw(8) << fmt(row.lambda, 2) << std::setw(24) << (fmt(row.cat_mean()) + " +/- " + fmt(row.cat_sd()))
            << std::setw(24) << (fmt(row.mia_mean()) + " +/- " + fmt(row.mia_sd())) << fmt(row.delta_mean()) << "\n";
    }
    out << "spearman(lambda, Cat-MMD2) = " << fmt(spearman_lambda_cat) << "\n";
    out << "spearman(lambda, MIA AUROC) = " << fmt(spearman_lambda_mia) << "\n";
}

void SweepTable::write_csv(std::ostream& out) const {
    out << "lambda,seed,cat_mmd2,cont_mmd2,delta_bal_acc,mia_domias,mia_shadow\n";
    out << std::setprecision(17);
    for (const auto& row : rows)
        for (const auto& r : row.reports)
            out << row.lambda << ',' << r.seed << ',' << r.cat.value << ',' << r.cont.value << ',' << r.tstr.delta
                << ',' << r.mia.at("domias") << ',' << r.mia.at("shadow") << '\n';
}

SweepTable lambda_sweep(const SweepInputs& in, const std::vector<double>& lambdas, int seeds, std::size_t workers) {
    if (lambdas.empty()) throw InvalidArgument("sweep needs at least one lambda");
    if (seeds < 1) throw InvalidArgument("sweep needs at least one seed");
    for (double l : lambdas)
        if (!(l >= 0.0 && l < 1.0)) throw InvalidArgument("sweep lambda " + std::to_string(l) + " outside [0, 1)");

    const std::size_t n_cells = lambdas.size() * static_cast<std::size_t>(seeds);
    std::vector<EvalReport> cells(n_cells);
    parallel_for(n_cells, workers, [&](std::size_t c) {
        const double lambda = lambdas[c / seeds];
        const auto seed = replicate_seed(in.base_seed, static_cast<int>(c % seeds));
        try {
            cells[c] = run_cell(in, lambda, seed, 1);
        } catch (const Error& e) {
            throw Error(e.code(), "sweep cell lambda=" + fmt(lambda, 3) + " seed=" + std::to_string(seed) + ": " +
                                      e.what());
        } catch (const std::exception& e) {
            throw Error("internal", "sweep cell lambda=" + fmt(lambda, 3) + " seed=" + std::to_string(seed) + ": " +
                                        e.what());
        }
    });

    SweepTable table;
    std::vector<double> cat_means, mia_means;
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
        SweepRow row;
        row.lambda = lambdas[i];
        row.reports.assign(cells.begin() + static_cast<std::ptrdiff_t>(i * seeds),
                           cells.begin() + static_cast<std::ptrdiff_t>((i + 1) * seeds));
        cat_means.push_back(row.cat_mean());
        mia_means.push_back(row.mia_mean());
        table.rows.push_back(std::move(row));
    }
    if (lambdas.size() >= 2) {
        table.spearman_lambda_cat = spearman(lambdas, cat_means);
        table.spearman_lambda_mia = spearman(lambdas, mia_means);
    }
    return table;
}

}  // namespace kgsynth
