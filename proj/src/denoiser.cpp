#include "kgsynth/denoiser.hpp"

#include <cmath>

#include "kgsynth/error.hpp"
#include "kgsynth/parallel.hpp"

namespace kgsynth {

// --- Config and layout ----------------------------------------------------

void NetConfig::validate() const {
    if (vocab_size < 1) throw InvalidArgument("net: vocab_size must be positive");
    if (max_len < 1) throw InvalidArgument("net: max_len must be positive");
    if (hidden < 2 || hidden % 2 != 0) throw InvalidArgument("net: hidden width must be even and >= 2");
    if (blocks < 1) throw InvalidArgument("net: at least one block is required");
    if (heads < 1 || hidden % heads != 0) throw InvalidArgument("net: hidden width must be divisible by heads");
    if (film_width < 1) throw InvalidArgument("net: film_width must be positive");
    if (kernel < 1 || kernel % 2 == 0) throw InvalidArgument("net: stem kernel must be odd");
}

nlohmann::json NetConfig::to_json() const {
    return {{"vocab_size", vocab_size}, {"max_len", max_len}, {"hidden", hidden},
            {"blocks", blocks},         {"heads", heads},     {"film_width", film_width},
            {"kernel", kernel},         {"precision", precision == Precision::Float64 ? 64 : 32}};
}

NetConfig NetConfig::from_json(const nlohmann::json& j) {
    NetConfig c;
    c.vocab_size = j.at("vocab_size").get<int>();
    c.max_len = j.at("max_len").get<int>();
    c.hidden = j.at("hidden").get<int>();
    c.blocks = j.at("blocks").get<int>();
    c.heads = j.at("heads").get<int>();
    c.film_width = j.at("film_width").get<int>();
    c.kernel = j.at("kernel").get<int>();
    c.precision = j.at("precision").get<int>() == 32 ? Precision::Float32 : Precision::Float64;
    c.validate();
    return c;
}

std::size_t parameter_count(const NetConfig& c) {
    const std::size_t v = c.vocab_size, h = c.hidden, b = c.blocks, d = c.film_width, k = c.kernel;
    return 3 * v * h + 2 * v + (k + 1) * h * h + 2 * h + b * (6 * h * h + 2 * h * d + 5 * h);
}

void ParamLayout::add(std::string name, Eigen::Index rows, Eigen::Index cols) {
    tensors_.push_back({std::move(name), rows, cols, total_});
    total_ += static_cast<std::size_t>(rows * cols);
}

ParamLayout ParamLayout::for_config(const NetConfig& c) {
    c.validate();
    ParamLayout l;
    const Eigen::Index v = c.vocab_size, h = c.hidden, d = c.film_width;
    l.add("embed", v, h);
    l.add("stem.kernel", c.kernel * h, h);
    l.add("stem.bias", 1, h);
    l.add("time.weight", h, h);
    l.add("time.bias", 1, h);
    for (int b = 0; b < c.blocks; ++b) {
        const std::string p = "block" + std::to_string(b) + ".";
        l.add(p + "wq", h, h);
        l.add(p + "wk", h, h);
        l.add(p + "wv", h, h);
        l.add(p + "wo", h, h);
        l.add(p + "bo", 1, h);
        l.add(p + "film_scale.weight", d, h);
        l.add(p + "film_scale.bias", 1, h);
        l.add(p + "film_shift.weight", d, h);
        l.add(p + "film_shift.bias", 1, h);
        l.add(p + "mlp.w1", h, h);
        l.add(p + "mlp.b1", 1, h);
        l.add(p + "mlp.w2", h, h);
        l.add(p + "mlp.b2", 1, h);
    }
    l.add("out.weight", h, v);
    l.add("out.bias", 1, v);
    l.add("skip.weight", h, v);
    l.add("skip.bias", 1, v);
    return l;
}

const ParamTensor& ParamLayout::at(std::string_view name) const {
    for (const auto& t : tensors_)
        if (t.name == name) return t;
    throw NotFoundError("no parameter tensor named '" + std::string(name) + "'");
}

const ParamTensor& ParamLayout::owner_of(std::size_t i) const {
    for (const auto& t : tensors_)
        if (i >= t.offset && i < t.offset + t.size()) return t;
    throw InvalidArgument("parameter coordinate out of range");
}

Eigen::Map<Matrix> DenoiserParams::view(std::string_view name) {
    const auto& t = layout.at(name);
    return {values.data() + t.offset, t.rows, t.cols};
}

Eigen::Map<const Matrix> DenoiserParams::view(std::string_view name) const {
    const auto& t = layout.at(name);
    return {values.data() + t.offset, t.rows, t.cols};
}

DenoiserParams init_params(const NetConfig& cfg, std::uint64_t seed) {
    DenoiserParams p{cfg, ParamLayout::for_config(cfg), {}};
    p.values.assign(p.layout.total_size(), 0.0);
    Rng rng = substream(seed, Stream::Init);
    for (const auto& t : p.layout.tensors()) {
        const bool bias = t.rows == 1 || t.name.ends_with(".bias") || t.name.ends_with(".bo") ||
                          t.name.ends_with(".b1") || t.name.ends_with(".b2");
        const bool film = t.name.find("film_") != std::string::npos;
        if (bias || film) continue;
        const double bound = 1.0 / std::sqrt(static_cast<double>(t.rows));
        for (std::size_t i = 0; i < t.size(); ++i)
            p.values[t.offset + i] = bound * (2.0 * uniform01(rng) - 1.0);
    }
    return p;
}

// --- Engine ---------------------------------------------------------------

namespace {

template <class S>
using M = MatrixT<S>;
template <class S>
using RV = RowVectorT<S>;

template <class S>
S silu(S z) {
    return z / (S(1) + std::exp(-z));
}

template <class S>
S silu_grad(S z) {
    const S s = S(1) / (S(1) + std::exp(-z));
    return s * (S(1) + z * (S(1) - s));
}

struct TensorIndex {
    std::size_t embed, stem_kernel, stem_bias, time_w, time_b, out_w, out_b, skip_w, skip_b;
    struct Block {
        std::size_t wq, wk, wv, wo, bo, fs_w, fs_b, fh_w, fh_b, w1, b1, w2, b2;
    };
    std::vector<Block> blocks;

    explicit TensorIndex(const ParamLayout& l) {
        std::size_t i = 0;
        embed = i++;
        stem_kernel = i++;
        stem_bias = i++;
        time_w = i++;
        time_b = i++;
        const std::size_t per_block = 13;
        const std::size_t nb = (l.tensors().size() - 9) / per_block;
        for (std::size_t b = 0; b < nb; ++b) {
            Block k{};
            k.wq = i++, k.wk = i++, k.wv = i++, k.wo = i++, k.bo = i++;
            k.fs_w = i++, k.fs_b = i++, k.fh_w = i++, k.fh_b = i++;
            k.w1 = i++, k.b1 = i++, k.w2 = i++, k.b2 = i++;
            blocks.push_back(k);
        }
        out_w = i++;
        out_b = i++;
        skip_w = i++;
        skip_b = i++;
    }
};

template <class S>
RV<S> time_features(double t, int width) {
    const int half = width / 2;
    RV<S> tau(width);
    for (int k = 0; k < half; ++k) {
        const double freq = std::exp(-std::log(10000.0) * k / half);
        const double arg = 1000.0 * t * freq;
        tau[k] = static_cast<S>(std::sin(arg));
        tau[half + k] = static_cast<S>(std::cos(arg));
    }
    return tau;
}

template <class S>
struct BlockCache {
    M<S> h_in, q, k, u, o, a, g, shift, h1, z, y;
    std::vector<M<S>> probs;  // per head, L x L
};

template <class S>
struct Cache {
    M<S> xm, e, pre, h0, cond;
    RV<S> tau, skip_gain;
    std::vector<BlockCache<S>> blocks;
    M<S> h_final;
};

template <class S>
class Engine {
public:
    Engine(const NetConfig& cfg, const ParamLayout& layout, const S* base)
        : cfg_(cfg), layout_(layout), idx_(layout), base_(base) {}

    Eigen::Map<const M<S>> w(std::size_t i) const {
        const auto& t = layout_.tensors()[i];
        return {base_ + t.offset, t.rows, t.cols};
    }

    // cond_tokens: V x d token features log1p(Psi).
    M<S> forward(const M<S>& x, std::span<const std::uint8_t> mask, double t, const M<S>& cond_tokens,
                 Cache<S>* cache) const {
        const Eigen::Index L = cfg_.max_len, V = cfg_.vocab_size, h = cfg_.hidden;
        if (x.rows() != L || x.cols() != V)
            throw InvalidArgument("denoiser input shape mismatch");
        if (static_cast<Eigen::Index>(mask.size()) != L) throw InvalidArgument("denoiser mask length mismatch");
        if (cond_tokens.rows() != V || cond_tokens.cols() != cfg_.film_width)
            throw InvalidArgument("denoiser conditioning shape mismatch");
        if (!(t >= 0.0 && t <= 1.0)) throw InvalidArgument("denoiser time outside [0, 1]");

        M<S> xm = x;
        for (Eigen::Index l = 0; l < L; ++l)
            if (!mask[l]) xm.row(l).setZero();
        if (!xm.allFinite()) throw NumericalError("denoiser input is not finite");

        const RV<S> tau = time_features<S>(t, static_cast<int>(h));
        M<S> e = xm * w(idx_.embed);

        M<S> pre = M<S>::Zero(L, h);
        const auto kern = w(idx_.stem_kernel);
        const int half = cfg_.kernel / 2;
        for (int j = 0; j < cfg_.kernel; ++j) {
            const int o = j - half;
            const Eigen::Index n = L - std::abs(o);
            if (n <= 0) continue;
            const Eigen::Index lo = std::max(0, -o);
            pre.middleRows(lo, n).noalias() += e.middleRows(lo + o, n) * kern.middleRows(j * h, h);
        }
        RV<S> row_bias = w(idx_.stem_bias) + tau * w(idx_.time_w) + w(idx_.time_b);
        pre.rowwise() += row_bias;
        M<S> hcur = pre.unaryExpr([](S z) { return silu(z); });

        const M<S> cond = xm * cond_tokens;  // L x d
        if (cache) {
            cache->xm = xm;
            cache->e = std::move(e);
            cache->pre = pre;
            cache->h0 = hcur;
            cache->cond = cond;
            cache->tau = tau;
            cache->blocks.assign(idx_.blocks.size(), {});
        }

        for (std::size_t b = 0; b < idx_.blocks.size(); ++b)
            hcur = block_forward(b, hcur, mask, cond, cache ? &cache->blocks[b] : nullptr);

        const RV<S> gain = tau * w(idx_.skip_w) + w(idx_.skip_b);
        M<S> out = hcur * w(idx_.out_w);
        out.rowwise() += RV<S>(w(idx_.out_b));
        out.array() += xm.array().rowwise() * gain.array();
        if (cache) {
            cache->h_final = std::move(hcur);
            cache->skip_gain = gain;
        }
        return out;
    }

    // Accumulates d(out) into grad (flat, layout order).
    void backward(const M<S>& dout, std::span<const std::uint8_t> mask, const M<S>& cond_tokens,
                  const Cache<S>& c, std::vector<S>& grad) const {
        (void)cond_tokens;
        const Eigen::Index L = cfg_.max_len, h = cfg_.hidden;
        auto g = [&](std::size_t i) {
            const auto& t = layout_.tensors()[i];
            return Eigen::Map<M<S>>(grad.data() + t.offset, t.rows, t.cols);
        };

        g(idx_.out_w).noalias() += c.h_final.transpose() * dout;
        g(idx_.out_b) += dout.colwise().sum();
        const RV<S> dgain = (c.xm.array() * dout.array()).colwise().sum().matrix();
        g(idx_.skip_w).noalias() += c.tau.transpose() * dgain;
        g(idx_.skip_b) += dgain;

        M<S> dh = dout * w(idx_.out_w).transpose();
        for (std::size_t b = idx_.blocks.size(); b-- > 0;)
            dh = block_backward(b, dh, mask, c.cond, c.blocks[b], grad);

        M<S> dpre = dh.array() * c.pre.unaryExpr([](S z) { return silu_grad(z); }).array();
        const RV<S> drow = dpre.colwise().sum();
        g(idx_.stem_bias) += drow;
        g(idx_.time_b) += drow;
        g(idx_.time_w).noalias() += c.tau.transpose() * drow;

        M<S> de = M<S>::Zero(L, h);
        const auto kern = w(idx_.stem_kernel);
        auto gk = g(idx_.stem_kernel);
        const int half = cfg_.kernel / 2;
        for (int j = 0; j < cfg_.kernel; ++j) {
            const int o = j - half;
            const Eigen::Index n = L - std::abs(o);
            if (n <= 0) continue;
            const Eigen::Index lo = std::max(0, -o);
            gk.middleRows(j * h, h).noalias() += c.e.middleRows(lo + o, n).transpose() * dpre.middleRows(lo, n);
            de.middleRows(lo + o, n).noalias() += dpre.middleRows(lo, n) * kern.middleRows(j * h, h).transpose();
        }
        g(idx_.embed).noalias() += c.xm.transpose() * de;
    }

private:
    M<S> block_forward(std::size_t b, const M<S>& hin, std::span<const std::uint8_t> mask, const M<S>& cond,
                       BlockCache<S>* bc) const {
        const auto& k = idx_.blocks[b];
        const Eigen::Index L = cfg_.max_len, h = cfg_.hidden;
        const Eigen::Index dh = h / cfg_.heads;
        const S scale = S(1) / std::sqrt(static_cast<S>(dh));

        M<S> q = hin * w(k.wq);
        M<S> kk = hin * w(k.wk);
        M<S> u = hin * w(k.wv);
        M<S> o = M<S>::Zero(L, h);
        std::vector<M<S>> probs;
        bool any_key = false;
        for (auto m : mask) any_key = any_key || m;

        for (int a = 0; a < cfg_.heads; ++a) {
            M<S> p = M<S>::Zero(L, L);
            if (any_key) {
                p.noalias() = q.middleCols(a * dh, dh) * kk.middleCols(a * dh, dh).transpose();
                p *= scale;
                for (Eigen::Index i = 0; i < L; ++i) {
                    S mx = -std::numeric_limits<S>::infinity();
                    for (Eigen::Index j = 0; j < L; ++j)
                        if (mask[j]) mx = std::max(mx, p(i, j));
                    S sum = 0;
                    for (Eigen::Index j = 0; j < L; ++j) {
                        p(i, j) = mask[j] ? std::exp(p(i, j) - mx) : S(0);
                        sum += p(i, j);
                    }
                    p.row(i) /= sum;
                }
                o.middleCols(a * dh, dh).noalias() = p * u.middleCols(a * dh, dh);
            }
            if (bc) probs.push_back(std::move(p));
        }

        M<S> att = o * w(k.wo);
        att.rowwise() += RV<S>(w(k.bo));
        M<S> gamma = cond * w(k.fs_w);
        gamma.rowwise() += RV<S>(w(k.fs_b));
        gamma.array() += S(1);
        M<S> shift = cond * w(k.fh_w);
        shift.rowwise() += RV<S>(w(k.fh_b));

        M<S> h1 = hin + (gamma.array() * att.array()).matrix() + shift;
        M<S> z = h1 * w(k.w1);
        z.rowwise() += RV<S>(w(k.b1));
        M<S> y = z.unaryExpr([](S v) { return silu(v); });
        M<S> out = h1 + y * w(k.w2);
        out.rowwise() += RV<S>(w(k.b2));

        if (bc) {
            bc->h_in = hin;
            bc->q = std::move(q);
            bc->k = std::move(kk);
            bc->u = std::move(u);
            bc->o = std::move(o);
            bc->a = std::move(att);
            bc->g = std::move(gamma);
            bc->shift = std::move(shift);
            bc->h1 = std::move(h1);
            bc->z = std::move(z);
            bc->y = std::move(y);
            bc->probs = std::move(probs);
        }
        return out;
    }

    M<S> block_backward(std::size_t b, const M<S>& dout, std::span<const std::uint8_t> mask, const M<S>& cond,
                        const BlockCache<S>& c, std::vector<S>& grad) const {
        (void)mask;
        const auto& k = idx_.blocks[b];
        const Eigen::Index h = cfg_.hidden;
        const Eigen::Index dh = h / cfg_.heads;
        const S scale = S(1) / std::sqrt(static_cast<S>(dh));
        auto g = [&](std::size_t i) {
            const auto& t = layout_.tensors()[i];
            return Eigen::Map<M<S>>(grad.data() + t.offset, t.rows, t.cols);
        };

        // MLP residual.
        g(k.w2).noalias() += c.y.transpose() * dout;
        g(k.b2) += dout.colwise().sum();
        M<S> dz = (dout * w(k.w2).transpose()).array() * c.z.unaryExpr([](S v) { return silu_grad(v); }).array();
        g(k.w1).noalias() += c.h1.transpose() * dz;
        g(k.b1) += dz.colwise().sum();
        M<S> dh1 = dout + dz * w(k.w1).transpose();

        // FiLM-modulated attention residual.
        const M<S> dgamma = dh1.array() * c.a.array();
        const M<S> da = dh1.array() * c.g.array();
        g(k.fs_w).noalias() += cond.transpose() * dgamma;
        g(k.fs_b) += dgamma.colwise().sum();
        g(k.fh_w).noalias() += cond.transpose() * dh1;
        g(k.fh_b) += dh1.colwise().sum();

        g(k.wo).noalias() += c.o.transpose() * da;
        g(k.bo) += da.colwise().sum();
        const M<S> dO = da * w(k.wo).transpose();

        M<S> dq = M<S>::Zero(c.q.rows(), h);
        M<S> dk = M<S>::Zero(c.k.rows(), h);
        M<S> du = M<S>::Zero(c.u.rows(), h);
        for (int a = 0; a < cfg_.heads; ++a) {
            const M<S>& p = c.probs[a];
            const auto dOa = dO.middleCols(a * dh, dh);
            du.middleCols(a * dh, dh).noalias() = p.transpose() * dOa;
            M<S> dp = dOa * c.u.middleCols(a * dh, dh).transpose();
            const auto rowdot = (dp.array() * p.array()).rowwise().sum();
            M<S> ds = p.array() * (dp.array().colwise() - rowdot);
            ds *= scale;
            dq.middleCols(a * dh, dh).noalias() = ds * c.k.middleCols(a * dh, dh);
            dk.middleCols(a * dh, dh).noalias() = ds.transpose() * c.q.middleCols(a * dh, dh);
        }
        g(k.wq).noalias() += c.h_in.transpose() * dq;
        g(k.wk).noalias() += c.h_in.transpose() * dk;
        g(k.wv).noalias() += c.h_in.transpose() * du;

        M<S> dhin = dh1;
        dhin.noalias() += dq * w(k.wq).transpose();
        dhin.noalias() += dk * w(k.wk).transpose();
        dhin.noalias() += du * w(k.wv).transpose();
        return dhin;
    }

    const NetConfig& cfg_;
    const ParamLayout& layout_;
    TensorIndex idx_;
    const S* base_;
};

Matrix film_token_features(const Matrix& psi) {
    return psi.unaryExpr([](double v) { return std::log1p(std::max(0.0, v)); });
}

}  // namespace

// --- Denoiser -------------------------------------------------------------

struct Denoiser::Impl {
    NetConfig cfg;
    ParamLayout layout;
    std::vector<double> w64;
    std::vector<float> w32;
    Matrix cond64;
    MatrixT<float> cond32;
};

Denoiser::Denoiser(const DenoiserParams& params, const Matrix& psi) : impl_(std::make_unique<Impl>()) {
    impl_->cfg = params.config;
    impl_->layout = params.layout;
    impl_->cond64 = film_token_features(psi);
    if (params.config.precision == Precision::Float32) {
        impl_->w32.assign(params.values.begin(), params.values.end());
        impl_->cond32 = impl_->cond64.cast<float>();
    } else {
        impl_->w64 = params.values;
    }
}

Denoiser::~Denoiser() = default;
Denoiser::Denoiser(Denoiser&&) noexcept = default;
Denoiser& Denoiser::operator=(Denoiser&&) noexcept = default;

const NetConfig& Denoiser::config() const { return impl_->cfg; }

Matrix Denoiser::predict(const Matrix& x_t, std::span<const std::uint8_t> mask, double t) const {
    if (impl_->cfg.precision == Precision::Float32) {
        Engine<float> eng(impl_->cfg, impl_->layout, impl_->w32.data());
        return eng.forward(x_t.cast<float>(), mask, t, impl_->cond32, nullptr).cast<double>();
    }
    Engine<double> eng(impl_->cfg, impl_->layout, impl_->w64.data());
    return eng.forward(x_t, mask, t, impl_->cond64, nullptr);
}

Matrix forward(const DenoiserParams& params, const Matrix& x_t, std::span<const std::uint8_t> mask, double t,
               const Matrix& psi) {
    return Denoiser(params, psi).predict(x_t, mask, t);
}

// --- Objective ------------------------------------------------------------

NoiseDraw draw_noise(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    NoiseDraw d;
    d.t = uniform01(rng);
    d.eps.resize(rows, cols);
    for (Eigen::Index i = 0; i < d.eps.size(); ++i) d.eps.data()[i] = standard_normal(rng);
    return d;
}

Matrix perturb(const Matrix& x0, const Matrix& eps, double t, const ScheduleParams& schedule,
               std::span<const double> psi) {
    if (static_cast<Eigen::Index>(psi.size()) != x0.cols()) throw InvalidArgument("psi length != vocabulary size");
    Matrix xt(x0.rows(), x0.cols());
    for (Eigen::Index v = 0; v < x0.cols(); ++v) {
        const double a = alpha_v(schedule, t, psi[v]);
        xt.col(v) = std::sqrt(a) * x0.col(v) + std::sqrt(1.0 - a) * eps.col(v);
    }
    return xt;
}

namespace {

void check_batch(std::span<const TrajectoryTensor> batch, std::size_t draws) {
    if (batch.empty()) throw InvalidArgument("loss needs a non-empty batch");
    if (draws != batch.size()) throw InvalidArgument("one noise draw per batch sample is required");
}

double masked_sq_error(const Matrix& eps, const Matrix& pred, std::span<const std::uint8_t> mask) {
    double s = 0.0;
    for (Eigen::Index l = 0; l < eps.rows(); ++l)
        if (mask[l]) s += (eps.row(l) - pred.row(l)).squaredNorm();
    return s;
}

template <class S>
std::pair<double, std::vector<double>> sample_loss_grad(const DenoiserParams& params, const S* weights,
                                                        const MatrixT<S>& cond, const TrajectoryTensor& x0,
                                                        const NoiseDraw& draw, std::span<const double> psi,
                                                        const ScheduleParams& schedule, double grad_scale) {
    const Matrix xt = perturb(x0.values, draw.eps, draw.t, schedule, psi);
    Engine<S> eng(params.config, params.layout, weights);
    Cache<S> cache;
    const MatrixT<S> pred = eng.forward(xt.template cast<S>(), x0.mask, draw.t, cond, &cache);
    const double w = loss_weight(draw.t);
    const Matrix pred64 = pred.template cast<double>();
    const double loss = w * masked_sq_error(draw.eps, pred64, x0.mask);

    MatrixT<S> dout = MatrixT<S>::Zero(pred.rows(), pred.cols());
    for (Eigen::Index l = 0; l < pred.rows(); ++l)
        if (x0.mask[l])
            dout.row(l) = (static_cast<S>(-2.0 * w * grad_scale) * (draw.eps.row(l).template cast<S>() - pred.row(l)));
    std::vector<S> grad(params.values.size(), S(0));
    eng.backward(dout, x0.mask, cond, cache, grad);
    return {loss, std::vector<double>(grad.begin(), grad.end())};
}

}  // namespace

LossResult loss_and_gradient(const DenoiserParams& params, std::span<const TrajectoryTensor> batch,
                             const Matrix& psi, std::span<const double> psi_scores,
                             const ScheduleParams& schedule, std::span<const NoiseDraw> draws,
                             const LossOptions& options) {
    check_batch(batch, draws.size());
    const std::size_t n = batch.size();
    const double grad_scale = options.weight_scale / static_cast<double>(n);
    const Matrix cond64 = film_token_features(psi);

    std::vector<std::pair<double, std::vector<double>>> slots(n);
    if (params.config.precision == Precision::Float32) {
        const std::vector<float> w32(params.values.begin(), params.values.end());
        const MatrixT<float> cond32 = cond64.cast<float>();
        parallel_for(n, options.workers, [&](std::size_t i) {
            slots[i] = sample_loss_grad<float>(params, w32.data(), cond32, batch[i], draws[i], psi_scores, schedule,
                                               grad_scale);
        });
    } else {
        parallel_for(n, options.workers, [&](std::size_t i) {
            slots[i] = sample_loss_grad<double>(params, params.values.data(), cond64, batch[i], draws[i],
                                                psi_scores, schedule, grad_scale);
        });
    }
    auto total = tree_reduce(std::move(slots), [](auto& a, const auto& b) {
        a.first += b.first;
        for (std::size_t k = 0; k < a.second.size(); ++k) a.second[k] += b.second[k];
    });
    return {total.first / static_cast<double>(n), std::move(total.second)};
}

LossResult loss_and_gradient(const DenoiserParams& params, std::span<const TrajectoryTensor> batch,
                             const Matrix& psi, std::span<const double> psi_scores,
                             const ScheduleParams& schedule, Rng& rng, const LossOptions& options) {
    if (batch.empty()) throw InvalidArgument("loss needs a non-empty batch");
    std::vector<NoiseDraw> draws;
    draws.reserve(batch.size());
    for (const auto& x : batch) draws.push_back(draw_noise(rng, x.rows(), x.cols()));
    return loss_and_gradient(params, batch, psi, psi_scores, schedule, draws, options);
}

double denoising_loss(const EpsPredictor& predictor, std::span<const TrajectoryTensor> batch,
                      std::span<const double> psi_scores, const ScheduleParams& schedule,
                      std::span<const NoiseDraw> draws) {
    check_batch(batch, draws.size());
    double total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Matrix xt = perturb(batch[i].values, draws[i].eps, draws[i].t, schedule, psi_scores);
        const Matrix pred = predictor(xt, batch[i].mask, draws[i].t);
        total += loss_weight(draws[i].t) * masked_sq_error(draws[i].eps, pred, batch[i].mask);
    }
    return total / static_cast<double>(batch.size());
}

}  // namespace kgsynth
