#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "kgsynth/cohort_sim.hpp"
#include "kgsynth/denoiser.hpp"
#include "kgsynth/linalg.hpp"
#include "kgsynth/metapath.hpp"
#include "kgsynth/noise_schedule.hpp"
#include "kgsynth/sampler.hpp"
#include "kgsynth/trainer.hpp"
#include "kgsynth/trajectory.hpp"

namespace kgsynth {

// --- Feature views ---------------------------------------------------------

// Row r holds the token-count histogram of trajectory r (lab, med and AE
// tokens all counted).
Matrix count_features(std::span<const Trajectory> set, const TokenVocab& vocab);

// One row per consecutive gap, pooled over the set.
Matrix gap_features(std::span<const Trajectory> set);

// --- MMD -------------------------------------------------------------------

// Median of the non-zero pairwise Euclidean distances (mean of the two middle
// values for an even count). Throws when every point coincides.
double median_heuristic_bandwidth(const Matrix& points);

inline double gaussian_kernel(double sq_dist, double sigma) { return std::exp(-sq_dist / (2.0 * sigma * sigma)); }

// Unbiased U-statistic with a Gaussian kernel. May be negative.
double mmd2_unbiased(const Matrix& X, const Matrix& Y, double sigma);

struct MmdResult {
    double value = 0.0;
    double sigma = 0.0;
};

// Bandwidth from the median heuristic on the pooled rows.
MmdResult mmd_with_median_bandwidth(const Matrix& real, const Matrix& synth);
MmdResult cat_mmd(std::span<const Trajectory> real, std::span<const Trajectory> synth, const TokenVocab& vocab);
MmdResult cont_mmd(std::span<const Trajectory> real, std::span<const Trajectory> synth);

// MMD^2 values under random relabelling of the pooled sample, sizes kept.
std::vector<double> mmd_permutation_null(const Matrix& X, const Matrix& Y, double sigma, int permutations,
                                         std::uint64_t seed);

// Empirical quantile with linear interpolation between order statistics.
double quantile(std::vector<double> values, double q);

// --- Ranks and AUROC -------------------------------------------------------

// 1-based ranks; tied values share their average rank.
std::vector<double> average_ranks(std::span<const double> values);

// Mann-Whitney AUROC of `scores` for label 1 against label 0, ties count 1/2.
double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels);

double spearman(std::span<const double> a, std::span<const double> b);

// --- Membership inference --------------------------------------------------

// Product Gaussian kernel density with one median-heuristic bandwidth per
// dimension; dimensions without spread fall back to bandwidth 1.
class ProductKde {
public:
    explicit ProductKde(const Matrix& points);
    double log_density(const Eigen::Ref<const RowVector>& x) const;
    const std::vector<double>& bandwidths() const { return h_; }

private:
    Matrix points_;
    std::vector<double> h_;
    double log_norm_ = 0.0;
};

// log p_synth(x) - log p_ref(x) for every row of `queries`.
std::vector<double> domias_scores(const Matrix& synth, const Matrix& reference, const Matrix& queries);

// Members are label 1. |members| == |nonmembers| >= 10.
double domias_auroc(const Matrix& synth, const Matrix& members, const Matrix& nonmembers, const Matrix& reference);

struct ShadowAttack {
    double auroc = 0.5;
    double threshold = 0.0;  // 95th percentile of the shadow-set scores
    double member_hit_rate = 0.0;
    double nonmember_hit_rate = 0.0;
};

// Score = -(distance to the nearest synthetic row).
std::vector<double> nearest_synth_scores(const Matrix& synth, const Matrix& queries);
ShadowAttack shadow_threshold_attack(const Matrix& synth, const Matrix& members, const Matrix& nonmembers,
                                     const Matrix& shadow);

// --- TSTR ------------------------------------------------------------------

enum class ClassifierKind { Recurrent, Logistic };

struct ClassifierConfig {
    ClassifierKind kind = ClassifierKind::Recurrent;
    int hidden = 16;
    int epochs = 30;
    int batch_size = 32;
    double lr = 1e-2;
    int max_len = 16;  // most recent events fed to the classifier
    std::uint64_t seed = 0;
};

// Default label: any adverse-event flag among the classifier's input window.
using LabelFn = std::function<bool(const Trajectory&)>;
LabelFn any_ae_label(int max_len);

double balanced_accuracy(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth);

// Trains on `train` and reports balanced accuracy on `test`. AE tokens are
// not part of the input. Throws when `test` holds a single class.
double train_and_score(std::span<const Trajectory> train, std::span<const Trajectory> test, const TokenVocab& vocab,
                       const LabelFn& label, const ClassifierConfig& cfg);

struct TstrResult {
    double delta = 0.0;
    double bal_acc_real = 0.0;
    double bal_acc_synth = 0.0;
};

TstrResult tstr_delta_bal_acc(std::span<const Trajectory> real_train, std::span<const Trajectory> real_test,
                              std::span<const Trajectory> synth_train, const TokenVocab& vocab, const LabelFn& label,
                              const ClassifierConfig& cfg);

// --- Reports and the lambda sweep -------------------------------------------

struct EvalConfig {
    ClassifierConfig classifier;
    int max_len = 16;               // real records are cut to their most recent max_len events
    double shadow_fraction = 0.05;  // of all real patients, drawn from the validation fold
    int null_permutations = 0;      // 0 disables the Cat-MMD permutation null
};

struct EvalReport {
    double lambda = 0.0;
    std::uint64_t seed = 0;
    std::string config_digest;
    MmdResult cat;
    MmdResult cont;
    double cat_null_q95 = 0.0;
    TstrResult tstr;
    std::map<std::string, double> mia;  // "domias", "shadow"
    double shadow_threshold = 0.0;
    std::size_t n_synth = 0;
    double unique_decode_rate = 1.0;

    nlohmann::json to_json() const;
    static EvalReport from_json(const nlohmann::json& j);
};

// Members: a seeded subset of the training fold as large as the test fold.
// Nonmembers: the test fold. DOMIAS reference and the shadow set come from
// the validation fold.
EvalReport evaluate_synthetic(const CohortSplit& split, std::span<const Trajectory> synth, const TokenVocab& vocab,
                              const EvalConfig& cfg, std::uint64_t seed);

// Everything a (lambda, seed) cell needs besides lambda and seed.
struct SweepInputs {
    CohortSplit split;
    MetaPathProfile profile;  // lambda is overridden per cell
    ScheduleParams schedule;
    NetConfig net;
    TrainConfig train;
    SamplerConfig sample;
    EvalConfig eval;
    std::uint64_t base_seed = 0;
    std::string config_digest;
};

// Seed for replicate `r` of a sweep rooted at `base`.
std::uint64_t replicate_seed(std::uint64_t base, int r);

// train -> sample -> evaluate for one cell; train, sample and attacker seeds
// are all derived from `seed`.
EvalReport run_cell(const SweepInputs& in, double lambda, std::uint64_t seed, std::size_t workers = 1);

struct SweepRow {
    double lambda = 0.0;
    std::vector<EvalReport> reports;  // one per seed, in seed order

    double cat_mean() const;
    double cat_sd() const;
    double mia_mean() const;
    double mia_sd() const;
    double delta_mean() const;
};

struct SweepTable {
    std::vector<SweepRow> rows;  // in the order the lambdas were given
    double spearman_lambda_cat = 0.0;
    double spearman_lambda_mia = 0.0;

    nlohmann::json to_json() const;
    void write_text(std::ostream& out) const;
    void write_csv(std::ostream& out) const;
};

// Cells run in parallel over `workers`; aggregation order is fixed by
// (lambda, seed). Errors name the failing cell.
SweepTable lambda_sweep(const SweepInputs& in, const std::vector<double>& lambdas, int seeds, std::size_t workers = 1);

}  // namespace kgsynth
