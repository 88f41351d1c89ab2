#include "kgsynth/cohort_sim.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "kgsynth/error.hpp"
#include "kgsynth/metapath.hpp"
#include "kgsynth/rng.hpp"

namespace kgsynth {

void CohortConfig::validate() const {
    if (anchor.empty()) throw InvalidArgument("cohort: anchor disease is required");
    if (n_patients < 1) throw InvalidArgument("cohort: n_patients must be at least 1");
    if (fixed_visits && *fixed_visits < 1) throw InvalidArgument("cohort: fixed_visits must be at least 1");
    if (!fixed_visits && !(visit_mean >= 1.0)) throw InvalidArgument("cohort: visit_mean must be >= 1");
    if (visit_dispersion < 1) throw InvalidArgument("cohort: visit_dispersion must be positive");
    if (!(ae_rate >= 0.0 && ae_rate <= 1.0)) throw InvalidArgument("cohort: ae_rate must lie in [0, 1]");
    if (!(ae_enrichment > 0.0)) throw InvalidArgument("cohort: ae_enrichment must be positive");
    if (!(gamma >= 0.0)) throw InvalidArgument("cohort: gamma must be non-negative");
    if (!(gap_log_sd >= 0.0)) throw InvalidArgument("cohort: gap_log_sd must be non-negative");
    if (!(start_window_days > 0.0)) throw InvalidArgument("cohort: start_window_days must be positive");
}

nlohmann::json TrueLaw::to_json() const {
    return {{"psi", psi},
            {"lab_probs", lab_probs},
            {"med_probs", med_probs},
            {"med_has_ae_edge", med_has_ae_edge},
            {"ae_prob_given_med", ae_prob_given_med},
            {"expected_ae_rate", expected_ae_rate}};
}

TokenVocab build_vocab(const KnowledgeGraph& kg, std::string_view anchor, int n_labs, int n_meds, int max_len) {
    if (n_labs < 1 || n_meds < 1) throw InvalidArgument("vocabulary needs at least one lab and one med");
    const auto reached = enumerate_paths_from(kg, anchor, max_len);
    auto pick = [&](NodeKind kind, int want) {
        std::vector<std::string> near, far;
        for (NodeIndex i = 0; i < kg.node_count(); ++i) {
            const auto& n = kg.node(i);
            if (n.kind != kind) continue;
            (reached.count(i) ? near : far).push_back(n.id);
        }
        std::sort(near.begin(), near.end());
        std::sort(far.begin(), far.end());
        near.insert(near.end(), far.begin(), far.end());
        if (static_cast<int>(near.size()) < want)
            throw InvalidArgument("graph has only " + std::to_string(near.size()) + " " +
                                  std::string(to_string(kind)) + " nodes; " + std::to_string(want) + " requested");
        near.resize(want);
        std::sort(near.begin(), near.end());
        return near;
    };
    for (auto id : {kAeNoneNode, kAeAnyNode})
        if (!kg.find(id)) throw NotFoundError("graph lacks the adverse-event flag node " + std::string(id));

    std::vector<Token> tokens;
    for (auto& id : pick(NodeKind::LabTest, n_labs)) tokens.push_back({id, Field::Lab, id});
    for (auto& id : pick(NodeKind::Drug, n_meds)) tokens.push_back({id, Field::Med, id});
    tokens.push_back({"AE:absent", Field::AEFlag, std::string(kAeNoneNode)});
    tokens.push_back({"AE:present", Field::AEFlag, std::string(kAeAnyNode)});
    return TokenVocab(std::move(tokens));
}

namespace {

std::vector<double> softmax_block(const std::vector<double>& psi, std::span<const TokenId> block, double gamma) {
    std::vector<double> out(block.size());
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < block.size(); ++i) top = std::max(top, gamma * psi[block[i]]);
    double sum = 0.0;
    for (std::size_t i = 0; i < block.size(); ++i) {
        out[i] = std::exp(gamma * psi[block[i]] - top);
        sum += out[i];
    }
    for (auto& p : out) p /= sum;
    return out;
}

std::size_t draw_categorical(Rng& rng, const std::vector<double>& cdf) {
    const double u = uniform01(rng) * cdf.back();
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
}

std::vector<double> cumulative(const std::vector<double>& p) {
    std::vector<double> c(p.size());
    std::partial_sum(p.begin(), p.end(), c.begin());
    return c;
}

}  // namespace

TrueLaw true_token_law(const KnowledgeGraph& kg, const TokenVocab& vocab, const CohortConfig& cfg) {
    cfg.validate();
    if (!kg.find(cfg.anchor)) throw NotFoundError("cohort anchor '" + cfg.anchor + "' not in graph");
    ProfileOptions opts;
    opts.lambda = 0.0;
    opts.max_len = cfg.max_len;
    opts.missing = MissingNode::Error;
    const auto profile = compute_profile(kg, cfg.anchor, vocab, opts);

    TrueLaw law;
    law.psi = profile.psi_raw;
    law.lab_probs = softmax_block(law.psi, vocab.block(Field::Lab), cfg.gamma);
    law.med_probs = softmax_block(law.psi, vocab.block(Field::Med), cfg.gamma);

    const auto meds = vocab.block(Field::Med);
    law.med_has_ae_edge.assign(meds.size(), 0);
    for (std::size_t i = 0; i < meds.size(); ++i) {
        const auto n = kg.index_of(vocab.token(meds[i]).node_id);
        for (const auto e : kg.out_edges(n))
            if (kg.node(kg.edge_dst(e)).kind == NodeKind::AdverseEvent) law.med_has_ae_edge[i] = 1;
    }
    double norm = 0.0;
    for (std::size_t i = 0; i < meds.size(); ++i)
        norm += law.med_probs[i] * (law.med_has_ae_edge[i] ? cfg.ae_enrichment : 1.0);
    const double scale = cfg.ae_rate / norm;
    law.ae_prob_given_med.resize(meds.size());
    law.expected_ae_rate = 0.0;
    for (std::size_t i = 0; i < meds.size(); ++i) {
        law.ae_prob_given_med[i] = std::min(1.0, scale * (law.med_has_ae_edge[i] ? cfg.ae_enrichment : 1.0));
        law.expected_ae_rate += law.med_probs[i] * law.ae_prob_given_med[i];
    }
    return law;
}

std::vector<PatientRecord> simulate_cohort(const KnowledgeGraph& kg, const TokenVocab& vocab,
                                           const CohortConfig& cfg) {
    const TrueLaw law = true_token_law(kg, vocab, cfg);
    const auto labs = vocab.block(Field::Lab);
    const auto meds = vocab.block(Field::Med);
    const auto lab_cdf = cumulative(law.lab_probs);
    const auto med_cdf = cumulative(law.med_probs);

    std::vector<PatientRecord> out(cfg.n_patients);
    for (int k = 0; k < cfg.n_patients; ++k) {
        Rng rng = substream(cfg.seed, Stream::Cohort, static_cast<std::uint64_t>(k));
        int visits = 0;
        if (cfg.fixed_visits) {
            visits = *cfg.fixed_visits;
        } else {
            const double extra_mean = cfg.visit_mean - 1.0;
            if (extra_mean <= 0.0) {
                visits = 1;
            } else {
                const double p = cfg.visit_dispersion / (cfg.visit_dispersion + extra_mean);
                std::negative_binomial_distribution<int> nb(cfg.visit_dispersion, p);
                visits = 1 + nb(rng);
            }
        }
        PatientRecord& rec = out[k];
        rec.id = k;
        double t = uniform01(rng) * cfg.start_window_days;
        for (int v = 0; v < visits; ++v) {
            if (v > 0) t += std::exp(cfg.gap_log_mean + cfg.gap_log_sd * standard_normal(rng));
            const auto li = draw_categorical(rng, lab_cdf);
            const auto mi = draw_categorical(rng, med_cdf);
            const bool ae = uniform01(rng) < law.ae_prob_given_med[mi];
            rec.events.push_back({t, labs[li], meds[mi], ae});
        }
    }
    return out;
}

CohortSplit split_cohort(std::vector<PatientRecord> records, std::array<double, 3> ratios) {
    const double sum = ratios[0] + ratios[1] + ratios[2];
    if (std::abs(sum - 1.0) > 1e-9 || ratios[0] < 0 || ratios[1] < 0 || ratios[2] < 0)
        throw InvalidArgument("split ratios must be non-negative and sum to 1");
    const auto n = records.size();
    const auto n_train = static_cast<std::size_t>(std::llround(ratios[0] * n));
    const auto n_valid = static_cast<std::size_t>(std::llround(ratios[1] * n));
    if (n_train == 0 || n_valid == 0 || n_train + n_valid >= n)
        throw InvalidArgument("too few patients (" + std::to_string(n) + ") for a three-way split");

    auto first_time = [](const PatientRecord& r) {
        return r.events.empty() ? std::numeric_limits<double>::infinity() : r.events.front().time;
    };
    std::sort(records.begin(), records.end(), [&](const PatientRecord& a, const PatientRecord& b) {
        const double ta = first_time(a), tb = first_time(b);
        if (ta != tb) return ta < tb;
        return a.id < b.id;
    });
    CohortSplit s;
    auto it = std::make_move_iterator(records.begin());
    s.train.assign(it, it + n_train);
    s.valid.assign(it + n_train, it + n_train + n_valid);
    s.test.assign(it + n_train + n_valid, std::make_move_iterator(records.end()));
    return s;
}

TrajectoryTensor encode_record(const PatientRecord& record, const TokenVocab& vocab, int max_len) {
    if (max_len < 1) throw InvalidArgument("max_len must be positive");
    TrajectoryTensor x;
    x.values = Matrix::Zero(max_len, static_cast<Eigen::Index>(vocab.size()));
    x.mask.assign(max_len, 0);
    const std::size_t n = record.events.size();
    const std::size_t skip = n > static_cast<std::size_t>(max_len) ? n - max_len : 0;
    auto set = [&](Eigen::Index row, TokenId tok, Field f) {
        if (tok >= vocab.size() || vocab.token(tok).field != f)
            throw InvalidArgument("record " + std::to_string(record.id) + " has an unknown " +
                                  std::string(to_string(f)) + " token");
        x.values(row, tok) = 1.0;
    };
    for (std::size_t i = skip; i < n; ++i) {
        const auto row = static_cast<Eigen::Index>(i - skip);
        const auto& e = record.events[i];
        if (e.lab) set(row, *e.lab, Field::Lab);
        if (e.med) set(row, *e.med, Field::Med);
        x.values(row, e.ae ? vocab.ae_present() : vocab.ae_absent()) = 1.0;
        x.mask[row] = 1;
    }
    return x;
}

double EmpiricalGapDistribution::mean() const {
    if (gaps.empty()) return 0.0;
    return std::accumulate(gaps.begin(), gaps.end(), 0.0) / static_cast<double>(gaps.size());
}

double EmpiricalGapDistribution::stddev() const {
    if (gaps.size() < 2) return 0.0;
    const double m = mean();
    double s = 0.0;
    for (auto g : gaps) s += (g - m) * (g - m);
    return std::sqrt(s / static_cast<double>(gaps.size() - 1));
}

nlohmann::json EmpiricalGapDistribution::to_json() const { return {{"gaps", gaps}}; }

EmpiricalGapDistribution EmpiricalGapDistribution::from_json(const nlohmann::json& j) {
    EmpiricalGapDistribution d{j.at("gaps").get<std::vector<double>>()};
    if (d.gaps.empty()) throw InvalidArgument("gap distribution is empty");
    for (auto g : d.gaps)
        if (!(g > 0.0)) throw InvalidArgument("gap distribution holds a non-positive gap");
    std::sort(d.gaps.begin(), d.gaps.end());
    return d;
}

EmpiricalGapDistribution fit_gap_distribution(std::span<const PatientRecord> records) {
    EmpiricalGapDistribution d;
    for (const auto& r : records)
        for (std::size_t i = 1; i < r.events.size(); ++i) d.gaps.push_back(r.events[i].time - r.events[i - 1].time);
    if (d.gaps.empty()) throw InvalidArgument("no inter-visit gaps: every record has fewer than two visits");
    std::sort(d.gaps.begin(), d.gaps.end());
    return d;
}

nlohmann::json EmpiricalLengthDistribution::to_json() const { return {{"lengths", lengths}}; }

EmpiricalLengthDistribution EmpiricalLengthDistribution::from_json(const nlohmann::json& j) {
    EmpiricalLengthDistribution d{j.at("lengths").get<std::vector<int>>()};
    if (d.lengths.empty()) throw InvalidArgument("length distribution is empty");
    std::sort(d.lengths.begin(), d.lengths.end());
    return d;
}

EmpiricalLengthDistribution fit_length_distribution(std::span<const PatientRecord> records) {
    EmpiricalLengthDistribution d;
    for (const auto& r : records)
        if (!r.events.empty()) d.lengths.push_back(static_cast<int>(r.events.size()));
    if (d.lengths.empty()) throw InvalidArgument("no non-empty records to fit lengths on");
    std::sort(d.lengths.begin(), d.lengths.end());
    return d;
}

}  // namespace kgsynth
