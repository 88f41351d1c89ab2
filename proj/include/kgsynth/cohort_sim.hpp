#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "kgsynth/kg_store.hpp"
#include "kgsynth/trajectory.hpp"
#include "kgsynth/vocab.hpp"

namespace kgsynth {

// Ground-truth cohort process. Per visit: lab ~ softmax(gamma psi) over lab
// tokens, med ~ softmax(gamma psi) over med tokens, AE ~ Bernoulli with the
// rate raised by `ae_enrichment` for meds that have a drug->AE edge and
// normalised so the expected overall AE rate equals `ae_rate`.
struct CohortConfig {
    std::string anchor;
    int n_patients = 500;
    double visit_mean = 9.1;      // 1 + NegBin(size, mean - 1)
    int visit_dispersion = 60;    // NegBin size parameter
    std::optional<int> fixed_visits;
    double ae_rate = 0.124;
    double ae_enrichment = 4.0;
    double gamma = 1.0;
    double gap_log_mean = std::log(30.0);  // log-normal inter-visit gaps, days
    double gap_log_sd = 0.8;
    double start_window_days = 3650.0;
    int max_len = 3;  // meta-path length used for the true scores
    std::uint64_t seed = 0;

    void validate() const;
};

struct TrueLaw {
    std::vector<double> psi;           // unclipped meta-path counts per token
    std::vector<double> lab_probs;     // over vocab.block(Lab), in block order
    std::vector<double> med_probs;     // over vocab.block(Med)
    std::vector<std::uint8_t> med_has_ae_edge;
    std::vector<double> ae_prob_given_med;
    double expected_ae_rate = 0.0;

    nlohmann::json to_json() const;
};

// Labs and meds: nodes reached from the anchor by a directed path of at most
// max_len edges come first (by id), then the remaining nodes of that kind (by
// id); the chosen ids are listed in id order. AE tokens map to AE:NONE/AE:ANY.
TokenVocab build_vocab(const KnowledgeGraph& kg, std::string_view anchor, int n_labs, int n_meds, int max_len = 3);

TrueLaw true_token_law(const KnowledgeGraph& kg, const TokenVocab& vocab, const CohortConfig& cfg);

std::vector<PatientRecord> simulate_cohort(const KnowledgeGraph& kg, const TokenVocab& vocab,
                                           const CohortConfig& cfg);

struct CohortSplit {
    std::vector<PatientRecord> train;
    std::vector<PatientRecord> valid;
    std::vector<PatientRecord> test;
};

// Patients sorted by first-event time (then id) and cut contiguously; fold
// sizes are round(r0 n), round(r1 n) and the remainder.
CohortSplit split_cohort(std::vector<PatientRecord> records, std::array<double, 3> ratios = {0.8, 0.1, 0.1});

// Keeps the most recent max_len events. Throws on unknown tokens.
TrajectoryTensor encode_record(const PatientRecord& record, const TokenVocab& vocab, int max_len);

struct EmpiricalGapDistribution {
    std::vector<double> gaps;  // sorted ascending, all > 0

    double mean() const;
    double stddev() const;
    nlohmann::json to_json() const;
    static EmpiricalGapDistribution from_json(const nlohmann::json& j);
};

EmpiricalGapDistribution fit_gap_distribution(std::span<const PatientRecord> records);

struct EmpiricalLengthDistribution {
    std::vector<int> lengths;  // sorted ascending, all >= 1

    nlohmann::json to_json() const;
    static EmpiricalLengthDistribution from_json(const nlohmann::json& j);
};

EmpiricalLengthDistribution fit_length_distribution(std::span<const PatientRecord> records);

}  // namespace kgsynth
