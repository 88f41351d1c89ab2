#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "kgsynth/cohort_sim.hpp"
#include "kgsynth/denoiser.hpp"
#include "kgsynth/error.hpp"
#include "kgsynth/evaluation.hpp"
#include "kgsynth/metapath.hpp"
#include "kgsynth/noise_schedule.hpp"
#include "kgsynth/sampler.hpp"
#include "kgsynth/trainer.hpp"

namespace kgsynth {

// Every violation found in a config, one per entry.
class ConfigError : public Error {
public:
    explicit ConfigError(std::vector<std::string> violations);
    const std::vector<std::string>& violations() const noexcept { return violations_; }

private:
    std::vector<std::string> violations_;
};

struct KgSection {
    std::string nodes_file;  // both files set: load; both empty: generate
    std::string edges_file;
    int total_nodes = 1200;
    double gene_share = 0.05;
    std::string anchor;  // empty: the disease reaching the most nodes by meta-paths
    std::string validity_date;
};

struct CohortSection {
    CohortConfig sim;  // anchor and seed are filled in by the pipeline
    int n_labs = 137;
    int n_meds = 86;
    int max_len = 16;  // L_max
    std::array<double, 3> ratios{0.8, 0.1, 0.1};
};

struct ProfileSection {
    double lambda = 0.3;
    int max_len = 3;
    std::size_t d_max = 64;
    PsiNormalize normalize = PsiNormalize::None;
};

struct SweepSection {
    std::vector<double> lambdas{0.5, 0.3, 0.1, 0.0};
    int seeds = 5;
};

struct RunConfig {
    std::uint64_t seed = 7;
    std::string out = "run";
    std::size_t workers = 1;
    KgSection kg;
    CohortSection cohort;
    ProfileSection profile;
    ScheduleParams schedule;
    NetConfig net;  // vocab_size, max_len and film_width come from upstream artifacts
    TrainConfig train;
    int checkpoint_every = 0;
    SamplerConfig sample;
    EvalConfig eval;
    SweepSection sweep;

    nlohmann::json to_json() const;
    std::string digest() const;
};

// INI-style text: `key = value` lines under `[section]` headers, `;`
// comments. Relative file paths resolve against `base_dir`. Throws
// ConfigError listing every problem found.
RunConfig parse_run_config(std::istream& in, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

// Semantic checks; empty when the config is valid.
std::vector<std::string> validate_run_config(const RunConfig& cfg);

}  // namespace kgsynth
