#pragma once

#include <chrono>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "kgsynth/config.hpp"
#include "kgsynth/error.hpp"

namespace kgsynth {

inline constexpr const char* kToolVersion = "1.0.0";

// An upstream artifact is absent; the message names the command producing it.
class MissingArtifact : public Error {
public:
    MissingArtifact(const std::string& path, const std::string& producer)
        : Error("missing_artifact", path + " not found; run `kgsynth " + producer + "` first"), producer_(producer) {}
    const std::string& producer() const noexcept { return producer_; }

private:
    std::string producer_;
};

using Metrics = std::vector<std::pair<std::string, std::string>>;

// Stage runner over one run directory:
//   kg/       nodes.tsv edges.tsv info.json
//   cohort/   vocab.json train.jsonl valid.jsonl test.jsonl truth.json
//   profile/  profile.json
//   ckpt/     checkpoint.json loss.csv
//   synth/    synthetic.jsonl
//   eval/     report.json report.txt, sweep/ sweep.json sweep.csv sweep.txt
// Each stage directory also gets a manifest.json.
class Pipeline {
public:
    Pipeline(RunConfig cfg, std::filesystem::path run_dir);

    Metrics gen_kg();
    Metrics simulate();
    Metrics profile();
    Metrics train(bool resume = false);
    Metrics sample();
    Metrics evaluate();
    Metrics sweep();

    const RunConfig& config() const { return cfg_; }
    const std::filesystem::path& run_dir() const { return dir_; }

private:
    std::filesystem::path need(const std::string& rel, const std::string& producer) const;
    void write_manifest(const std::string& stage_dir, const std::string& stage, const std::vector<std::string>& inputs,
                        const std::vector<std::string>& outputs, std::chrono::steady_clock::time_point start) const;

    RunConfig cfg_;
    std::filesystem::path dir_;
};

}  // namespace kgsynth
