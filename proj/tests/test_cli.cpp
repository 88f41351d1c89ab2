#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

struct Run {
    int status = -1;
    std::string out;
};

Run run(const std::string& args) {
    const std::string cmd = std::string(KGSYNTH_CLI_PATH) + " " + args + " 2>&1";
    Run r;
    FILE* p = popen(cmd.c_str(), "r");
    REQUIRE(p != nullptr);
    std::array<char, 4096> buf{};
    while (std::fgets(buf.data(), buf.size(), p)) r.out += buf.data();
    const int raw = pclose(p);
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    return r;
}

fs::path scratch(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("kgsynth_cli_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

void write(const fs::path& p, const std::string& text) {
    std::ofstream(p) << text;
}

const char* kTinyConfig = R"(seed = 3
out = run
[kg]
total_nodes = 300
[cohort]
n_patients = 150
n_labs = 10
n_meds = 8
max_len = 4
[net]
hidden = 8
blocks = 1
heads = 2
[train]
total_steps = 10
warmup_steps = 1
batch_size = 4
[sample]
n_trajectories = 4
step_size = 0.25
[eval]
classifier = logistic
epochs = 2
)";

}  // namespace

TEST_CASE("validate-config accepts the shipped example") {
    const auto r = run(std::string("--config ") + KGSYNTH_EXAMPLE_CONFIG + " validate-config");
    CHECK(r.status == 0);
    CHECK(r.out.rfind("ok\n", 0) == 0);
    CHECK(r.out.find("config_digest=") != std::string::npos);
}

TEST_CASE("configuration errors are reported on one line") {
    const auto d = scratch("bad");
    write(d / "bad.config", "[train]\ntotal_steps = -4\nmystery = 1\n");
    const auto r = run("--config " + (d / "bad.config").string() + " validate-config");
    CHECK(r.status == 1);
    CHECK(r.out.rfind("error=config_invalid", 0) == 0);
    CHECK(r.out.find("mystery") != std::string::npos);
    CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 1);
    fs::remove_all(d);
}

TEST_CASE("usage errors") {
    CHECK(run("validate-config").status == 2);
    CHECK(run("--config x.config frobnicate").status == 2);
    CHECK(run(std::string("--config ") + KGSYNTH_EXAMPLE_CONFIG + " --workers 0 validate-config").status == 2);
}

TEST_CASE("a stage without its inputs names the producing command") {
    const auto d = scratch("missing");
    write(d / "run.config", kTinyConfig);
    const auto r = run("--config " + (d / "run.config").string() + " train");
    CHECK(r.status == 1);
    CHECK(r.out.find("error=missing_artifact") != std::string::npos);
    CHECK(r.out.find("kgsynth simulate") != std::string::npos);
    fs::remove_all(d);
}

TEST_CASE("tiny pipeline runs every stage") {
    const auto d = scratch("pipeline");
    write(d / "run.config", kTinyConfig);
    const std::string base = "--config " + (d / "run.config").string() + " ";
    for (const char* stage : {"gen-kg", "simulate", "profile", "train", "sample", "evaluate"}) {
        const auto r = run(base + stage);
        CHECK_MESSAGE(r.status == 0, stage << ": " << r.out);
        CHECK(r.out.rfind(std::string("stage=") + stage + "\n", 0) == 0);
    }
    for (const char* f : {"kg/manifest.json", "cohort/manifest.json", "profile/manifest.json", "ckpt/manifest.json",
                          "synth/synthetic.jsonl", "eval/report.json", "eval/report.txt"})
        CHECK_MESSAGE(fs::exists(d / "run" / f), f);

    std::ifstream in(d / "run/eval/report.json");
    const auto report = nlohmann::json::parse(in);
    CHECK(report.contains("cat_mmd2"));
    CHECK(report.at("mia").contains("domias"));

    std::ifstream man(d / "run/ckpt/manifest.json");
    const auto m = nlohmann::json::parse(man);
    CHECK(m.at("stage") == "train");
    CHECK(m.at("outputs").contains("ckpt/checkpoint.json"));

    const auto resumed = run(base + "train --resume");
    CHECK(resumed.status == 0);

    const auto other = run(base + "--out " + (d / "elsewhere").string() + " --seed 4 gen-kg");
    CHECK(other.status == 0);
    CHECK(fs::exists(d / "elsewhere/kg/nodes.tsv"));
    fs::remove_all(d);
}
