#include "kgsynth/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "kgsynth/digest.hpp"

namespace kgsynth {

namespace {

std::string join_lines(const std::vector<std::string>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "; " : "") + v[i];
    return s;
}

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& text) {
    T v{};
    const auto t = trim(text);
    const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || p != t.data() + t.size() || t.empty())
        throw InvalidArgument("'" + text + "' is not a valid number");
    return v;
}

bool parse_bool(const std::string& text) {
    const auto t = trim(text);
    if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
    if (t == "false" || t == "0" || t == "no" || t == "off") return false;
    throw InvalidArgument("'" + text + "' is not a boolean");
}

std::vector<double> parse_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_number<double>(item));
    if (out.empty()) throw InvalidArgument("empty list");
    return out;
}

using Setter = std::function<void(const std::string&)>;

// (section, key) -> setter. The empty section holds the global keys.
std::map<std::pair<std::string, std::string>, Setter> setters(RunConfig& c, const std::filesystem::path& base) {
    auto path = [&base](std::string& dst) {
        return [&dst, &base](const std::string& v) {
            const auto t = trim(v);
            dst = t.empty() || base.empty() ? t : (base / t).lexically_normal().string();
        };
    };
    auto text = [](std::string& dst) { return [&dst](const std::string& v) { dst = trim(v); }; };
    auto num = [](auto& dst) {
        return [&dst](const std::string& v) { dst = parse_number<std::decay_t<decltype(dst)>>(v); };
    };
    auto& co = c.cohort.sim;
    return {
        {{"", "seed"}, num(c.seed)},
        {{"", "out"}, path(c.out)},
        {{"", "workers"}, num(c.workers)},

        {{"kg", "nodes_file"}, path(c.kg.nodes_file)},
        {{"kg", "edges_file"}, path(c.kg.edges_file)},
        {{"kg", "total_nodes"}, num(c.kg.total_nodes)},
        {{"kg", "gene_share"}, num(c.kg.gene_share)},
        {{"kg", "anchor"}, text(c.kg.anchor)},
        {{"kg", "validity_date"}, text(c.kg.validity_date)},

        {{"cohort", "n_patients"}, num(co.n_patients)},
        {{"cohort", "visit_mean"}, num(co.visit_mean)},
        {{"cohort", "visit_dispersion"}, num(co.visit_dispersion)},
        {{"cohort", "fixed_visits"},
         [&co](const std::string& v) {
             const int n = parse_number<int>(v);
             co.fixed_visits = n > 0 ? std::optional<int>(n) : std::nullopt;
         }},
        {{"cohort", "ae_rate"}, num(co.ae_rate)},
        {{"cohort", "ae_enrichment"}, num(co.ae_enrichment)},
        {{"cohort", "gamma"}, num(co.gamma)},
        {{"cohort", "gap_log_mean"}, num(co.gap_log_mean)},
        {{"cohort", "gap_log_sd"}, num(co.gap_log_sd)},
        {{"cohort", "start_window_days"}, num(co.start_window_days)},
        {{"cohort", "n_labs"}, num(c.cohort.n_labs)},
        {{"cohort", "n_meds"}, num(c.cohort.n_meds)},
        {{"cohort", "max_len"}, num(c.cohort.max_len)},
        {{"cohort", "split"},
         [&c](const std::string& v) {
             const auto r = parse_list(v);
             if (r.size() != 3) throw InvalidArgument("expected three ratios");
             c.cohort.ratios = {r[0], r[1], r[2]};
         }},

        {{"profile", "lambda"}, num(c.profile.lambda)},
        {{"profile", "max_len"}, num(c.profile.max_len)},
        {{"profile", "d_max"}, num(c.profile.d_max)},
        {{"profile", "normalize"},
         [&c](const std::string& v) {
             const auto t = trim(v);
             if (t == "none") c.profile.normalize = PsiNormalize::None;
             else if (t == "log1p_max") c.profile.normalize = PsiNormalize::Log1pMax;
             else throw InvalidArgument("expected none or log1p_max, got '" + t + "'");
         }},

        {{"schedule", "beta_min"}, num(c.schedule.beta_min)},
        {{"schedule", "beta_max"}, num(c.schedule.beta_max)},
        {{"schedule", "steps"}, num(c.schedule.steps)},

        {{"net", "hidden"}, num(c.net.hidden)},
        {{"net", "blocks"}, num(c.net.blocks)},
        {{"net", "heads"}, num(c.net.heads)},
        {{"net", "kernel"}, num(c.net.kernel)},
        {{"net", "precision"},
         [&c](const std::string& v) {
             const auto t = trim(v);
             if (t == "float64") c.net.precision = Precision::Float64;
             else if (t == "float32") c.net.precision = Precision::Float32;
             else throw InvalidArgument("expected float64 or float32, got '" + t + "'");
         }},

        {{"train", "peak_lr"}, num(c.train.peak_lr)},
        {{"train", "warmup_steps"}, num(c.train.warmup_steps)},
        {{"train", "total_steps"}, num(c.train.total_steps)},
        {{"train", "batch_size"}, num(c.train.batch_size)},
        {{"train", "beta1"}, num(c.train.beta1)},
        {{"train", "beta2"}, num(c.train.beta2)},
        {{"train", "eps"}, num(c.train.eps)},
        {{"train", "anneal"}, num(c.train.anneal)},
        {{"train", "log_every"}, num(c.train.log_every)},
        {{"train", "checkpoint_every"}, num(c.checkpoint_every)},

        {{"sample", "n_trajectories"}, num(c.sample.n_trajectories)},
        {{"sample", "step_size"}, num(c.sample.step_size)},
        {{"sample", "drift"},
         [&c](const std::string& v) {
             const auto t = trim(v);
             if (t == "vp_consistent") c.sample.drift = DriftMode::VpConsistent;
             else if (t == "paper_literal") c.sample.drift = DriftMode::PaperLiteral;
             else throw InvalidArgument("expected vp_consistent or paper_literal, got '" + t + "'");
         }},
        {{"sample", "noise"}, [&c](const std::string& v) { c.sample.noise_on = parse_bool(v); }},

        {{"eval", "classifier"},
         [&c](const std::string& v) {
             const auto t = trim(v);
             if (t == "recurrent") c.eval.classifier.kind = ClassifierKind::Recurrent;
             else if (t == "logistic") c.eval.classifier.kind = ClassifierKind::Logistic;
             else throw InvalidArgument("expected recurrent or logistic, got '" + t + "'");
         }},
        {{"eval", "hidden"}, num(c.eval.classifier.hidden)},
        {{"eval", "epochs"}, num(c.eval.classifier.epochs)},
        {{"eval", "batch_size"}, num(c.eval.classifier.batch_size)},
        {{"eval", "lr"}, num(c.eval.classifier.lr)},
        {{"eval", "shadow_fraction"}, num(c.eval.shadow_fraction)},
        {{"eval", "null_permutations"}, num(c.eval.null_permutations)},

        {{"sweep", "lambdas"}, [&c](const std::string& v) { c.sweep.lambdas = parse_list(v); }},
        {{"sweep", "seeds"}, num(c.sweep.seeds)},
    };
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> violations)
    : Error("config_invalid", join_lines(violations)), violations_(std::move(violations)) {}

RunConfig parse_run_config(std::istream& in, const std::filesystem::path& base_dir) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError({"line " + std::to_string(e.line()) + ": " + e.message()});
    }

    RunConfig cfg;
    bool warmup_given = false;
    auto table = setters(cfg, base_dir);
    std::vector<std::string> errors;
    auto apply = [&](const std::string& section, const std::string& key, const std::string& value) {
        const std::string where = section.empty() ? key : "[" + section + "] " + key;
        const auto it = table.find({section, key});
        if (it == table.end()) {
            errors.push_back(where + ": unknown key");
            return;
        }
        try {
            it->second(value);
            if (section == "train" && key == "warmup_steps") warmup_given = true;
        } catch (const std::exception& e) {
            errors.push_back(where + ": " + e.what());
        }
    };
    for (const auto& [name, node] : tree) {
        if (node.empty()) {
            apply("", name, node.data());
            continue;
        }
        for (const auto& [key, leaf] : node) apply(name, key, leaf.data());
    }
    if (!warmup_given) cfg.train.warmup_steps = TrainConfig::default_warmup(cfg.train.total_steps);

    const auto semantic = validate_run_config(cfg);
    errors.insert(errors.end(), semantic.begin(), semantic.end());
    if (!errors.empty()) throw ConfigError(std::move(errors));
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("config file " + path.string() + " cannot be opened");
    return parse_run_config(in, path.parent_path());
}

std::vector<std::string> validate_run_config(const RunConfig& c) {
    std::vector<std::string> e;
    auto check = [&e](bool ok, const std::string& msg) {
        if (!ok) e.push_back(msg);
    };
    auto component = [&e](const std::string& where, const std::function<void()>& fn) {
        try {
            fn();
        } catch (const std::exception& ex) {
            e.push_back(where + ": " + ex.what());
        }
    };

    check(!c.out.empty(), "out: must not be empty");
    check(c.workers >= 1, "workers: must be at least 1");

    const bool has_nodes = !c.kg.nodes_file.empty(), has_edges = !c.kg.edges_file.empty();
    check(has_nodes == has_edges, "[kg] nodes_file and edges_file must be given together");
    for (const auto* f : {&c.kg.nodes_file, &c.kg.edges_file})
        if (!f->empty()) check(std::filesystem::is_regular_file(*f), "[kg] file not found: " + *f);
    if (!has_nodes) {
        check(c.kg.total_nodes >= 8, "[kg] total_nodes: must be at least 8");
        check(c.kg.gene_share >= 0.0 && c.kg.gene_share < 1.0, "[kg] gene_share: must lie in [0, 1)");
    }
    if (!c.kg.validity_date.empty())
        check(parse_iso_date(c.kg.validity_date).has_value(), "[kg] validity_date: expected YYYY-MM-DD");

    {
        CohortConfig sim = c.cohort.sim;
        sim.anchor = "placeholder";
        component("[cohort]", [&] { sim.validate(); });
    }
    check(c.cohort.n_labs >= 1, "[cohort] n_labs: must be at least 1");
    check(c.cohort.n_meds >= 1, "[cohort] n_meds: must be at least 1");
    check(c.cohort.max_len >= 1, "[cohort] max_len: must be at least 1");
    {
        const auto& r = c.cohort.ratios;
        check(r[0] > 0 && r[1] > 0 && r[2] > 0 && std::abs(r[0] + r[1] + r[2] - 1.0) < 1e-9,
              "[cohort] split: three positive ratios summing to 1");
    }

    check(c.profile.lambda >= 0.0 && c.profile.lambda < 1.0, "[profile] lambda: must lie in [0, 1)");
    check(c.profile.max_len >= 1, "[profile] max_len: must be at least 1");
    check(c.profile.d_max >= 1, "[profile] d_max: must be at least 1");

    component("[schedule]", [&] {
        ScheduleParams s = c.schedule;
        s.lambda = c.profile.lambda < 1.0 && c.profile.lambda >= 0.0 ? c.profile.lambda : 0.0;
        s.validate();
    });
    component("[net]", [&] {
        NetConfig n = c.net;
        n.vocab_size = 3;
        n.max_len = 1;
        n.film_width = 1;
        n.validate();
    });
    component("[train]", [&] { c.train.validate(); });
    check(c.checkpoint_every >= 0, "[train] checkpoint_every: must be non-negative");
    component("[sample]", [&] { c.sample.validate(); });
    check(c.sample.n_trajectories >= 2, "[sample] n_trajectories: must be at least 2");

    check(c.eval.classifier.hidden >= 1, "[eval] hidden: must be at least 1");
    check(c.eval.classifier.epochs >= 0, "[eval] epochs: must be non-negative");
    check(c.eval.classifier.batch_size >= 1, "[eval] batch_size: must be at least 1");
    check(c.eval.classifier.lr > 0.0, "[eval] lr: must be positive");
    check(c.eval.shadow_fraction > 0.0 && c.eval.shadow_fraction < 1.0, "[eval] shadow_fraction: must lie in (0, 1)");
    check(c.eval.null_permutations >= 0, "[eval] null_permutations: must be non-negative");

    check(!c.sweep.lambdas.empty(), "[sweep] lambdas: must not be empty");
    for (double l : c.sweep.lambdas)
        check(l >= 0.0 && l < 1.0, "[sweep] lambdas: " + std::to_string(l) + " outside [0, 1)");
    check(c.sweep.seeds >= 1, "[sweep] seeds: must be at least 1");
    return e;
}

nlohmann::json RunConfig::to_json() const {
    const auto& co = cohort.sim;
    NetConfig n = net;
    return {
        {"seed", seed},
        {"kg",
         {{"nodes_file", kg.nodes_file.empty() ? "" : sha256_file(kg.nodes_file)},
          {"edges_file", kg.edges_file.empty() ? "" : sha256_file(kg.edges_file)},
          {"total_nodes", kg.total_nodes},
          {"gene_share", kg.gene_share},
          {"anchor", kg.anchor},
          {"validity_date", kg.validity_date}}},
        {"cohort",
         {{"n_patients", co.n_patients},
          {"visit_mean", co.visit_mean},
          {"visit_dispersion", co.visit_dispersion},
          {"fixed_visits", co.fixed_visits.value_or(0)},
          {"ae_rate", co.ae_rate},
          {"ae_enrichment", co.ae_enrichment},
          {"gamma", co.gamma},
          {"gap_log_mean", co.gap_log_mean},
          {"gap_log_sd", co.gap_log_sd},
          {"start_window_days", co.start_window_days},
          {"n_labs", cohort.n_labs},
          {"n_meds", cohort.n_meds},
          {"max_len", cohort.max_len},
          {"split", cohort.ratios}}},
        {"profile",
         {{"lambda", profile.lambda},
          {"max_len", profile.max_len},
          {"d_max", profile.d_max},
          {"normalize", profile.normalize == PsiNormalize::None ? "none" : "log1p_max"}}},
        {"schedule", schedule.to_json()},
        {"net",
         {{"hidden", n.hidden},
          {"blocks", n.blocks},
          {"heads", n.heads},
          {"kernel", n.kernel},
          {"precision", n.precision == Precision::Float64 ? "float64" : "float32"}}},
        {"train", train.to_json()},
        {"checkpoint_every", checkpoint_every},
        {"sample",
         {{"n_trajectories", sample.n_trajectories},
          {"step_size", sample.step_size},
          {"drift", sample.drift == DriftMode::VpConsistent ? "vp_consistent" : "paper_literal"},
          {"noise", sample.noise_on}}},
        {"eval",
         {{"classifier", eval.classifier.kind == ClassifierKind::Recurrent ? "recurrent" : "logistic"},
          {"hidden", eval.classifier.hidden},
          {"epochs", eval.classifier.epochs},
          {"batch_size", eval.classifier.batch_size},
          {"lr", eval.classifier.lr},
          {"shadow_fraction", eval.shadow_fraction},
          {"null_permutations", eval.null_permutations}}},
        {"sweep", {{"lambdas", sweep.lambdas}, {"seeds", sweep.seeds}}},
    };
}

std::string RunConfig::digest() const { return sha256_hex(to_json().dump()); }

}  // namespace kgsynth
