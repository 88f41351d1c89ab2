#include "kgsynth/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "kgsynth/cohort_sim.hpp"
#include "kgsynth/digest.hpp"
#include "kgsynth/evaluation.hpp"
#include "kgsynth/kg_store.hpp"
#include "kgsynth/metapath.hpp"
#include "kgsynth/sampler.hpp"
#include "kgsynth/trainer.hpp"

namespace kgsynth {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
    std::ostringstream s;
    s << std::setprecision(6) << v;
    return s.str();
}

std::ofstream open_out(const fs::path& p) {
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error("io_error", "cannot write " + p.string());
    return out;
}

std::ifstream open_in(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error("io_error", "cannot read " + p.string());
    return in;
}

void write_json(const fs::path& p, const nlohmann::json& j) {
    auto out = open_out(p);
    out << j.dump(2) << '\n';
}

nlohmann::json read_json(const fs::path& p) {
    auto in = open_in(p);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(p.string(), 0, e.what());
    }
}

void write_trajectories(const fs::path& p, const std::vector<Trajectory>& set, const TokenVocab& vocab) {
    auto out = open_out(p);
    write_jsonl(out, set, vocab);
}

std::vector<Trajectory> read_trajectories(const fs::path& p, const TokenVocab& vocab) {
    auto in = open_in(p);
    return read_jsonl(in, vocab);
}

KnowledgeGraph read_kg(const fs::path& nodes, const fs::path& edges) {
    auto n = open_in(nodes);
    auto e = open_in(edges);
    return load_edge_list(e, n);
}

// Disease reaching the most nodes by directed meta-paths; ties to lowest id.
std::string pick_anchor(const KnowledgeGraph& kg, int max_len) {
    std::string best;
    std::size_t best_reach = 0;
    std::vector<std::string> diseases;
    for (const auto& n : kg.nodes())
        if (n.kind == NodeKind::Disease) diseases.push_back(n.id);
    std::sort(diseases.begin(), diseases.end());
    for (const auto& id : diseases) {
        const auto reach = enumerate_paths_from(kg, id, max_len).size();
        if (best.empty() || reach > best_reach) {
            best = id;
            best_reach = reach;
        }
    }
    if (best.empty()) throw InvalidArgument("graph has no disease node to anchor on");
    return best;
}

double median_visits(const std::vector<Trajectory>& set) {
    std::vector<double> v;
    for (const auto& t : set) v.push_back(static_cast<double>(t.events.size()));
    return quantile(v, 0.5);
}

}  // namespace

Pipeline::Pipeline(RunConfig cfg, fs::path run_dir) : cfg_(std::move(cfg)), dir_(std::move(run_dir)) {}

fs::path Pipeline::need(const std::string& rel, const std::string& producer) const {
    const fs::path p = dir_ / rel;
    if (!fs::is_regular_file(p)) throw MissingArtifact(rel, producer);
    return p;
}

void Pipeline::write_manifest(const std::string& stage_dir, const std::string& stage,
                              const std::vector<std::string>& inputs, const std::vector<std::string>& outputs,
                              std::chrono::steady_clock::time_point start) const {
    nlohmann::json in = nlohmann::json::object(), out = nlohmann::json::object();
    for (const auto& rel : inputs) in[rel] = sha256_file((dir_ / rel).string());
    for (const auto& rel : outputs) out[rel] = sha256_file((dir_ / rel).string());
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_json(dir_ / stage_dir / "manifest.json", {{"stage", stage},
                                                    {"version", kToolVersion},
                                                    {"seed", cfg_.seed},
                                                    {"config_digest", cfg_.digest()},
                                                    {"inputs", in},
                                                    {"outputs", out},
                                                    {"wall_time", wall}});
}

Metrics Pipeline::gen_kg() {
    const auto start = std::chrono::steady_clock::now();
    KnowledgeGraph kg;
    if (!cfg_.kg.nodes_file.empty()) {
        kg = read_kg(cfg_.kg.nodes_file, cfg_.kg.edges_file);
    } else {
        kg = generate_toy_kg(KgGenConfig::default_mix(cfg_.kg.total_nodes, cfg_.kg.gene_share), cfg_.seed);
    }
    if (!cfg_.kg.validity_date.empty()) kg = filter_by_validity(kg, *parse_iso_date(cfg_.kg.validity_date));

    std::string anchor = cfg_.kg.anchor;
    if (anchor.empty()) {
        anchor = pick_anchor(kg, cfg_.profile.max_len);
    } else if (!kg.find(anchor)) {
        throw NotFoundError("anchor '" + anchor + "' is not a node of the graph");
    }
    {
        auto out = open_out(dir_ / "kg/nodes.tsv");
        write_node_file(kg, out);
    }
    {
        auto out = open_out(dir_ / "kg/edges.tsv");
        write_edge_file(kg, out);
    }
    const auto stats = kg_stats(kg);
    nlohmann::json kinds = nlohmann::json::object();
    for (const auto& [k, n] : stats.kind_counts) kinds[std::string(to_string(k))] = n;
    write_json(dir_ / "kg/info.json", {{"anchor", anchor},
                                       {"nodes", stats.nodes},
                                       {"edges", stats.edges},
                                       {"kind_counts", kinds},
                                       {"relation_counts", stats.relation_counts}});
    write_manifest("kg", "gen-kg", {}, {"kg/nodes.tsv", "kg/edges.tsv", "kg/info.json"}, start);
    return {{"nodes", std::to_string(stats.nodes)}, {"edges", std::to_string(stats.edges)}, {"anchor", anchor}};
}

Metrics Pipeline::simulate() {
    const auto start = std::chrono::steady_clock::now();
    const auto kg = read_kg(need("kg/nodes.tsv", "gen-kg"), need("kg/edges.tsv", "gen-kg"));
    const std::string anchor = read_json(need("kg/info.json", "gen-kg")).at("anchor").get<std::string>();

    const TokenVocab vocab =
        build_vocab(kg, anchor, cfg_.cohort.n_labs, cfg_.cohort.n_meds, cfg_.profile.max_len);
    CohortConfig sim = cfg_.cohort.sim;
    sim.anchor = anchor;
    sim.seed = cfg_.seed;
    sim.max_len = cfg_.profile.max_len;
    const TrueLaw law = true_token_law(kg, vocab, sim);
    auto records = simulate_cohort(kg, vocab, sim);

    std::size_t events = 0, flags = 0;
    for (const auto& r : records) {
        events += r.events.size();
        for (const auto& e : r.events) flags += e.ae ? 1 : 0;
    }
    const double med = median_visits(records);
    const auto split = split_cohort(std::move(records), cfg_.cohort.ratios);

    write_json(dir_ / "cohort/vocab.json", vocab.to_json());
    write_trajectories(dir_ / "cohort/train.jsonl", split.train, vocab);
    write_trajectories(dir_ / "cohort/valid.jsonl", split.valid, vocab);
    write_trajectories(dir_ / "cohort/test.jsonl", split.test, vocab);
    write_json(dir_ / "cohort/truth.json", {{"anchor", anchor}, {"seed", sim.seed}, {"law", law.to_json()}});
    write_manifest("cohort", "simulate", {"kg/nodes.tsv", "kg/edges.tsv", "kg/info.json"},
                   {"cohort/vocab.json", "cohort/train.jsonl", "cohort/valid.jsonl", "cohort/test.jsonl",
                    "cohort/truth.json"},
                   start);
    const double n = static_cast<double>(split.train.size() + split.valid.size() + split.test.size());
    return {{"patients", fmt(n)},
            {"vocab_size", std::to_string(vocab.size())},
            {"median_visits", fmt(med)},
            {"ae_rate", fmt(events ? static_cast<double>(flags) / static_cast<double>(events) : 0.0)},
            {"train", std::to_string(split.train.size())},
            {"valid", std::to_string(split.valid.size())},
            {"test", std::to_string(split.test.size())}};
}

Metrics Pipeline::profile() {
    const auto start = std::chrono::steady_clock::now();
    const auto kg = read_kg(need("kg/nodes.tsv", "gen-kg"), need("kg/edges.tsv", "gen-kg"));
    const std::string anchor = read_json(need("kg/info.json", "gen-kg")).at("anchor").get<std::string>();
    const TokenVocab vocab = TokenVocab::from_json(read_json(need("cohort/vocab.json", "simulate")));
    for (const auto& t : vocab.tokens())
        if (!kg.find(t.node_id)) throw NotFoundError("vocabulary token " + t.name + " has no graph node");

    const auto local = prune_to_neighborhood(kg, anchor, cfg_.profile.max_len);
    ProfileOptions opts;
    opts.lambda = cfg_.profile.lambda;
    opts.max_len = cfg_.profile.max_len;
    opts.d_max = cfg_.profile.d_max;
    opts.normalize = cfg_.profile.normalize;
    opts.missing = MissingNode::ZeroScore;
    const auto prof = compute_profile(local, anchor, vocab, opts);
    write_json(dir_ / "profile/profile.json", prof.to_json());
    write_manifest("profile", "profile", {"kg/nodes.tsv", "kg/edges.tsv", "kg/info.json", "cohort/vocab.json"},
                   {"profile/profile.json"}, start);

    const auto scored = std::count_if(prof.psi_raw.begin(), prof.psi_raw.end(), [](double v) { return v > 0; });
    const auto clipped = std::count_if(prof.psi_raw.begin(), prof.psi_raw.end(),
                                       [&](double v) { return v > prof.psi_max; });
    return {{"lambda", fmt(prof.lambda)},
            {"patterns", std::to_string(prof.width())},
            {"scored_tokens", std::to_string(scored)},
            {"clipped_tokens", std::to_string(clipped)},
            {"pruned_nodes", std::to_string(local.node_count())}};
}

Metrics Pipeline::train(bool resume) {
    const auto start = std::chrono::steady_clock::now();
    const TokenVocab vocab = TokenVocab::from_json(read_json(need("cohort/vocab.json", "simulate")));
    const auto records = read_trajectories(need("cohort/train.jsonl", "simulate"), vocab);
    const auto prof = MetaPathProfile::from_json(read_json(need("profile/profile.json", "profile")));
    if (!(prof.vocab == vocab)) throw InvalidArgument("profile was computed for a different vocabulary; rerun `kgsynth profile`");

    std::vector<TrajectoryTensor> data;
    data.reserve(records.size());
    for (const auto& r : records) data.push_back(encode_record(r, vocab, cfg_.cohort.max_len));

    NetConfig net = cfg_.net;
    net.vocab_size = static_cast<int>(vocab.size());
    net.max_len = cfg_.cohort.max_len;
    net.film_width = static_cast<int>(prof.width());
    ScheduleParams schedule = cfg_.schedule;
    schedule.lambda = prof.lambda;
    TrainConfig tc = cfg_.train;
    tc.seed = cfg_.seed;
    tc.workers = cfg_.workers;

    const fs::path ckpt_path = dir_ / "ckpt/checkpoint.json";
    std::optional<Checkpoint> from;
    if (resume) from = load_checkpoint(need("ckpt/checkpoint.json", "train").string());
    TrainHooks hooks;
    hooks.checkpoint_every = cfg_.checkpoint_every;
    hooks.on_checkpoint = [&](const Checkpoint& c) {
        fs::create_directories(ckpt_path.parent_path());
        save_checkpoint(c, ckpt_path.string());
    };
    const auto result = kgsynth::train(data, prof, schedule, net, tc, hooks, std::move(from));

    fs::create_directories(ckpt_path.parent_path());
    save_checkpoint(result.checkpoint, ckpt_path.string());
    {
        auto out = open_out(dir_ / "ckpt/loss.csv");
        write_loss_csv(out, result.trace, 1);
    }
    write_manifest("ckpt", "train", {"cohort/vocab.json", "cohort/train.jsonl", "profile/profile.json"},
                   {"ckpt/checkpoint.json", "ckpt/loss.csv"}, start);

    Metrics m{{"steps", std::to_string(result.checkpoint.step())},
              {"parameters", std::to_string(result.checkpoint.params.values.size())}};
    if (!result.trace.empty()) {
        const std::size_t w = std::min<std::size_t>(50, result.trace.size());
        m.push_back({"loss_initial", fmt(window_mean(result.trace, 0, w))});
        m.push_back({"loss_final", fmt(window_mean(result.trace, result.trace.size() - w, result.trace.size()))});
    }
    return m;
}

Metrics Pipeline::sample() {
    const auto start = std::chrono::steady_clock::now();
    const TokenVocab vocab = TokenVocab::from_json(read_json(need("cohort/vocab.json", "simulate")));
    const auto records = read_trajectories(need("cohort/train.jsonl", "simulate"), vocab);
    const auto prof = MetaPathProfile::from_json(read_json(need("profile/profile.json", "profile")));
    const auto ckpt = load_checkpoint(need("ckpt/checkpoint.json", "train").string());

    SamplerConfig sc = cfg_.sample;
    sc.seed = cfg_.seed;
    sc.workers = cfg_.workers;
    SampleStats stats;
    const auto synth =
        sample_trajectories(ckpt, prof, fit_gap_distribution(records), fit_length_distribution(records), sc, &stats);
    write_trajectories(dir_ / "synth/synthetic.jsonl", synth, vocab);
    write_manifest("synth", "sample",
                   {"cohort/vocab.json", "cohort/train.jsonl", "profile/profile.json", "ckpt/checkpoint.json"},
                   {"synth/synthetic.jsonl"}, start);
    const double rate = stats.rows ? static_cast<double>(stats.unique_rows) / static_cast<double>(stats.rows) : 1.0;
    return {{"trajectories", std::to_string(synth.size())}, {"rows", std::to_string(stats.rows)},
            {"unique_decode_rate", fmt(rate)}};
}

namespace {

Metrics report_metrics(const EvalReport& r) {
    return {{"cat_mmd2", fmt(r.cat.value)},
            {"cat_sigma", fmt(r.cat.sigma)},
            {"cont_mmd2", fmt(r.cont.value)},
            {"cont_sigma", fmt(r.cont.sigma)},
            {"delta_bal_acc", fmt(r.tstr.delta)},
            {"bal_acc_real", fmt(r.tstr.bal_acc_real)},
            {"bal_acc_synth", fmt(r.tstr.bal_acc_synth)},
            {"mia_domias_auroc", fmt(r.mia.at("domias"))},
            {"mia_shadow_auroc", fmt(r.mia.at("shadow"))}};
}

}  // namespace

Metrics Pipeline::evaluate() {
    const auto start = std::chrono::steady_clock::now();
    const TokenVocab vocab = TokenVocab::from_json(read_json(need("cohort/vocab.json", "simulate")));
    CohortSplit split;
    split.train = read_trajectories(need("cohort/train.jsonl", "simulate"), vocab);
    split.valid = read_trajectories(need("cohort/valid.jsonl", "simulate"), vocab);
    split.test = read_trajectories(need("cohort/test.jsonl", "simulate"), vocab);
    const auto synth = read_trajectories(need("synth/synthetic.jsonl", "sample"), vocab);
    const auto prof = MetaPathProfile::from_json(read_json(need("profile/profile.json", "profile")));

    EvalConfig ec = cfg_.eval;
    ec.max_len = cfg_.cohort.max_len;
    EvalReport r = evaluate_synthetic(split, synth, vocab, ec, cfg_.seed);
    r.lambda = prof.lambda;
    r.config_digest = cfg_.digest();
    write_json(dir_ / "eval/report.json", r.to_json());
    const Metrics m = report_metrics(r);
    {
        auto out = open_out(dir_ / "eval/report.txt");
        for (const auto& [k, v] : m) out << std::left << std::setw(20) << k << v << '\n';
    }
    write_manifest("eval", "evaluate",
                   {"cohort/vocab.json", "cohort/train.jsonl", "cohort/valid.jsonl", "cohort/test.jsonl",
                    "profile/profile.json", "synth/synthetic.jsonl"},
                   {"eval/report.json", "eval/report.txt"}, start);
    return m;
}

Metrics Pipeline::sweep() {
    const auto start = std::chrono::steady_clock::now();
    SweepInputs in;
    const TokenVocab vocab = TokenVocab::from_json(read_json(need("cohort/vocab.json", "simulate")));
    in.split.train = read_trajectories(need("cohort/train.jsonl", "simulate"), vocab);
    in.split.valid = read_trajectories(need("cohort/valid.jsonl", "simulate"), vocab);
    in.split.test = read_trajectories(need("cohort/test.jsonl", "simulate"), vocab);
    in.profile = MetaPathProfile::from_json(read_json(need("profile/profile.json", "profile")));
    in.schedule = cfg_.schedule;
    in.net = cfg_.net;
    in.net.vocab_size = static_cast<int>(vocab.size());
    in.net.max_len = cfg_.cohort.max_len;
    in.net.film_width = static_cast<int>(in.profile.width());
    in.train = cfg_.train;
    in.sample = cfg_.sample;
    in.eval = cfg_.eval;
    in.eval.max_len = cfg_.cohort.max_len;
    in.base_seed = cfg_.seed;
    in.config_digest = cfg_.digest();

    const auto table = lambda_sweep(in, cfg_.sweep.lambdas, cfg_.sweep.seeds, cfg_.workers);
    write_json(dir_ / "eval/sweep/sweep.json", table.to_json());
    {
        auto out = open_out(dir_ / "eval/sweep/sweep.csv");
        table.write_csv(out);
    }
    {
        auto out = open_out(dir_ / "eval/sweep/sweep.txt");
        table.write_text(out);
    }
    write_manifest("eval/sweep", "sweep",
                   {"cohort/vocab.json", "cohort/train.jsonl", "cohort/valid.jsonl", "cohort/test.jsonl",
                    "profile/profile.json"},
                   {"eval/sweep/sweep.json", "eval/sweep/sweep.csv", "eval/sweep/sweep.txt"}, start);

    Metrics m;
    for (const auto& row : table.rows) {
        const std::string l = fmt(row.lambda);
        m.push_back({"cat_mmd2_mean[lambda=" + l + "]", fmt(row.cat_mean())});
        m.push_back({"mia_auroc_mean[lambda=" + l + "]", fmt(row.mia_mean())});
    }
    m.push_back({"spearman_lambda_cat_mmd2", fmt(table.spearman_lambda_cat)});
    m.push_back({"spearman_lambda_mia_auroc", fmt(table.spearman_lambda_mia)});
    return m;
}

}  // namespace kgsynth
