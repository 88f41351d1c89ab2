#pragma once

// Shared fixtures and independent oracles for the test suites.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "kgsynth/cohort_sim.hpp"
#include "kgsynth/kg_store.hpp"
#include "kgsynth/metapath.hpp"
#include "kgsynth/trainer.hpp"
#include "kgsynth/trajectory.hpp"
#include "kgsynth/vocab.hpp"

namespace testing {

using namespace kgsynth;

inline std::string nid(int i) { return "N" + std::to_string(i); }

// Random multigraph over `n` nodes with kinds cycling through every NodeKind.
inline KnowledgeGraph random_graph(std::mt19937_64& rng, int n, int relations, int edges) {
    KnowledgeGraphBuilder b;
    for (int r = 0; r < relations; ++r) b.declare_relation("r" + std::to_string(r));
    for (int i = 0; i < n; ++i) b.add_node({nid(i), kAllNodeKinds[i % kAllNodeKinds.size()], "node " + std::to_string(i)});
    std::uniform_int_distribution<int> pick(0, n - 1), rel(0, relations - 1);
    for (int e = 0; e < edges; ++e) {
        int s = pick(rng), d = pick(rng);
        if (s == d) continue;
        b.add_edge({nid(s), nid(d), "r" + std::to_string(rel(rng)), "test", std::nullopt});
    }
    return std::move(b).build();
}

// Exhaustive enumeration of simple directed paths of 1..max_len edges from
// `anchor`, keyed by (end node id, relation sequence), straight off the edge list.
inline std::map<std::pair<std::string, std::vector<std::string>>, std::uint64_t> dfs_oracle(
    const KnowledgeGraph& kg, const std::string& anchor, int max_len) {
    std::map<std::pair<std::string, std::vector<std::string>>, std::uint64_t> out;
    std::vector<std::string> visited{anchor};
    std::vector<std::string> rels;
    auto rec = [&](auto&& self, const std::string& at) -> void {
        if (static_cast<int>(rels.size()) == max_len) return;
        for (const auto& e : kg.edges()) {
            if (e.src != at) continue;
            if (std::find(visited.begin(), visited.end(), e.dst) != visited.end()) continue;
            visited.push_back(e.dst);
            rels.push_back(e.relation);
            out[{e.dst, rels}] += 1;
            self(self, e.dst);
            rels.pop_back();
            visited.pop_back();
        }
    };
    rec(rec, anchor);
    return out;
}

// Undirected BFS distances by repeated scans of the edge list.
inline std::set<std::string> bfs_oracle(const KnowledgeGraph& kg, const std::string& anchor, int hops) {
    std::set<std::string> seen{anchor}, frontier{anchor};
    for (int h = 0; h < hops; ++h) {
        std::set<std::string> next;
        for (const auto& e : kg.edges()) {
            if (frontier.count(e.src) && !seen.count(e.dst)) next.insert(e.dst);
            if (frontier.count(e.dst) && !seen.count(e.src)) next.insert(e.src);
        }
        seen.insert(next.begin(), next.end());
        frontier = next;
    }
    return seen;
}

// Vocabulary with labs L0.., meds M0.. and the two AE tokens; node ids equal names.
inline TokenVocab small_vocab(int labs, int meds) {
    std::vector<Token> t;
    for (int i = 0; i < labs; ++i) t.push_back({"L" + std::to_string(i), Field::Lab, "L" + std::to_string(i)});
    for (int i = 0; i < meds; ++i) t.push_back({"M" + std::to_string(i), Field::Med, "M" + std::to_string(i)});
    t.push_back({"AE:absent", Field::AEFlag, "AE:NONE"});
    t.push_back({"AE:present", Field::AEFlag, "AE:ANY"});
    return TokenVocab(std::move(t));
}

inline Trajectory random_record(std::mt19937_64& rng, const TokenVocab& vocab, int max_events, std::int64_t id) {
    std::uniform_int_distribution<int> len(0, max_events);
    const auto labs = vocab.block(Field::Lab);
    const auto meds = vocab.block(Field::Med);
    std::uniform_int_distribution<std::size_t> li(0, labs.size() - 1), mi(0, meds.size() - 1);
    std::bernoulli_distribution ae(0.2);
    std::uniform_real_distribution<double> gap(0.5, 40.0);
    Trajectory r{id, {}};
    double t = gap(rng);
    const int n = len(rng);
    for (int i = 0; i < n; ++i) {
        r.events.push_back({t, labs[li(rng)], meds[mi(rng)], ae(rng)});
        t += gap(rng);
    }
    return r;
}

inline double max_abs(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

// Disease reaching the most nodes by meta-paths, ties to the lowest id.
inline std::string busiest_disease(const KnowledgeGraph& kg, int max_len = 3) {
    std::string best;
    std::size_t reach = 0;
    for (const auto& n : kg.nodes()) {
        if (n.kind != NodeKind::Disease) continue;
        const auto r = enumerate_paths_from(kg, n.id, max_len).size();
        if (best.empty() || r > reach) {
            best = n.id;
            reach = r;
        }
    }
    return best;
}

// A complete small scenario: graph, vocabulary, simulated cohort and profile.
struct World {
    KnowledgeGraph kg;
    std::string anchor;
    TokenVocab vocab;
    CohortConfig sim;
    CohortSplit split;
    MetaPathProfile profile;
    int max_len = 8;

    std::vector<TrajectoryTensor> encoded_train() const {
        std::vector<TrajectoryTensor> out;
        for (const auto& r : split.train) out.push_back(encode_record(r, vocab, max_len));
        return out;
    }
};

inline World make_world(std::size_t kg_nodes, int labs, int meds, int patients, double lambda, std::uint64_t seed,
                        int max_len = 8) {
    World w;
    w.max_len = max_len;
    w.kg = generate_toy_kg(KgGenConfig::default_mix(kg_nodes), seed);
    w.anchor = busiest_disease(w.kg);
    w.vocab = build_vocab(w.kg, w.anchor, labs, meds);
    w.sim.anchor = w.anchor;
    w.sim.n_patients = patients;
    w.sim.seed = seed;
    w.split = split_cohort(simulate_cohort(w.kg, w.vocab, w.sim));
    ProfileOptions opt;
    opt.lambda = lambda;
    opt.d_max = 8;
    opt.missing = MissingNode::ZeroScore;
    w.profile = compute_profile(prune_to_neighborhood(w.kg, w.anchor, 3), w.anchor, w.vocab, opt);
    return w;
}

inline NetConfig small_net(const World& w) {
    NetConfig n;
    n.vocab_size = static_cast<int>(w.vocab.size());
    n.max_len = w.max_len;
    n.hidden = 16;
    n.blocks = 1;
    n.heads = 2;
    n.film_width = static_cast<int>(w.profile.width());
    return n;
}

}  // namespace testing
