#include "kgsynth/kg_store.hpp"

#include <algorithm>
#include <cstdio>
#include <deque>
#include <istream>
#include <ostream>
#include <sstream>

#include "kgsynth/error.hpp"
#include "kgsynth/rng.hpp"

namespace kgsynth {

namespace {

constexpr std::array<std::string_view, 6> kKindNames = {
    "Disease", "Phenotype", "Drug", "LabTest", "AdverseEvent", "Gene"};
constexpr std::array<std::string_view, 6> kKindPrefixes = {"DIS", "PHE", "DRG",
                                                           "LAB", "AE",  "GEN"};

std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (true) {
        const auto tab = line.find('\t', pos);
        if (tab == std::string_view::npos) {
            out.push_back(line.substr(pos));
            return out;
        }
        out.push_back(line.substr(pos, tab - pos));
        pos = tab + 1;
    }
}

std::string_view strip_cr(std::string_view s) {
    if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
    return s;
}

bool skippable(std::string_view line) {
    return line.empty() || line.front() == '#';
}

}  // namespace

std::string_view to_string(NodeKind kind) { return kKindNames[static_cast<std::size_t>(kind)]; }

std::optional<NodeKind> parse_node_kind(std::string_view text) {
    for (std::size_t i = 0; i < kKindNames.size(); ++i)
        if (kKindNames[i] == text) return static_cast<NodeKind>(i);
    return std::nullopt;
}

std::optional<Day> parse_iso_date(std::string_view text) {
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
    int y = 0;
    unsigned m = 0, d = 0;
    for (std::size_t i : {0u, 1u, 2u, 3u, 5u, 6u, 8u, 9u})
        if (text[i] < '0' || text[i] > '9') return std::nullopt;
    y = std::stoi(std::string(text.substr(0, 4)));
    m = static_cast<unsigned>(std::stoi(std::string(text.substr(5, 2))));
    d = static_cast<unsigned>(std::stoi(std::string(text.substr(8, 2))));
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                          std::chrono::day{d}};
    if (!ymd.ok()) return std::nullopt;
    return Day{ymd};
}

std::string format_iso_date(Day day) {
    const std::chrono::year_month_day ymd{day};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

// --- KnowledgeGraph -------------------------------------------------------

std::optional<NodeIndex> KnowledgeGraph::find(std::string_view id) const {
    const auto it = by_id_.find(std::string(id));
    if (it == by_id_.end()) return std::nullopt;
    return it->second;
}

NodeIndex KnowledgeGraph::index_of(std::string_view id) const {
    if (auto i = find(id)) return *i;
    throw NotFoundError("node '" + std::string(id) + "' not in graph");
}

std::optional<RelationIndex> KnowledgeGraph::find_relation(std::string_view name) const {
    for (std::size_t r = 0; r < relations_.size(); ++r)
        if (relations_[r] == name) return static_cast<RelationIndex>(r);
    return std::nullopt;
}

std::span<const EdgeIndex> KnowledgeGraph::out_edges(NodeIndex n) const {
    const std::size_t r = relations_.size();
    if (r == 0) return {};
    const auto lo = out_offsets_[n * r];
    const auto hi = out_offsets_[(n + 1) * r];
    return {out_index_.data() + lo, hi - lo};
}

std::span<const EdgeIndex> KnowledgeGraph::out_edges(NodeIndex n, RelationIndex rel) const {
    const std::size_t r = relations_.size();
    const auto lo = out_offsets_[n * r + rel];
    const auto hi = out_offsets_[n * r + rel + 1];
    return {out_index_.data() + lo, hi - lo};
}

std::span<const NodeIndex> KnowledgeGraph::neighbors(NodeIndex n) const {
    const auto lo = nbr_offsets_[n];
    const auto hi = nbr_offsets_[n + 1];
    return {nbr_index_.data() + lo, hi - lo};
}

void KnowledgeGraph::index() {
    const std::size_t n = nodes_.size();
    const std::size_t r = relations_.size();

    out_offsets_.assign(n * r + 1, 0);
    for (const auto& e : topo_) ++out_offsets_[e.src * r + e.relation + 1];
    for (std::size_t i = 1; i < out_offsets_.size(); ++i) out_offsets_[i] += out_offsets_[i - 1];
    out_index_.assign(topo_.size(), 0);
    {
        std::vector<std::uint32_t> fill(out_offsets_.begin(), out_offsets_.end() - 1);
        for (EdgeIndex e = 0; e < topo_.size(); ++e) {
            const auto slot = topo_[e].src * r + topo_[e].relation;
            out_index_[fill[slot]++] = e;
        }
    }

    std::vector<std::vector<NodeIndex>> nbrs(n);
    for (const auto& e : topo_) {
        if (e.src == e.dst) continue;
        nbrs[e.src].push_back(e.dst);
        nbrs[e.dst].push_back(e.src);
    }
    nbr_offsets_.assign(n + 1, 0);
    nbr_index_.clear();
    for (std::size_t i = 0; i < n; ++i) {
        auto& v = nbrs[i];
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
        nbr_index_.insert(nbr_index_.end(), v.begin(), v.end());
        nbr_offsets_[i + 1] = static_cast<std::uint32_t>(nbr_index_.size());
    }
}

// --- Builder --------------------------------------------------------------

void KnowledgeGraphBuilder::declare_relation(const std::string& name) {
    if (name.empty()) throw InvalidArgument("relation name must be non-empty");
    if (!has_relation(name)) g_.relations_.push_back(name);
}

bool KnowledgeGraphBuilder::has_relation(std::string_view name) const {
    return g_.find_relation(name).has_value();
}

bool KnowledgeGraphBuilder::has_node(std::string_view id) const {
    return g_.find(id).has_value();
}

void KnowledgeGraphBuilder::add_node(KgNode node) {
    if (node.id.empty()) throw InvalidArgument("node id must be non-empty");
    if (has_node(node.id)) throw InvalidArgument("duplicate node id '" + node.id + "'");
    const auto idx = static_cast<NodeIndex>(g_.nodes_.size());
    g_.by_id_.emplace(node.id, idx);
    g_.nodes_.push_back(std::move(node));
}

void KnowledgeGraphBuilder::add_edge(TypedEdge edge) {
    const auto src = g_.find(edge.src);
    if (!src) throw NotFoundError("edge source '" + edge.src + "' is not a declared node");
    const auto dst = g_.find(edge.dst);
    if (!dst) throw NotFoundError("edge target '" + edge.dst + "' is not a declared node");
    const auto rel = g_.find_relation(edge.relation);
    if (!rel) throw InvalidArgument("relation '" + edge.relation + "' is not declared");
    if (edge.validity && edge.validity->start > edge.validity->end)
        throw InvalidArgument("validity start after end on edge " + edge.src + "->" + edge.dst);

    const auto key = std::make_tuple(*src, *dst, *rel);
    if (auto it = edge_keys_.find(key); it != edge_keys_.end()) {
        auto& kept = g_.edges_[it->second];
        if (!kept.validity || !edge.validity) {
            kept.validity.reset();
        } else {
            kept.validity->start = std::min(kept.validity->start, edge.validity->start);
            kept.validity->end = std::max(kept.validity->end, edge.validity->end);
        }
        return;
    }
    const auto e = static_cast<EdgeIndex>(g_.edges_.size());
    edge_keys_.emplace(key, e);
    g_.topo_.push_back({*src, *dst, *rel});
    g_.edges_.push_back(std::move(edge));
}

KnowledgeGraph KnowledgeGraphBuilder::build() && {
    g_.index();
    edge_keys_.clear();
    return std::move(g_);
}

// --- File IO --------------------------------------------------------------

KnowledgeGraph load_edge_list(std::istream& edges, std::istream& nodes) {
    KnowledgeGraphBuilder b;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(nodes, line)) {
        ++lineno;
        const auto text = strip_cr(line);
        if (skippable(text)) continue;
        const auto f = split_tabs(text);
        if (f.size() != 3) throw ParseError("nodes", lineno, "expected 3 tab-separated fields");
        const auto kind = parse_node_kind(f[1]);
        if (!kind) throw ParseError("nodes", lineno, "unknown node kind '" + std::string(f[1]) + "'");
        if (f[0].empty()) throw ParseError("nodes", lineno, "empty node id");
        if (b.has_node(f[0]))
            throw ParseError("nodes", lineno, "duplicate node id '" + std::string(f[0]) + "'");
        b.add_node({std::string(f[0]), *kind, std::string(f[2])});
    }

    lineno = 0;
    bool in_header = true;
    while (std::getline(edges, line)) {
        ++lineno;
        const auto text = strip_cr(line);
        if (skippable(text)) continue;
        if (text.starts_with("!relation")) {
            if (!in_header) throw ParseError("edges", lineno, "relation declared after edge records");
            auto name = text.substr(9);
            while (!name.empty() && (name.front() == ' ' || name.front() == '\t')) name.remove_prefix(1);
            while (!name.empty() && (name.back() == ' ' || name.back() == '\t')) name.remove_suffix(1);
            if (name.empty()) throw ParseError("edges", lineno, "empty relation name");
            b.declare_relation(std::string(name));
            continue;
        }
        if (text.front() == '!') throw ParseError("edges", lineno, "unknown directive");
        in_header = false;
        const auto f = split_tabs(text);
        if (f.size() != 6) throw ParseError("edges", lineno, "expected 6 tab-separated fields");
        TypedEdge e{std::string(f[0]), std::string(f[1]), std::string(f[2]), std::string(f[3]), {}};
        const bool no_start = f[4] == "-";
        const bool no_end = f[5] == "-";
        if (no_start != no_end)
            throw ParseError("edges", lineno, "validity needs both start and end, or neither");
        if (!no_start) {
            const auto s = parse_iso_date(f[4]);
            const auto t = parse_iso_date(f[5]);
            if (!s || !t) throw ParseError("edges", lineno, "malformed ISO date");
            if (*s > *t) throw ParseError("edges", lineno, "validity start after end");
            e.validity = ValidityInterval{*s, *t};
        }
        if (!b.has_relation(e.relation))
            throw ParseError("edges", lineno, "undeclared relation '" + e.relation + "'");
        if (!b.has_node(e.src))
            throw ParseError("edges", lineno, "undeclared node '" + e.src + "'");
        if (!b.has_node(e.dst))
            throw ParseError("edges", lineno, "undeclared node '" + e.dst + "'");
        b.add_edge(std::move(e));
    }
    return std::move(b).build();
}

void write_node_file(const KnowledgeGraph& kg, std::ostream& out) {
    out << "# id\tkind\tlabel\n";
    for (const auto& n : kg.nodes()) out << n.id << '\t' << to_string(n.kind) << '\t' << n.label << '\n';
}

void write_edge_file(const KnowledgeGraph& kg, std::ostream& out) {
    for (const auto& r : kg.relations()) out << "!relation " << r << '\n';
    for (const auto& e : kg.edges()) {
        out << e.src << '\t' << e.dst << '\t' << e.relation << '\t' << e.provenance << '\t';
        if (e.validity)
            out << format_iso_date(e.validity->start) << '\t' << format_iso_date(e.validity->end);
        else
            out << "-\t-";
        out << '\n';
    }
}

// --- Subgraphs ------------------------------------------------------------

namespace {

KnowledgeGraph induced_subgraph(const KnowledgeGraph& kg, const std::vector<bool>& keep_node,
                                const std::vector<bool>& keep_edge) {
    KnowledgeGraphBuilder b;
    for (const auto& r : kg.relations()) b.declare_relation(r);
    for (NodeIndex i = 0; i < kg.node_count(); ++i)
        if (keep_node[i]) b.add_node(kg.node(i));
    for (EdgeIndex e = 0; e < kg.edge_count(); ++e)
        if (keep_edge[e] && keep_node[kg.edge_src(e)] && keep_node[kg.edge_dst(e)])
            b.add_edge(kg.edges()[e]);
    return std::move(b).build();
}

}  // namespace

KnowledgeGraph prune_to_neighborhood(const KnowledgeGraph& kg, std::string_view anchor, int max_hops) {
    if (max_hops < 0) throw InvalidArgument("max_hops must be non-negative");
    const NodeIndex a = kg.index_of(anchor);
    std::vector<int> dist(kg.node_count(), -1);
    std::deque<NodeIndex> queue{a};
    dist[a] = 0;
    while (!queue.empty()) {
        const auto u = queue.front();
        queue.pop_front();
        if (dist[u] >= max_hops) continue;
        for (const auto v : kg.neighbors(u)) {
            if (dist[v] >= 0) continue;
            dist[v] = dist[u] + 1;
            queue.push_back(v);
        }
    }
    std::vector<bool> keep(kg.node_count());
    for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = dist[i] >= 0;
    return induced_subgraph(kg, keep, std::vector<bool>(kg.edge_count(), true));
}

KnowledgeGraph filter_by_validity(const KnowledgeGraph& kg, Day reference) {
    std::vector<bool> keep_edge(kg.edge_count());
    for (EdgeIndex e = 0; e < kg.edge_count(); ++e) {
        const auto& v = kg.edges()[e].validity;
        keep_edge[e] = !v || v->contains(reference);
    }
    return induced_subgraph(kg, std::vector<bool>(kg.node_count(), true), keep_edge);
}

KgStats kg_stats(const KnowledgeGraph& kg) {
    KgStats s;
    s.nodes = kg.node_count();
    s.edges = kg.edge_count();
    for (auto k : kAllNodeKinds) s.kind_counts[k] = 0;
    for (const auto& n : kg.nodes()) ++s.kind_counts[n.kind];
    for (auto k : kAllNodeKinds)
        s.kind_shares[k] = s.nodes ? static_cast<double>(s.kind_counts[k]) / s.nodes : 0.0;
    for (const auto& r : kg.relations()) s.relation_counts[r] = 0;
    for (const auto& e : kg.edges()) ++s.relation_counts[e.relation];
    return s;
}

// --- Toy generator --------------------------------------------------------

KgGenConfig KgGenConfig::default_mix(std::size_t total_nodes, double gene_share) {
    if (gene_share < 0.0 || gene_share >= 1.0) throw InvalidArgument("gene_share must be in [0, 1)");
    // Shares of the unified graph's node inventory.
    const std::array<std::pair<NodeKind, double>, 5> shares = {{{NodeKind::Disease, 0.27},
                                                                {NodeKind::Phenotype, 0.18},
                                                                {NodeKind::Drug, 0.22},
                                                                {NodeKind::LabTest, 0.12},
                                                                {NodeKind::AdverseEvent, 0.21}}};
    KgGenConfig cfg;
    const auto genes = static_cast<std::size_t>(std::llround(gene_share * total_nodes));
    const std::size_t rest = total_nodes - genes;
    // Largest-remainder rounding so the counts sum to `rest` exactly.
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < shares.size(); ++i) {
        const double exact = shares[i].second * rest;
        const auto base = static_cast<std::size_t>(exact);
        cfg.counts[shares[i].first] = base;
        assigned += base;
        remainders.emplace_back(exact - base, i);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; assigned < rest; ++k, ++assigned) ++cfg.counts[shares[remainders[k].second].first];
    cfg.counts[NodeKind::Gene] = genes;

    cfg.relations = {
        {"has_phenotype", NodeKind::Disease, NodeKind::Phenotype, 0.02, "orphanet"},
        {"assoc_gene", NodeKind::Disease, NodeKind::Gene, 0.04, "gard"},
        {"treated_by", NodeKind::Disease, NodeKind::Drug, 0.015, "primekg"},
        {"diagnosed_by", NodeKind::Disease, NodeKind::LabTest, 0.03, "faers_mimic"},
        {"measured_by", NodeKind::Phenotype, NodeKind::LabTest, 0.015, "hpo"},
        {"targets", NodeKind::Gene, NodeKind::Drug, 0.02, "primekg"},
        {"monitored_by", NodeKind::Drug, NodeKind::LabTest, 0.01, "primekg"},
        {"causes_ae", NodeKind::Drug, NodeKind::AdverseEvent, 0.01, "faers"},
    };
    cfg.ae_flag_nodes = true;
    return cfg;
}

KnowledgeGraph generate_toy_kg(const KgGenConfig& config, std::uint64_t seed) {
    auto count_of = [&](NodeKind k) -> std::size_t {
        const auto it = config.counts.find(k);
        return it == config.counts.end() ? 0 : it->second;
    };
    for (const auto& r : config.relations) {
        if (r.density < 0.0 || r.density > 1.0)
            throw InvalidArgument("relation '" + r.name + "' density outside [0, 1]");
        if (count_of(r.src_kind) == 0 || count_of(r.dst_kind) == 0)
            throw InvalidArgument("relation '" + r.name + "' uses a node kind with zero count");
    }

    KnowledgeGraphBuilder b;
    std::map<NodeKind, std::vector<std::string>> ids;
    for (auto k : kAllNodeKinds) {
        const auto ki = static_cast<std::size_t>(k);
        for (std::size_t i = 0; i < count_of(k); ++i) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%s:%04zu", kKindPrefixes[ki].data(), i);
            std::string label = std::string(kKindNames[ki]) + " " + std::to_string(i);
            ids[k].push_back(buf);
            b.add_node({buf, k, std::move(label)});
        }
    }
    for (const auto& r : config.relations) b.declare_relation(r.name);

    Rng rng = substream(seed, Stream::KgGen);
    const Day epoch = Day{std::chrono::year{2000} / 1 / 1};
    auto draw_validity = [&]() {
        const auto start = epoch + std::chrono::days{static_cast<int>(uniform_index(rng, 7300))};
        const auto end = start + std::chrono::days{365 + static_cast<int>(uniform_index(rng, 3286))};
        return ValidityInterval{start, end};
    };

    std::vector<bool> disease_has_out(count_of(NodeKind::Disease), false);
    for (const auto& r : config.relations) {
        const auto& srcs = ids[r.src_kind];
        const auto& dsts = ids[r.dst_kind];
        for (std::size_t i = 0; i < srcs.size(); ++i) {
            for (std::size_t j = 0; j < dsts.size(); ++j) {
                if (r.src_kind == r.dst_kind && i == j) continue;
                if (uniform01(rng) >= r.density) continue;
                b.add_edge({srcs[i], dsts[j], r.name, r.provenance, draw_validity()});
                if (r.src_kind == NodeKind::Disease) disease_has_out[i] = true;
            }
        }
    }

    // Every disease gets at least one outgoing edge when some relation can
    // supply one.
    std::vector<const RelationSpec*> from_disease;
    for (const auto& r : config.relations)
        if (r.src_kind == NodeKind::Disease) from_disease.push_back(&r);
    if (!from_disease.empty()) {
        const auto& diseases = ids[NodeKind::Disease];
        for (std::size_t i = 0; i < diseases.size(); ++i) {
            if (disease_has_out[i]) continue;
            const auto& r = *from_disease[uniform_index(rng, from_disease.size())];
            const auto& dsts = ids[r.dst_kind];
            std::size_t j = uniform_index(rng, dsts.size());
            if (r.dst_kind == NodeKind::Disease && j == i) j = (j + 1) % dsts.size();
            if (dsts[j] == diseases[i]) continue;  // single-disease self relation
            b.add_edge({diseases[i], dsts[j], r.name, r.provenance, draw_validity()});
        }
    }

    if (config.ae_flag_nodes) {
        b.add_node({std::string(kAeNoneNode), NodeKind::AdverseEvent, "no adverse event"});
        b.add_node({std::string(kAeAnyNode), NodeKind::AdverseEvent, "any adverse event"});
        b.declare_relation("ae_class");
        for (const auto& ae : ids[NodeKind::AdverseEvent])
            b.add_edge({ae, std::string(kAeAnyNode), "ae_class", "derived", std::nullopt});
    }
    return std::move(b).build();
}

}  // namespace kgsynth
