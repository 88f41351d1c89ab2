#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace kgsynth {

enum class NodeKind : std::uint8_t { Disease, Phenotype, Drug, LabTest, AdverseEvent, Gene };

inline constexpr std::array<NodeKind, 6> kAllNodeKinds = {
    NodeKind::Disease, NodeKind::Phenotype,    NodeKind::Drug,
    NodeKind::LabTest, NodeKind::AdverseEvent, NodeKind::Gene};

std::string_view to_string(NodeKind kind);
std::optional<NodeKind> parse_node_kind(std::string_view text);

struct KgNode {
    std::string id;
    NodeKind kind = NodeKind::Disease;
    std::string label;

    friend bool operator==(const KgNode&, const KgNode&) = default;
};

using Day = std::chrono::sys_days;

std::optional<Day> parse_iso_date(std::string_view text);
std::string format_iso_date(Day day);

struct ValidityInterval {
    Day start;
    Day end;

    bool contains(Day d) const { return start <= d && d <= end; }
    friend bool operator==(const ValidityInterval&, const ValidityInterval&) = default;
};

struct TypedEdge {
    std::string src;
    std::string dst;
    std::string relation;
    std::string provenance;
    std::optional<ValidityInterval> validity;

    friend bool operator==(const TypedEdge&, const TypedEdge&) = default;
};

using NodeIndex = std::uint32_t;
using EdgeIndex = std::uint32_t;
using RelationIndex = std::uint32_t;

// Immutable heterogeneous graph. Built through KnowledgeGraphBuilder or the
// loaders below; safe for concurrent reads.
class KnowledgeGraph {
public:
    KnowledgeGraph() = default;

    std::size_t node_count() const { return nodes_.size(); }
    std::size_t edge_count() const { return edges_.size(); }
    std::size_t relation_count() const { return relations_.size(); }

    const std::vector<KgNode>& nodes() const { return nodes_; }
    const std::vector<TypedEdge>& edges() const { return edges_; }
    const std::vector<std::string>& relations() const { return relations_; }

    const KgNode& node(NodeIndex i) const { return nodes_[i]; }
    std::optional<NodeIndex> find(std::string_view id) const;
    // Throws NotFoundError.
    NodeIndex index_of(std::string_view id) const;
    std::optional<RelationIndex> find_relation(std::string_view name) const;

    NodeIndex edge_src(EdgeIndex e) const { return topo_[e].src; }
    NodeIndex edge_dst(EdgeIndex e) const { return topo_[e].dst; }
    RelationIndex edge_relation(EdgeIndex e) const { return topo_[e].relation; }

    // Outgoing edges of n grouped by relation, then by edge order.
    std::span<const EdgeIndex> out_edges(NodeIndex n) const;
    // Per-relation adjacency: outgoing edges of n carrying relation r.
    std::span<const EdgeIndex> out_edges(NodeIndex n, RelationIndex r) const;
    // Distinct neighbours ignoring direction, ascending.
    std::span<const NodeIndex> neighbors(NodeIndex n) const;

private:
    friend class KnowledgeGraphBuilder;

    struct CompactEdge {
        NodeIndex src;
        NodeIndex dst;
        RelationIndex relation;
    };

    void index();

    std::vector<KgNode> nodes_;
    std::vector<TypedEdge> edges_;
    std::vector<std::string> relations_;
    std::vector<CompactEdge> topo_;
    std::unordered_map<std::string, NodeIndex> by_id_;
    std::vector<std::uint32_t> out_offsets_;  // size N*R + 1
    std::vector<EdgeIndex> out_index_;
    std::vector<std::uint32_t> nbr_offsets_;  // size N + 1
    std::vector<NodeIndex> nbr_index_;
};

class KnowledgeGraphBuilder {
public:
    // Idempotent.
    void declare_relation(const std::string& name);
    // Throws InvalidArgument on an empty or duplicate id.
    void add_node(KgNode node);
    // Merges duplicates of (src, dst, relation): earliest start, latest end;
    // an absent interval on either side means unbounded and wins.
    void add_edge(TypedEdge edge);

    bool has_node(std::string_view id) const;
    bool has_relation(std::string_view name) const;

    KnowledgeGraph build() &&;

private:
    KnowledgeGraph g_;
    std::map<std::tuple<NodeIndex, NodeIndex, RelationIndex>, EdgeIndex> edge_keys_;
};

// Node file: `id<TAB>kind<TAB>label`; edge file: `!relation <name>` header
// lines, then `src<TAB>dst<TAB>relation<TAB>provenance<TAB>start<TAB>end`.
// Both accept `#` comments and blank lines. Errors carry the line number.
KnowledgeGraph load_edge_list(std::istream& edges, std::istream& nodes);

void write_node_file(const KnowledgeGraph& kg, std::ostream& out);
void write_edge_file(const KnowledgeGraph& kg, std::ostream& out);

inline constexpr int kUnboundedHops = std::numeric_limits<int>::max();

// Keeps nodes within undirected distance max_hops of anchor and every edge
// between kept nodes. Relation declarations are carried over unchanged.
KnowledgeGraph prune_to_neighborhood(const KnowledgeGraph& kg, std::string_view anchor,
                                     int max_hops = 3);

// Drops edges whose validity interval excludes `reference`; edges without an
// interval are kept.
KnowledgeGraph filter_by_validity(const KnowledgeGraph& kg, Day reference);

struct KgStats {
    std::size_t nodes = 0;
    std::size_t edges = 0;
    std::map<NodeKind, std::size_t> kind_counts;
    std::map<NodeKind, double> kind_shares;
    std::map<std::string, std::size_t> relation_counts;
};

KgStats kg_stats(const KnowledgeGraph& kg);

struct RelationSpec {
    std::string name;
    NodeKind src_kind;
    NodeKind dst_kind;
    double density;  // independent probability per (src, dst) pair
    std::string provenance = "toy";
};

struct KgGenConfig {
    std::map<NodeKind, std::size_t> counts;
    std::vector<RelationSpec> relations;
    // Adds AE:NONE and AE:ANY adverse-event nodes plus an `ae_class` edge from
    // every other adverse-event node to AE:ANY.
    bool ae_flag_nodes = false;

    // Node counts split by the unified-graph shares (27/18/22/12/21 for
    // disease/phenotype/drug/lab/AE) after reserving gene_share for genes,
    // with the default relation set used by the pipeline.
    static KgGenConfig default_mix(std::size_t total_nodes, double gene_share = 0.05);
};

inline constexpr std::string_view kAeNoneNode = "AE:NONE";
inline constexpr std::string_view kAeAnyNode = "AE:ANY";

KnowledgeGraph generate_toy_kg(const KgGenConfig& config, std::uint64_t seed);

}  // namespace kgsynth
