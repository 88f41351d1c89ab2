#include "kgsynth/metapath.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "kgsynth/error.hpp"

namespace kgsynth {

namespace {

struct PathWalker {
    const KnowledgeGraph& kg;
    int max_len;
    std::vector<bool> on_path;
    std::vector<RelationIndex> rels;
    // Per end node, per relation-index sequence.
    std::map<NodeIndex, std::map<std::vector<RelationIndex>, std::uint64_t>> counts;

    void walk(NodeIndex u) {
        if (static_cast<int>(rels.size()) == max_len) return;
        for (const auto e : kg.out_edges(u)) {
            const auto v = kg.edge_dst(e);
            if (on_path[v]) continue;
            rels.push_back(kg.edge_relation(e));
            ++counts[v][rels];
            on_path[v] = true;
            walk(v);
            on_path[v] = false;
            rels.pop_back();
        }
    }
};

RelationSequence names_of(const KnowledgeGraph& kg, const std::vector<RelationIndex>& seq) {
    RelationSequence out;
    out.reserve(seq.size());
    for (auto r : seq) out.push_back(kg.relations()[r]);
    return out;
}

void check_len(int max_len) {
    if (max_len < 1) throw InvalidArgument("max_len must be at least 1");
}

}  // namespace

std::map<NodeIndex, std::map<RelationSequence, std::uint64_t>> enumerate_paths_from(
    const KnowledgeGraph& kg, std::string_view anchor, int max_len) {
    check_len(max_len);
    const auto a = kg.index_of(anchor);
    PathWalker w{kg, max_len, std::vector<bool>(kg.node_count(), false), {}, {}};
    w.on_path[a] = true;
    w.walk(a);
    std::map<NodeIndex, std::map<RelationSequence, std::uint64_t>> out;
    for (const auto& [node, by_seq] : w.counts)
        for (const auto& [seq, n] : by_seq) out[node][names_of(kg, seq)] += n;
    return out;
}

std::map<RelationSequence, std::uint64_t> pattern_features(const KnowledgeGraph& kg, std::string_view anchor,
                                                           std::string_view target, int max_len) {
    const auto t = kg.index_of(target);
    auto all = enumerate_paths_from(kg, anchor, max_len);
    auto it = all.find(t);
    if (it == all.end()) return {};
    return std::move(it->second);
}

std::uint64_t count_paths(const KnowledgeGraph& kg, std::string_view anchor, std::string_view target,
                          int max_len) {
    std::uint64_t total = 0;
    for (const auto& [seq, n] : pattern_features(kg, anchor, target, max_len)) total += n;
    return total;
}

double psi_max_for(double lambda) {
    if (lambda == 0.0) return std::numeric_limits<double>::infinity();
    return 1.0 / lambda - 1e-4;
}

namespace {

void check_lambda(double lambda) {
    if (!(lambda >= 0.0 && lambda < 1.0)) throw InvalidArgument("lambda must lie in [0, 1)");
}

// Fills psi_clipped from psi_raw according to lambda and the normalisation.
void apply_clipping(MetaPathProfile& p) {
    p.psi_max = psi_max_for(p.lambda);
    const auto v = p.psi_raw.size();
    p.psi_clipped.assign(v, 0.0);
    if (p.normalize == PsiNormalize::Log1pMax && p.lambda > 0.0) {
        const double top = p.psi_raw.empty() ? 0.0 : *std::max_element(p.psi_raw.begin(), p.psi_raw.end());
        if (top > 0.0) {
            const double denom = std::log1p(top);
            for (std::size_t i = 0; i < v; ++i)
                p.psi_clipped[i] = std::min(p.psi_max * std::log1p(p.psi_raw[i]) / denom, p.psi_max);
        }
        return;
    }
    for (std::size_t i = 0; i < v; ++i) p.psi_clipped[i] = std::min(p.psi_raw[i], p.psi_max);
}

}  // namespace

MetaPathProfile compute_profile(const KnowledgeGraph& kg, std::string_view anchor, const TokenVocab& vocab,
                                const ProfileOptions& options) {
    check_lambda(options.lambda);
    check_len(options.max_len);
    if (options.d_max < 1) throw InvalidArgument("d_max must be at least 1");

    std::vector<std::optional<NodeIndex>> token_nodes(vocab.size());
    for (TokenId v = 0; v < vocab.size(); ++v) {
        token_nodes[v] = kg.find(vocab.token(v).node_id);
        if (!token_nodes[v] && options.missing == MissingNode::Error)
            throw NotFoundError("vocabulary node '" + vocab.token(v).node_id + "' missing from graph");
    }

    const auto paths = enumerate_paths_from(kg, anchor, options.max_len);

    // Rank patterns by their total count over the vocabulary.
    std::map<RelationSequence, std::uint64_t> totals;
    for (TokenId v = 0; v < vocab.size(); ++v) {
        if (!token_nodes[v]) continue;
        const auto it = paths.find(*token_nodes[v]);
        if (it == paths.end()) continue;
        for (const auto& [seq, n] : it->second) totals[seq] += n;
    }
    std::vector<std::pair<RelationSequence, std::uint64_t>> ranked(totals.begin(), totals.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });

    MetaPathProfile p;
    p.anchor = std::string(anchor);
    p.lambda = options.lambda;
    p.max_len = options.max_len;
    p.normalize = options.normalize;
    p.vocab = vocab;

    const bool fold = ranked.size() > options.d_max;
    const std::size_t kept = fold ? options.d_max - 1 : ranked.size();
    std::map<RelationSequence, std::size_t> column;
    for (std::size_t c = 0; c < kept; ++c) {
        column[ranked[c].first] = c;
        p.pattern_index.push_back(ranked[c].first);
    }
    // A graph without any anchor paths still gets one (all-zero) column.
    if (fold || p.pattern_index.empty()) p.pattern_index.push_back({kOtherPattern});
    const std::size_t other = p.pattern_index.size() - 1;

    p.features = Matrix::Zero(static_cast<Eigen::Index>(vocab.size()),
                              static_cast<Eigen::Index>(p.pattern_index.size()));
    p.psi_raw.assign(vocab.size(), 0.0);
    for (TokenId v = 0; v < vocab.size(); ++v) {
        if (!token_nodes[v]) continue;
        const auto it = paths.find(*token_nodes[v]);
        if (it == paths.end()) continue;
        std::uint64_t total = 0;
        for (const auto& [seq, n] : it->second) {
            const auto c = column.find(seq);
            p.features(v, static_cast<Eigen::Index>(c == column.end() ? other : c->second)) +=
                static_cast<double>(n);
            total += n;
        }
        p.psi_raw[v] = static_cast<double>(total);
    }
    apply_clipping(p);
    return p;
}

MetaPathProfile with_lambda(const MetaPathProfile& profile, double lambda) {
    check_lambda(lambda);
    MetaPathProfile p = profile;
    p.lambda = lambda;
    apply_clipping(p);
    return p;
}

nlohmann::json MetaPathProfile::to_json() const {
    nlohmann::json j;
    j["format"] = "kgsynth.profile";
    j["version"] = kFormatVersion;
    j["anchor"] = anchor;
    j["lambda"] = lambda;
    j["psi_max"] = std::isinf(psi_max) ? nlohmann::json(nullptr) : nlohmann::json(psi_max);
    j["max_len"] = max_len;
    j["normalize"] = normalize == PsiNormalize::None ? "none" : "log1p_max";
    j["vocab"] = vocab.to_json();
    j["psi_raw"] = psi_raw;
    j["psi_clipped"] = psi_clipped;
    j["rows"] = features.rows();
    j["cols"] = features.cols();
    j["features"] = std::vector<double>(features.data(), features.data() + features.size());
    j["pattern_index"] = pattern_index;
    return j;
}

MetaPathProfile MetaPathProfile::from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "kgsynth.profile")
        throw InvalidArgument("not a meta-path profile document");
    if (j.at("version").get<int>() != kFormatVersion)
        throw InvalidArgument("unsupported profile version " + j.at("version").dump());
    MetaPathProfile p;
    p.anchor = j.at("anchor").get<std::string>();
    p.lambda = j.at("lambda").get<double>();
    p.psi_max = j.at("psi_max").is_null() ? std::numeric_limits<double>::infinity()
                                          : j.at("psi_max").get<double>();
    p.max_len = j.at("max_len").get<int>();
    p.normalize = j.at("normalize").get<std::string>() == "log1p_max" ? PsiNormalize::Log1pMax
                                                                     : PsiNormalize::None;
    p.vocab = TokenVocab::from_json(j.at("vocab"));
    p.psi_raw = j.at("psi_raw").get<std::vector<double>>();
    p.psi_clipped = j.at("psi_clipped").get<std::vector<double>>();
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto flat = j.at("features").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(flat.size()) != rows * cols || rows != static_cast<Eigen::Index>(p.psi_raw.size()))
        throw InvalidArgument("profile feature matrix has inconsistent shape");
    p.features = Eigen::Map<const Matrix>(flat.data(), rows, cols);
    p.pattern_index = j.at("pattern_index").get<std::vector<RelationSequence>>();
    if (static_cast<Eigen::Index>(p.pattern_index.size()) != cols)
        throw InvalidArgument("profile pattern index does not match feature width");
    return p;
}

}  // namespace kgsynth
