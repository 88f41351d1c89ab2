#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "kgsynth/kg_store.hpp"
#include "kgsynth/linalg.hpp"
#include "kgsynth/vocab.hpp"

namespace kgsynth {

// A meta-path pattern: the relation names along a path, in order.
using RelationSequence = std::vector<std::string>;

// Number of simple directed paths of length 1..max_len from anchor to target.
// Parallel edges with distinct relations are distinct paths.
std::uint64_t count_paths(const KnowledgeGraph& kg, std::string_view anchor, std::string_view target,
                          int max_len = 3);

// Same paths as count_paths, grouped by relation sequence.
std::map<RelationSequence, std::uint64_t> pattern_features(const KnowledgeGraph& kg,
                                                           std::string_view anchor,
                                                           std::string_view target, int max_len = 3);

// Single enumeration from the anchor: per reached node, per pattern, the
// number of simple paths. Node indices refer to `kg`.
std::map<NodeIndex, std::map<RelationSequence, std::uint64_t>> enumerate_paths_from(
    const KnowledgeGraph& kg, std::string_view anchor, int max_len = 3);

enum class PsiNormalize { None, Log1pMax };
enum class MissingNode { Error, ZeroScore };

struct ProfileOptions {
    double lambda = 0.0;
    int max_len = 3;
    std::size_t d_max = 64;
    PsiNormalize normalize = PsiNormalize::None;
    MissingNode missing = MissingNode::Error;
};

inline const std::string kOtherPattern = "*other*";

// psi_max for a guidance strength; +inf when lambda == 0.
double psi_max_for(double lambda);

struct MetaPathProfile {
    static constexpr int kFormatVersion = 1;

    std::string anchor;
    double lambda = 0.0;
    double psi_max = 0.0;
    int max_len = 3;
    PsiNormalize normalize = PsiNormalize::None;
    TokenVocab vocab;
    std::vector<double> psi_raw;      // simple-path counts
    std::vector<double> psi_clipped;  // schedule input
    Matrix features;                  // V x d per-pattern counts (Psi)
    std::vector<RelationSequence> pattern_index;  // d entries; {"*other*"} folds the tail

    std::size_t vocab_size() const { return psi_raw.size(); }
    std::size_t width() const { return pattern_index.size(); }

    nlohmann::json to_json() const;
    static MetaPathProfile from_json(const nlohmann::json& j);
};

// Scores every vocabulary token against the anchor. Columns of `features`
// are the observed relation sequences ordered by total count (ties by
// sequence), truncated to d_max - 1 plus an "other" column when more exist.
MetaPathProfile compute_profile(const KnowledgeGraph& kg, std::string_view anchor, const TokenVocab& vocab,
                                const ProfileOptions& options);

// Same profile with a different lambda; path counts are reused.
MetaPathProfile with_lambda(const MetaPathProfile& profile, double lambda);

}  // namespace kgsynth
