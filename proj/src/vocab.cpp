#include "kgsynth/vocab.hpp"

#include <set>

#include "kgsynth/error.hpp"

namespace kgsynth {

std::string_view to_string(Field f) {
    switch (f) {
        case Field::Lab: return "Lab";
        case Field::Med: return "Med";
        case Field::AEFlag: return "AEFlag";
    }
    return "?";
}

std::optional<Field> parse_field(std::string_view text) {
    if (text == "Lab") return Field::Lab;
    if (text == "Med") return Field::Med;
    if (text == "AEFlag") return Field::AEFlag;
    return std::nullopt;
}

TokenVocab::TokenVocab(std::vector<Token> tokens) : tokens_(std::move(tokens)) {
    std::set<std::string_view> names;
    for (TokenId i = 0; i < tokens_.size(); ++i) {
        const auto& t = tokens_[i];
        if (t.name.empty() || t.node_id.empty())
            throw InvalidArgument("token " + std::to_string(i) + " needs a name and a node id");
        if (!names.insert(t.name).second) throw InvalidArgument("duplicate token name '" + t.name + "'");
        blocks_[static_cast<std::size_t>(t.field)].push_back(i);
    }
    if (blocks_[0].empty() || blocks_[1].empty())
        throw InvalidArgument("vocabulary needs at least one Lab and one Med token");
    if (blocks_[2].size() != 2)
        throw InvalidArgument("vocabulary needs exactly two AEFlag tokens (absent, present)");
}

std::optional<TokenId> TokenVocab::find(std::string_view name) const {
    for (TokenId i = 0; i < tokens_.size(); ++i)
        if (tokens_[i].name == name) return i;
    return std::nullopt;
}

nlohmann::json TokenVocab::to_json() const {
    auto arr = nlohmann::json::array();
    for (const auto& t : tokens_)
        arr.push_back({{"name", t.name}, {"field", to_string(t.field)}, {"node", t.node_id}});
    return arr;
}

TokenVocab TokenVocab::from_json(const nlohmann::json& j) {
    std::vector<Token> tokens;
    for (const auto& e : j) {
        const auto f = parse_field(e.at("field").get<std::string>());
        if (!f) throw InvalidArgument("unknown token field " + e.at("field").dump());
        tokens.push_back({e.at("name").get<std::string>(), *f, e.at("node").get<std::string>()});
    }
    return TokenVocab(std::move(tokens));
}

}  // namespace kgsynth
