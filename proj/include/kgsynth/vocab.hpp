#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace kgsynth {

enum class Field : std::uint8_t { Lab, Med, AEFlag };

std::string_view to_string(Field f);
std::optional<Field> parse_field(std::string_view text);

using TokenId = std::uint32_t;

struct Token {
    std::string name;
    Field field;
    std::string node_id;

    friend bool operator==(const Token&, const Token&) = default;
};

// Ordered token list; ids are positions. The AE block holds exactly two
// tokens: the first means "no flag", the second "flag set".
class TokenVocab {
public:
    TokenVocab() = default;
    explicit TokenVocab(std::vector<Token> tokens);

    std::size_t size() const { return tokens_.size(); }
    const Token& token(TokenId id) const { return tokens_.at(id); }
    const std::vector<Token>& tokens() const { return tokens_; }

    std::span<const TokenId> block(Field f) const { return blocks_[static_cast<std::size_t>(f)]; }
    TokenId ae_absent() const { return blocks_[2][0]; }
    TokenId ae_present() const { return blocks_[2][1]; }

    std::optional<TokenId> find(std::string_view name) const;

    nlohmann::json to_json() const;
    static TokenVocab from_json(const nlohmann::json& j);

    friend bool operator==(const TokenVocab& a, const TokenVocab& b) { return a.tokens_ == b.tokens_; }

private:
    std::vector<Token> tokens_;
    std::vector<TokenId> blocks_[3];
};

}  // namespace kgsynth
