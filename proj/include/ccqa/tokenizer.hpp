#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ccqa {

// Model/metric tokenizer. Whitespace separates; a literal ``` is one token;
// every other punctuation byte is a single-character token; identifier runs
// ([A-Za-z0-9_] plus any non-ASCII byte) stay whole. Case is preserved.
std::vector<std::string> tokenize(std::string_view text);

// Retrieval tokenizer: lowercased alphanumeric runs, everything else splits.
std::vector<std::string> tokenize_lexical(std::string_view text);

struct Vocabulary {
    static constexpr int kBos = 0;
    static constexpr int kEos = 1;
    static constexpr int kUnk = 2;
    static constexpr int kPad = 3;
    static constexpr int kReserved = 4;

    std::vector<std::string> id_to_token;
    std::unordered_map<std::string, int> token_to_id;

    int size() const { return static_cast<int>(id_to_token.size()); }

    int lookup(const std::string& token) const {
        auto it = token_to_id.find(token);
        return it == token_to_id.end() ? kUnk : it->second;
    }

    std::vector<int> encode_tokens(const std::vector<std::string>& tokens) const;
    std::vector<int> encode(std::string_view text) const;

    // Tokens with corpus frequency >= min_freq, ordered by (freq desc, token
    // asc) after the four reserved ids.
    static Vocabulary build(const std::vector<std::string>& texts, int min_freq = 2);

    // Reconstructs the lookup map from id_to_token (checkpoint load path).
    static Vocabulary from_tokens(std::vector<std::string> id_to_token);
};

}  // namespace ccqa
