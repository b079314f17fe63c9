#include "ccqa/tokenizer.hpp"

#include <algorithm>
#include <cctype>

#include "ccqa/errors.hpp"

namespace ccqa {

namespace {

inline bool is_space(unsigned char c) { return std::isspace(c) != 0; }

// Identifier bytes; anything >= 0x80 counts so UTF-8 sequences stay whole.
inline bool is_word(unsigned char c) {
    return std::isalnum(c) != 0 || c == '_' || c >= 0x80;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        const unsigned char c = static_cast<unsigned char>(text[i]);
        if (is_space(c)) {
            ++i;
            continue;
        }
        if (c == '`' && i + 2 < n && text[i + 1] == '`' && text[i + 2] == '`') {
            tokens.emplace_back("```");
            i += 3;
            continue;
        }
        if (is_word(c)) {
            std::size_t j = i + 1;
            while (j < n && is_word(static_cast<unsigned char>(text[j]))) ++j;
            tokens.emplace_back(text.substr(i, j - i));
            i = j;
            continue;
        }
        tokens.emplace_back(1, text[i]);
        ++i;
    }
    return tokens;
}

std::vector<std::string> tokenize_lexical(std::string_view text) {
    std::vector<std::string> tokens;
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        const unsigned char c = static_cast<unsigned char>(text[i]);
        if (std::isalnum(c) == 0 && c < 0x80) {
            ++i;
            continue;
        }
        std::size_t j = i;
        std::string tok;
        while (j < n) {
            const unsigned char d = static_cast<unsigned char>(text[j]);
            if (std::isalnum(d) == 0 && d < 0x80) break;
            tok.push_back(static_cast<char>(std::tolower(d)));
            ++j;
        }
        tokens.push_back(std::move(tok));
        i = j;
    }
    return tokens;
}

std::vector<int> Vocabulary::encode_tokens(const std::vector<std::string>& tokens) const {
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(lookup(t));
    return ids;
}

std::vector<int> Vocabulary::encode(std::string_view text) const {
    return encode_tokens(tokenize(text));
}

Vocabulary Vocabulary::build(const std::vector<std::string>& texts, int min_freq) {
    std::unordered_map<std::string, std::int64_t> freq;
    for (const auto& text : texts) {
        for (auto& tok : tokenize(text)) ++freq[tok];
    }
    std::vector<std::pair<std::string, std::int64_t>> kept;
    kept.reserve(freq.size());
    for (auto& [tok, count] : freq) {
        if (count >= min_freq) kept.emplace_back(tok, count);
    }
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    Vocabulary v;
    v.id_to_token = {"<bos>", "<eos>", "<unk>", "<pad>"};
    for (auto& [tok, count] : kept) v.id_to_token.push_back(std::move(tok));
    for (int i = 0; i < static_cast<int>(v.id_to_token.size()); ++i) {
        v.token_to_id.emplace(v.id_to_token[i], i);
    }
    return v;
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> id_to_token) {
    if (id_to_token.size() < kReserved) {
        throw DomainError("vocabulary must include the four reserved tokens");
    }
    Vocabulary v;
    v.id_to_token = std::move(id_to_token);
    for (int i = 0; i < static_cast<int>(v.id_to_token.size()); ++i) {
        v.token_to_id.emplace(v.id_to_token[i], i);
    }
    return v;
}

}  // namespace ccqa
