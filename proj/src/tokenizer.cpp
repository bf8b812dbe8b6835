#include "zeh/tokenizer.hpp"

#include "zeh/error.hpp"

namespace zeh {

int Tokenizer::encode_char(char c) {
    if (c < kFirstChar || c > kLastChar)
        throw ConfigError("character code " + std::to_string(static_cast<int>(c)) +
                          " is outside the tokenizer vocabulary");
    return 2 + (c - kFirstChar);
}

char Tokenizer::char_of(int id) {
    return static_cast<char>(kFirstChar + (id - 2));
}

std::vector<int> Tokenizer::encode(std::string_view text, bool add_bos) {
    std::vector<int> out;
    out.reserve(text.size() + (add_bos ? 1 : 0));
    if (add_bos) out.push_back(kBos);
    for (char c : text) out.push_back(encode_char(c));
    return out;
}

std::string Tokenizer::decode(const std::vector<int>& tokens) {
    std::string out;
    out.reserve(tokens.size());
    for (int id : tokens) {
        if (id == kEos) break;
        if (is_char_token(id)) out += char_of(id);
    }
    return out;
}

std::string Tokenizer::token_text(int id) {
    if (id == kBos) return "<bos>";
    if (id == kEos) return "<eos>";
    if (is_char_token(id)) return std::string(1, char_of(id));
    return "<invalid:" + std::to_string(id) + ">";
}

}  // namespace zeh
