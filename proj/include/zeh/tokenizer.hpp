#pragma once

// Character-level tokenizer: one token per printable ascii character plus BOS
// and EOS. One character per token keeps "each digit is one token" true for
// every family.

#include <string>
#include <string_view>
#include <vector>

namespace zeh {

class Tokenizer {
  public:
    static constexpr int kBos = 0;
    static constexpr int kEos = 1;
    static constexpr char kFirstChar = ' ';   // 0x20
    static constexpr char kLastChar = '~';    // 0x7e

    static constexpr int vocab_size() { return 2 + (kLastChar - kFirstChar + 1); }  // 97

    static bool is_char_token(int id) { return id >= 2 && id < vocab_size(); }

    static int encode_char(char c);                       // throws on non-printable
    static char char_of(int id);                          // valid for char tokens only

    // Encodes every character; throws on characters outside the vocabulary.
    static std::vector<int> encode(std::string_view text, bool add_bos = false);

    // Renders char tokens back to text, skipping BOS and stopping at EOS.
    static std::string decode(const std::vector<int>& tokens);

    // Single-token display: the character, or "<bos>"/"<eos>".
    static std::string token_text(int id);
};

}  // namespace zeh
