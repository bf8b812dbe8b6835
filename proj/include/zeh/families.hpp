#pragma once

// Problem families: exhaustive instance sets B_n, prompt rendering and exact
// brute-force oracles for multiplication, parity, balanced parentheses and
// graph coloring.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace zeh {

enum class FamilyId { Multiplication, Parity, BalancedParens, GraphColoring };

const char* family_tag(FamilyId f);                 // "mult" | "parity" | "parens" | "graphcolor"
std::optional<FamilyId> family_from_tag(const std::string& tag);

struct MultPayload {
    std::uint64_t a = 0, b = 0;
};
struct StringPayload {
    std::string s;  // over {'0','1'} or {'(',')'}
};
struct GraphPayload {
    int n = 0;
    std::vector<std::pair<int, int>> edges;  // u < v, lexicographically sorted
};

// One problem of a family at a given size. `key` is the canonical ascii
// serialization, unique within the family:
//   mult:<a>x<b>   parity:<bits>   parens:<string>   graphcolor:<n>:<u>-<v>,...
struct Instance {
    FamilyId family = FamilyId::Multiplication;
    int size = 0;
    std::variant<MultPayload, StringPayload, GraphPayload> payload;
    std::string key;
};

Instance make_mult_instance(std::uint64_t a, std::uint64_t b);
Instance make_string_instance(FamilyId family, std::string s);
Instance make_graph_instance(int n, std::vector<std::pair<int, int>> edges);

// Parses an instance key (with family prefix). Throws ConfigError on
// malformed keys; the message restates the key grammar.
Instance parse_instance_key(const std::string& key);

// Key with the "<family>:" prefix stripped, used for human-facing reports
// ("127x82", "11000").
std::string instance_display(const Instance& inst);

struct GoldAnswer {
    std::string text;
    std::optional<std::int64_t> numeric;  // present for mult/parity/graphcolor
};

struct PromptTemplate {
    std::string name;
    std::string instructions;
    std::string input_pattern;  // placeholders: {a},{b} mult; {s} strings; {g} graphs
    std::string answer_space;
};

// Enumeration guards. GraphColoring explodes as 2^(n(n-1)/2); string families
// as 2^n. Exceeding a cap raises ConfigError ("enumeration too large").
struct EnumLimits {
    int graphcolor_max_n = 7;
    int string_max_n = 30;
};

// B_n in deterministic canonical order:
//   mult    (n,1)..(n,n),(1,n)..(n-1,n)
//   strings lexicographic
//   graphs  edge-set bitmask ascending (bit i = i-th pair in lexicographic order)
std::vector<Instance> enumerate_bn(FamilyId family, int n, const EnumLimits& limits = {});

// Closed-form |B_n| (throws when it does not fit in 64 bits).
std::uint64_t bn_count(FamilyId family, int n);

GoldAnswer oracle(const Instance& inst);

// Deterministic placeholder substitution -> (instructions_text, input_text).
// Throws ConfigError on a placeholder/family mismatch.
std::pair<std::string, std::string> render_prompt(const PromptTemplate& tmpl, const Instance& inst);

// Built-in templates, keyed (family, name). The multiplication set carries
// the five prompt variants used for stability tables.
const std::vector<PromptTemplate>& builtin_templates(FamilyId family);
PromptTemplate find_template(FamilyId family, const std::string& name);

// Template config file: JSON array of {name, family, instructions,
// input_pattern[, answer_space]}. Entries override built-ins on name clash.
std::vector<PromptTemplate> load_templates_file(const std::string& path, FamilyId family);
PromptTemplate find_template_with_file(FamilyId family, const std::string& name,
                                       const std::string& templates_path);

}  // namespace zeh
