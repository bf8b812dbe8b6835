#include "zeh/families.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>

#include "json.hpp"
#include "zeh/error.hpp"

namespace zeh {

const char* family_tag(FamilyId f) {
    switch (f) {
        case FamilyId::Multiplication: return "mult";
        case FamilyId::Parity: return "parity";
        case FamilyId::BalancedParens: return "parens";
        case FamilyId::GraphColoring: return "graphcolor";
    }
    return "?";
}

std::optional<FamilyId> family_from_tag(const std::string& tag) {
    if (tag == "mult") return FamilyId::Multiplication;
    if (tag == "parity") return FamilyId::Parity;
    if (tag == "parens") return FamilyId::BalancedParens;
    if (tag == "graphcolor") return FamilyId::GraphColoring;
    return std::nullopt;
}

static const char* kKeyGrammar =
    "key grammar: mult:<a>x<b> | parity:<bits> | parens:<string of ( )> | "
    "graphcolor:<n>:<u>-<v>,...";

Instance make_mult_instance(std::uint64_t a, std::uint64_t b) {
    if (a < 1 || b < 1) throw ConfigError("mult operands must be >= 1");
    Instance inst;
    inst.family = FamilyId::Multiplication;
    inst.size = static_cast<int>(std::max(a, b));
    inst.payload = MultPayload{a, b};
    inst.key = "mult:" + std::to_string(a) + "x" + std::to_string(b);
    return inst;
}

Instance make_string_instance(FamilyId family, std::string s) {
    if (s.empty()) throw ConfigError("string instance must be non-empty");
    const char* allowed = family == FamilyId::Parity ? "01" : "()";
    for (char c : s) {
        if (c != allowed[0] && c != allowed[1])
            throw ConfigError(std::string("invalid character '") + c + "' in " +
                              family_tag(family) + " instance");
    }
    Instance inst;
    inst.family = family;
    inst.size = static_cast<int>(s.size());
    inst.key = std::string(family_tag(family)) + ":" + s;
    inst.payload = StringPayload{std::move(s)};
    return inst;
}

Instance make_graph_instance(int n, std::vector<std::pair<int, int>> edges) {
    if (n < 1) throw ConfigError("graph node count must be >= 1");
    for (auto& [u, v] : edges) {
        if (u > v) std::swap(u, v);
        if (u < 1 || v > n || u == v)
            throw ConfigError("graph edge endpoints must be distinct and in 1..n");
    }
    std::sort(edges.begin(), edges.end());
    if (std::adjacent_find(edges.begin(), edges.end()) != edges.end())
        throw ConfigError("duplicate graph edge");
    Instance inst;
    inst.family = FamilyId::GraphColoring;
    inst.size = n;
    std::string key = "graphcolor:" + std::to_string(n) + ":";
    for (std::size_t i = 0; i < edges.size(); ++i) {
        if (i) key += ',';
        key += std::to_string(edges[i].first) + "-" + std::to_string(edges[i].second);
    }
    inst.key = std::move(key);
    inst.payload = GraphPayload{n, std::move(edges)};
    return inst;
}

static std::uint64_t parse_u64(const std::string& s, const char* what) {
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size() || s.empty())
        throw ConfigError(std::string("bad ") + what + " '" + s + "'; " + kKeyGrammar);
    return v;
}

Instance parse_instance_key(const std::string& key) {
    auto colon = key.find(':');
    if (colon == std::string::npos)
        throw ConfigError("missing family prefix in key '" + key + "'; " + kKeyGrammar);
    auto fam = family_from_tag(key.substr(0, colon));
    if (!fam) throw ConfigError("unknown family in key '" + key + "'; " + kKeyGrammar);
    std::string rest = key.substr(colon + 1);
    switch (*fam) {
        case FamilyId::Multiplication: {
            auto x = rest.find('x');
            if (x == std::string::npos)
                throw ConfigError("mult key needs <a>x<b>: '" + key + "'; " + kKeyGrammar);
            return make_mult_instance(parse_u64(rest.substr(0, x), "operand"),
                                      parse_u64(rest.substr(x + 1), "operand"));
        }
        case FamilyId::Parity:
        case FamilyId::BalancedParens:
            try {
                return make_string_instance(*fam, rest);
            } catch (const ConfigError& e) {
                throw ConfigError(std::string(e.what()) + "; " + kKeyGrammar);
            }
        case FamilyId::GraphColoring: {
            auto colon2 = rest.find(':');
            if (colon2 == std::string::npos)
                throw ConfigError("graphcolor key needs <n>:<edges>: '" + key + "'; " + kKeyGrammar);
            int n = static_cast<int>(parse_u64(rest.substr(0, colon2), "node count"));
            std::vector<std::pair<int, int>> edges;
            std::string edge_part = rest.substr(colon2 + 1);
            std::size_t pos = 0;
            while (pos < edge_part.size()) {
                auto comma = edge_part.find(',', pos);
                std::string e = edge_part.substr(pos, comma == std::string::npos ? std::string::npos
                                                                                 : comma - pos);
                auto dash = e.find('-');
                if (dash == std::string::npos)
                    throw ConfigError("graph edge needs <u>-<v>: '" + key + "'; " + kKeyGrammar);
                edges.emplace_back(static_cast<int>(parse_u64(e.substr(0, dash), "endpoint")),
                                   static_cast<int>(parse_u64(e.substr(dash + 1), "endpoint")));
                if (comma == std::string::npos) break;
                pos = comma + 1;
            }
            return make_graph_instance(n, std::move(edges));
        }
    }
    throw ConfigError(kKeyGrammar);
}

std::string instance_display(const Instance& inst) {
    std::string prefix = std::string(family_tag(inst.family)) + ":";
    return inst.key.substr(prefix.size());
}

std::uint64_t bn_count(FamilyId family, int n) {
    switch (family) {
        case FamilyId::Multiplication:
            return 2ull * static_cast<std::uint64_t>(n) - 1;
        case FamilyId::Parity:
        case FamilyId::BalancedParens:
            if (n >= 64) throw ConfigError("|B_n| = 2^" + std::to_string(n) + " overflows");
            return 1ull << n;
        case FamilyId::GraphColoring: {
            int m = n * (n - 1) / 2;
            if (m >= 64) throw ConfigError("|B_n| = 2^" + std::to_string(m) + " overflows");
            return 1ull << m;
        }
    }
    return 0;
}

static void enumeration_too_large(FamilyId family, int n) {
    std::string count;
    if (family == FamilyId::GraphColoring) {
        count = "2^" + std::to_string(n * (n - 1) / 2);
    } else {
        count = "2^" + std::to_string(n);
    }
    throw ConfigError("enumeration too large: family " + std::string(family_tag(family)) +
                      ", n=" + std::to_string(n) + ", |B_n|=" + count);
}

std::vector<Instance> enumerate_bn(FamilyId family, int n, const EnumLimits& limits) {
    if (n < 1) throw ConfigError("instance size must be >= 1");
    std::vector<Instance> out;
    switch (family) {
        case FamilyId::Multiplication: {
            auto un = static_cast<std::uint64_t>(n);
            out.reserve(2 * n - 1);
            for (std::uint64_t b = 1; b <= un; ++b) out.push_back(make_mult_instance(un, b));
            for (std::uint64_t a = 1; a < un; ++a) out.push_back(make_mult_instance(a, un));
            break;
        }
        case FamilyId::Parity:
        case FamilyId::BalancedParens: {
            if (n > limits.string_max_n) enumeration_too_large(family, n);
            const char zero = family == FamilyId::Parity ? '0' : '(';
            const char one = family == FamilyId::Parity ? '1' : ')';
            out.reserve(1ull << n);
            for (std::uint64_t bits = 0; bits < (1ull << n); ++bits) {
                std::string s(n, zero);
                for (int i = 0; i < n; ++i)
                    if (bits >> (n - 1 - i) & 1) s[i] = one;
                out.push_back(make_string_instance(family, std::move(s)));
            }
            break;
        }
        case FamilyId::GraphColoring: {
            if (n > limits.graphcolor_max_n) enumeration_too_large(family, n);
            std::vector<std::pair<int, int>> pairs;
            for (int u = 1; u <= n; ++u)
                for (int v = u + 1; v <= n; ++v) pairs.emplace_back(u, v);
            const std::uint64_t total = 1ull << pairs.size();
            out.reserve(total);
            for (std::uint64_t mask = 0; mask < total; ++mask) {
                std::vector<std::pair<int, int>> edges;
                for (std::size_t i = 0; i < pairs.size(); ++i)
                    if (mask >> i & 1) edges.push_back(pairs[i]);
                out.push_back(make_graph_instance(n, std::move(edges)));
            }
            break;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Oracles
// ---------------------------------------------------------------------------

static std::string u128_to_string(unsigned __int128 v) {
    if (v == 0) return "0";
    std::string s;
    while (v > 0) {
        s += static_cast<char>('0' + static_cast<int>(v % 10));
        v /= 10;
    }
    std::reverse(s.begin(), s.end());
    return s;
}

// Smallest k such that the graph is k-colorable, by backtracking. Vertices
// are colored in order; a new color is only opened one past the current max
// to prune color-permutation symmetry.
static bool k_colorable(const GraphPayload& g, int k, std::vector<int>& color, int v) {
    if (v == g.n) return true;
    int max_used = 0;
    for (int u = 0; u < v; ++u) max_used = std::max(max_used, color[u]);
    int limit = std::min(k, max_used + 1);
    for (int c = 1; c <= limit; ++c) {
        bool ok = true;
        for (auto [a, b] : g.edges) {
            int other = -1;
            if (a - 1 == v) other = b - 1;
            else if (b - 1 == v) other = a - 1;
            if (other >= 0 && other < v && color[other] == c) {
                ok = false;
                break;
            }
        }
        if (ok) {
            color[v] = c;
            if (k_colorable(g, k, color, v + 1)) return true;
            color[v] = 0;
        }
    }
    return false;
}

GoldAnswer oracle(const Instance& inst) {
    switch (inst.family) {
        case FamilyId::Multiplication: {
            const auto& p = std::get<MultPayload>(inst.payload);
            unsigned __int128 prod = static_cast<unsigned __int128>(p.a) * p.b;
            std::string text = u128_to_string(prod);
            std::optional<std::int64_t> numeric;
            if (prod <= static_cast<unsigned __int128>(INT64_MAX))
                numeric = static_cast<std::int64_t>(prod);
            return {text, numeric};
        }
        case FamilyId::Parity: {
            const auto& p = std::get<StringPayload>(inst.payload);
            int ones = static_cast<int>(std::count(p.s.begin(), p.s.end(), '1'));
            int parity = ones % 2;
            return {std::to_string(parity), parity};
        }
        case FamilyId::BalancedParens: {
            const auto& p = std::get<StringPayload>(inst.payload);
            long depth = 0;
            bool ok = true;
            for (char c : p.s) {
                depth += c == '(' ? 1 : -1;
                if (depth < 0) {
                    ok = false;
                    break;
                }
            }
            ok = ok && depth == 0;
            return {ok ? "Yes" : "No", std::nullopt};
        }
        case FamilyId::GraphColoring: {
            const auto& g = std::get<GraphPayload>(inst.payload);
            for (int k = 1; k <= g.n; ++k) {
                std::vector<int> color(g.n, 0);
                if (k_colorable(g, k, color, 0))
                    return {std::to_string(k), k};
            }
            return {std::to_string(g.n), g.n};  // unreachable: n colors always suffice
        }
    }
    throw ConfigError("invalid instance family");
}

// ---------------------------------------------------------------------------
// Prompt rendering
// ---------------------------------------------------------------------------

static std::string graph_input_text(const GraphPayload& g) {
    std::string s = "n=" + std::to_string(g.n) + ", edges={";
    for (std::size_t i = 0; i < g.edges.size(); ++i) {
        if (i) s += ',';
        s += "(" + std::to_string(g.edges[i].first) + "," + std::to_string(g.edges[i].second) + ")";
    }
    s += "}";
    return s;
}

std::pair<std::string, std::string> render_prompt(const PromptTemplate& tmpl,
                                                  const Instance& inst) {
    std::string out;
    const std::string& pat = tmpl.input_pattern;
    std::set<std::string> used;
    for (std::size_t i = 0; i < pat.size();) {
        if (pat[i] == '{') {
            auto close = pat.find('}', i);
            if (close == std::string::npos)
                throw ConfigError("unterminated placeholder in template '" + tmpl.name + "'");
            std::string ph = pat.substr(i + 1, close - i - 1);
            if (ph == "a" && inst.family == FamilyId::Multiplication) {
                out += std::to_string(std::get<MultPayload>(inst.payload).a);
            } else if (ph == "b" && inst.family == FamilyId::Multiplication) {
                out += std::to_string(std::get<MultPayload>(inst.payload).b);
            } else if (ph == "s" && (inst.family == FamilyId::Parity ||
                                     inst.family == FamilyId::BalancedParens)) {
                out += std::get<StringPayload>(inst.payload).s;
            } else if (ph == "g" && inst.family == FamilyId::GraphColoring) {
                out += graph_input_text(std::get<GraphPayload>(inst.payload));
            } else {
                throw ConfigError("placeholder {" + ph + "} does not match family " +
                                  family_tag(inst.family) + " in template '" + tmpl.name + "'");
            }
            used.insert(ph);
            i = close + 1;
        } else {
            out += pat[i++];
        }
    }
    // A template that substitutes nothing cannot render injectively.
    if (used.empty())
        throw ConfigError("template '" + tmpl.name + "' has no placeholder");
    if (inst.family == FamilyId::Multiplication && used != std::set<std::string>{"a", "b"})
        throw ConfigError("mult template '" + tmpl.name + "' must use both {a} and {b}");
    return {tmpl.instructions, out};
}

const std::vector<PromptTemplate>& builtin_templates(FamilyId family) {
    static const std::vector<PromptTemplate> mult = {
        {"baseline", "Answer with only the integer.", "{a}*{b}=", "base-10 integer"},
        {"compute", "You are a calculator. Output only the result.", "Compute {a} x {b}",
         "base-10 integer"},
        {"product", "Give only the numerical answer.", "What is the product of {a} and {b}?",
         "base-10 integer"},
        {"eval", "Evaluate and respond with just the number.", "Evaluate: {a} * {b}",
         "base-10 integer"},
        {"answer", "Provide only the numerical answer.", "{a} x {b} = ?", "base-10 integer"},
    };
    static const std::vector<PromptTemplate> parity = {
        {"baseline", "Answer with only 0 or 1.", "Parity of {s}=", "0 or 1"},
    };
    static const std::vector<PromptTemplate> parens = {
        {"baseline", "Answer with only Yes or No.", "Is {s} balanced?", "Yes or No"},
    };
    static const std::vector<PromptTemplate> graph = {
        {"baseline", "Answer with only the integer.", "Chromatic number of {g}=",
         "base-10 integer"},
    };
    switch (family) {
        case FamilyId::Multiplication: return mult;
        case FamilyId::Parity: return parity;
        case FamilyId::BalancedParens: return parens;
        case FamilyId::GraphColoring: return graph;
    }
    return mult;
}

PromptTemplate find_template(FamilyId family, const std::string& name) {
    for (const auto& t : builtin_templates(family))
        if (t.name == name) return t;
    throw ConfigError("unknown template '" + name + "' for family " + family_tag(family));
}

std::vector<PromptTemplate> load_templates_file(const std::string& path, FamilyId family) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open templates file '" + path + "'");
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const std::exception& e) {
        throw ConfigError("bad templates file '" + path + "': " + e.what());
    }
    if (!doc.is_array()) throw ConfigError("templates file must be a JSON array");
    std::vector<PromptTemplate> out;
    for (const auto& item : doc) {
        if (item.value("family", std::string()) != family_tag(family)) continue;
        PromptTemplate t;
        t.name = item.at("name").get<std::string>();
        t.instructions = item.at("instructions").get<std::string>();
        t.input_pattern = item.at("input_pattern").get<std::string>();
        t.answer_space = item.value("answer_space", std::string());
        out.push_back(std::move(t));
    }
    return out;
}

PromptTemplate find_template_with_file(FamilyId family, const std::string& name,
                                       const std::string& templates_path) {
    if (!templates_path.empty()) {
        for (const auto& t : load_templates_file(templates_path, family))
            if (t.name == name) return t;
    }
    return find_template(family, name);
}

}  // namespace zeh
