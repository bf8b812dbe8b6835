#include "zeh/trie.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "zeh/error.hpp"

namespace zeh {

namespace {

// Linked build structure; flattened to the arena by one DFS at the end.
struct BuildNode {
    std::int32_t parent = -1;
    std::int32_t token = -1;
    std::vector<std::int32_t> children;  // insertion order
};

}  // namespace

Trie build_trie(const std::vector<TrieSequence>& sequences,
                const std::vector<int>& shared_prompt) {
    std::vector<BuildNode> build(1);  // virtual root
    // child lookup: (node, token) -> child
    std::map<std::pair<std::int32_t, int>, std::int32_t> child_of;

    auto descend = [&](std::int32_t node, int token) {
        auto it = child_of.find({node, token});
        if (it != child_of.end()) return it->second;
        auto id = static_cast<std::int32_t>(build.size());
        build.push_back({node, token, {}});
        build[node].children.push_back(id);
        child_of.emplace(std::make_pair(node, token), id);
        return id;
    };

    std::vector<std::vector<std::int32_t>> seq_paths(sequences.size());
    for (std::size_t s = 0; s < sequences.size(); ++s) {
        const auto& seq = sequences[s];
        if (seq.tokens.size() < shared_prompt.size() ||
            !std::equal(shared_prompt.begin(), shared_prompt.end(), seq.tokens.begin()))
            throw ConfigError("sequence " + std::to_string(s) +
                              " does not start with the shared prompt");
        if (seq.answer_start < 1 || seq.answer_start >= static_cast<int>(seq.tokens.size()))
            throw ConfigError("sequence " + std::to_string(s) + " has bad answer_start");
        std::int32_t node = 0;
        auto& path = seq_paths[s];
        path.reserve(seq.tokens.size());
        for (int tok : seq.tokens) {
            node = descend(node, tok);
            path.push_back(node);
        }
    }

    // Flatten in DFS preorder so tin equals the arena index.
    Trie trie;
    trie.prompt_len = static_cast<int>(shared_prompt.size());
    trie.nodes.resize(build.size());
    std::vector<std::int32_t> order(build.size(), -1);  // build id -> arena id
    std::int32_t next = 0;
    // Iterative preorder with explicit post-visit for tout.
    std::vector<std::pair<std::int32_t, std::size_t>> frames;
    frames.emplace_back(0, 0);
    order[0] = next++;
    while (!frames.empty()) {
        auto& [bid, child_idx] = frames.back();
        if (child_idx < build[bid].children.size()) {
            std::int32_t c = build[bid].children[child_idx++];
            order[c] = next++;
            frames.emplace_back(c, 0);
        } else {
            std::int32_t id = order[bid];
            trie.nodes[id].tout = next - 1;
            frames.pop_back();
        }
    }
    for (std::size_t b = 0; b < build.size(); ++b) {
        std::int32_t id = order[b];
        auto& n = trie.nodes[id];
        n.token = build[b].token;
        n.tin = id;
        if (b == 0) {
            n.parent = -1;
            n.depth = -1;
        } else {
            n.parent = order[build[b].parent];
            n.depth = trie.nodes[n.parent].depth + 1;
        }
    }

    // Per-sequence teacher-forcing checks over the answer region (the last
    // input position predicts the first answer token; the final answer token
    // predicts the sequence terminator, which callers include in tokens).
    trie.seq_checks.resize(sequences.size());
    trie.seq_last_node.resize(sequences.size());
    for (std::size_t s = 0; s < sequences.size(); ++s) {
        const auto& seq = sequences[s];
        const auto& path = seq_paths[s];
        trie.seq_last_node[s] = order[path.back()];
        for (int pos = seq.answer_start - 1; pos + 1 < static_cast<int>(seq.tokens.size());
             ++pos) {
            std::int32_t node = order[path[pos]];
            int expected = seq.tokens[pos + 1];
            trie.seq_checks[s].push_back({node, expected, pos + 1});
            auto& n = trie.nodes[node];
            if (!n.check) {
                n.check = true;
                n.expected_child_token = expected;
            }
        }
    }
    return trie;
}

std::string Trie::dump() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const auto& n = nodes[i];
        os << i << ' ' << n.parent << ' ' << n.token << ' ' << n.depth << ' ' << n.tin << ' '
           << n.tout << '\n';
    }
    return os.str();
}

}  // namespace zeh
