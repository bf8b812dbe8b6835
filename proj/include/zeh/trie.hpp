#pragma once

// DFS-ordered node arena over token sequences with Euler-tour intervals for
// O(1) ancestor tests. Shared prefixes share nodes; the shared prompt (when
// given) occupies the root chain. Node 0 is a virtual root carrying no token
// and contributing no keys or values.

#include <cstdint>
#include <string>
#include <vector>

namespace zeh {

struct TrieNode {
    std::int32_t parent = -1;
    std::int32_t token = -1;    // -1 on the virtual root
    std::int32_t depth = -1;    // first real node has depth 0
    std::int32_t tin = 0;
    std::int32_t tout = 0;
    bool check = false;         // answer-region position (teacher-forcing check)
    std::int32_t expected_child_token = -1;
};

// One sequence to insert: full token list plus the index of its first answer
// token. Checks cover predicting tokens[answer_start] .. tokens.back().
struct TrieSequence {
    std::vector<int> tokens;
    int answer_start = 0;
};

struct SeqCheck {
    std::int32_t node = 0;      // logits row to inspect (query node)
    std::int32_t expected = 0;  // token the argmax must equal
    std::int32_t seq_pos = 0;   // position of the expected token in the sequence
};

class Trie {
  public:
    std::vector<TrieNode> nodes;                    // DFS preorder; parent precedes child
    std::vector<std::vector<SeqCheck>> seq_checks;  // per inserted sequence
    std::vector<std::int32_t> seq_last_node;        // node of each sequence's final token
    int prompt_len = 0;                             // length of the shared prompt chain

    int node_count() const { return static_cast<int>(nodes.size()); }
    int real_node_count() const { return node_count() - 1; }

    // ancestor-or-self(u, v): is u on the root path of v?
    bool is_ancestor_or_self(int u, int v) const {
        return nodes[u].tin <= nodes[v].tin && nodes[v].tin <= nodes[u].tout;
    }

    // Debug text format, one node per line: id parent token depth tin tout.
    std::string dump() const;
};

// Builds the trie. Every sequence must begin with shared_prompt (throws
// ConfigError otherwise). Insertion is idempotent: duplicate sequences share
// all nodes.
Trie build_trie(const std::vector<TrieSequence>& sequences,
                const std::vector<int>& shared_prompt);

}  // namespace zeh
