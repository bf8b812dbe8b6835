#pragma once

// Float32 compute kernels for the toy transformer. Two tree-attention paths
// share one contract:
//   - attention_tree_dense: serial reference; materializes the full
//     node x node ancestor mask and runs a plain softmax per row.
//   - attention_tree_flash: OpenMP-parallel blocked kernel; tests ancestor
//     membership on the fly via Euler-tour intervals and aggregates with
//     online softmax, never materializing a mask.
// Both count every evaluated q.k score so callers can assert the blocked
// kernel does no more score work than the dense reference.

#include <cstdint>
#include <vector>

#include "zeh/trie.hpp"

namespace zeh {

// Worker count for OpenMP regions; honors the ZEH_THREADS env var.
int zeh_threads();

struct ScoreStats {
    std::uint64_t dense_scores = 0;
    std::uint64_t flash_scores = 0;
};

namespace kernels {

// out[r, :] += or = x[r, :] (rows x in_dim) times w (in_dim x out_dim), row-major.
void matmul(const float* x, const float* w, float* out, int rows, int in_dim, int out_dim);

// In-place layer norm per row with learned gain/bias, eps 1e-5.
void layer_norm(float* x, const float* gain, const float* bias, int rows, int dim);

float gelu(float x);

// Rotary position encoding applied in place to one head-sized vector:
// pairs (2i, 2i+1) rotated by pos * 10000^(-2i/head_dim).
void rotary(float* qk, int head_dim, int pos);

// Running online-softmax state for one (query, head) accumulation. Scores
// arrive as float32; the running state is held in double so the result is
// independent of the block partition to well below the 1e-6 equivalence
// gate. The dense reference stays 32-bit throughout.
struct SoftmaxState {
    double m;                  // running max of scores
    double l;                  // running denominator
    std::vector<double> acc;   // running weighted value sum, head_dim wide

    explicit SoftmaxState(int head_dim);
    // Folds one key block: scores[i] pairs with values + i*head_dim.
    void fold(const float* scores, const float* values, int count, int head_dim);
    // Writes acc/l into out.
    void finish(float* out, int head_dim) const;
};

// Multi-head attention over a key set = [prefix rows | tree rows], where the
// allowed tree keys for query q are its ancestors-or-self. q/k/v are packed
// [rows x d_model] with rotary already applied to q and k; prefix_k/prefix_v
// are [prefix_len x d_model] and always attend. Outputs [rows x d_model].
//
// node_of maps tree row -> trie node id (real nodes only).
struct TreeAttentionArgs {
    const float* q = nullptr;
    const float* k = nullptr;
    const float* v = nullptr;
    const float* prefix_k = nullptr;
    const float* prefix_v = nullptr;
    int rows = 0;
    int prefix_len = 0;
    int d_model = 0;
    int heads = 0;
    const Trie* trie = nullptr;
    const std::int32_t* node_of = nullptr;
    float* out = nullptr;
};

void attention_tree_dense(const TreeAttentionArgs& args, ScoreStats* stats);
void attention_tree_flash(const TreeAttentionArgs& args, int block_size, ScoreStats* stats);

}  // namespace kernels
}  // namespace zeh
