#pragma once

// Deterministic desk-scale decoder-only transformer. Weights are a pure
// function of (config, seed) via a SplitMix64 stream, so two processes build
// bit-identical weights. Pre-norm blocks, rotary positions (a pure function
// of absolute depth, which is what makes trie KV sharing valid), scaled
// dot-product attention, GELU feed-forward. Float32 throughout, including
// accumulations.

#include <cstdint>
#include <string>
#include <vector>

#include "zeh/kernels.hpp"
#include "zeh/tokenizer.hpp"
#include "zeh/trie.hpp"

namespace zeh {

struct ToyModelConfig {
    int layers = 2;
    int heads = 2;
    int d_model = 32;
    int d_ff = 64;
    int vocab_size = Tokenizer::vocab_size();
    int max_depth = 512;
    std::uint64_t seed = 1;

    void validate() const;  // throws ConfigError
    std::string tag() const;
};

// key=value lines: layers/heads/d_model/d_ff/vocab_size/max_depth/seed.
ToyModelConfig parse_toy_config_file(const std::string& path);

// Per-layer packed keys/values (rotary applied) for a contiguous run of
// positions. Used both as the growable decode cache and as the read-only
// shared prompt prefix handle.
struct KvCache {
    int len = 0;
    std::vector<std::vector<float>> k, v;  // [layer][len * d_model]
};

class ToyModel {
  public:
    enum class TreeKernel { Dense, Flash };

    explicit ToyModel(ToyModelConfig cfg);

    const ToyModelConfig& config() const { return cfg_; }

    // Full-sequence causal forward; row i holds the next-token scores after
    // position i. Logits are [tokens.size() x vocab], row-major.
    std::vector<float> forward_full(const std::vector<int>& tokens) const;

    // Causal forward of `tokens` given already-computed keys/values:
    // attention sees [prefix | own | new tokens]; the new tokens' K/V are
    // appended to `own`. Positions continue from prefix->len + own.len.
    std::vector<float> forward_step(const KvCache* prefix, KvCache& own,
                                    const std::vector<int>& tokens) const;

    // Runs the shared prompt once; the result is reusable read-only by any
    // number of downstream forward passes.
    KvCache prefill(const std::vector<int>& prompt) const;

    // Greedy decode with an incremental KV cache; stops at EOS or max_new.
    // Returns only the generated tokens (EOS included when reached). Argmax
    // ties break toward the lowest token id.
    std::vector<int> decode_greedy(const std::vector<int>& prompt, int max_new) const;

    // Tree attention over a trie: one logits row per real node (row r is
    // node r+1; the virtual root contributes nothing). Node positions are
    // prefix_len + depth. Dense is the serial reference and refuses tries
    // above dense_cap nodes; Flash is the blocked OpenMP kernel.
    std::vector<float> forward_trie(const Trie& trie, const KvCache* prefix, TreeKernel kernel,
                                    int block_size = 64, int dense_cap = 4096) const;

    static int argmax_row(const float* row, int n);

    ScoreStats& stats() const { return stats_; }
    void reset_stats() const { stats_ = ScoreStats{}; }

  private:
    struct Layer {
        std::vector<float> ln1_g, ln1_b, wq, wk, wv, wo, ln2_g, ln2_b, w1, b1, w2, b2;
    };

    std::vector<float> embed_tokens(const std::vector<int>& tokens) const;
    // ln1 + QKV projections + rotary at the given absolute positions.
    void qkv_rotary(const Layer& layer, const std::vector<float>& x, int rows,
                    const int* positions, std::vector<float>& q, std::vector<float>& k,
                    std::vector<float>& v) const;
    void attn_out_residual(const Layer& layer, const std::vector<float>& attn,
                           std::vector<float>& x, int rows) const;
    void ff_residual(const Layer& layer, std::vector<float>& x, int rows) const;
    std::vector<float> final_logits(std::vector<float> x, int rows) const;

    ToyModelConfig cfg_;
    std::vector<float> embed_;
    std::vector<Layer> layers_;
    std::vector<float> lnf_g_, lnf_b_, unembed_;
    mutable ScoreStats stats_;
};

}  // namespace zeh
