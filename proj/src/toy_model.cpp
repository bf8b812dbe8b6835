#include "zeh/toy_model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "zeh/error.hpp"

namespace zeh {

void ToyModelConfig::validate() const {
    if (layers < 1 || heads < 1 || d_model < 1 || d_ff < 1 || vocab_size < 3 || max_depth < 1)
        throw ConfigError("toy model dimensions must be >= 1 (vocab >= 3)");
    if (d_model % heads != 0)
        throw ConfigError("d_model must be divisible by heads");
    if ((d_model / heads) % 2 != 0)
        throw ConfigError("head dim must be even for rotary pairs");
}

std::string ToyModelConfig::tag() const {
    std::ostringstream os;
    os << "toy:seed=" << seed << ",l" << layers << ",h" << heads << ",d" << d_model << ",f"
       << d_ff;
    return os.str();
}

ToyModelConfig parse_toy_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open toy model config '" + path + "'");
    ToyModelConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("bad key=value line " + std::to_string(lineno) + " in " + path);
        std::string key = line.substr(0, eq), val = line.substr(eq + 1);
        try {
            if (key == "layers") cfg.layers = std::stoi(val);
            else if (key == "heads") cfg.heads = std::stoi(val);
            else if (key == "d_model") cfg.d_model = std::stoi(val);
            else if (key == "d_ff") cfg.d_ff = std::stoi(val);
            else if (key == "vocab_size") cfg.vocab_size = std::stoi(val);
            else if (key == "max_depth") cfg.max_depth = std::stoi(val);
            else if (key == "seed") cfg.seed = std::stoull(val);
            else throw ConfigError("unknown toy config key '" + key + "'");
        } catch (const std::invalid_argument&) {
            throw ConfigError("bad value for '" + key + "' in " + path);
        }
    }
    cfg.validate();
    return cfg;
}

namespace {

// SplitMix64; the weight stream is the sole source of randomness, drawn in
// a fixed documented order (embed, per-layer ln1/q/k/v/o/ln2/ff, final ln,
// unembed) so that (config, seed) fully determines every parameter.
struct SplitMix64 {
    std::uint64_t state;
    explicit SplitMix64(std::uint64_t seed) : state(seed) {}
    std::uint64_t next() {
        std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }
    // uniform in (-1, 1)
    float sym() {
        double u = static_cast<double>(next() >> 11) * 0x1.0p-53;
        return static_cast<float>(2.0 * u - 1.0);
    }
};

void fill(SplitMix64& rng, std::vector<float>& w, std::size_t n, float scale) {
    w.resize(n);
    for (auto& x : w) x = scale * rng.sym();
}

void fill_gain(SplitMix64& rng, std::vector<float>& w, std::size_t n) {
    w.resize(n);
    for (auto& x : w) x = 1.0f + 0.1f * rng.sym();
}

}  // namespace

ToyModel::ToyModel(ToyModelConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    SplitMix64 rng(cfg_.seed);
    const auto d = static_cast<std::size_t>(cfg_.d_model);
    const auto ff = static_cast<std::size_t>(cfg_.d_ff);
    const auto v = static_cast<std::size_t>(cfg_.vocab_size);
    const float ws = 1.0f / std::sqrt(static_cast<float>(cfg_.d_model));
    const float fs = 1.0f / std::sqrt(static_cast<float>(cfg_.d_ff));

    fill(rng, embed_, v * d, 0.5f);
    layers_.resize(cfg_.layers);
    for (auto& L : layers_) {
        fill_gain(rng, L.ln1_g, d);
        fill(rng, L.ln1_b, d, 0.05f);
        fill(rng, L.wq, d * d, ws);
        fill(rng, L.wk, d * d, ws);
        fill(rng, L.wv, d * d, ws);
        fill(rng, L.wo, d * d, ws);
        fill_gain(rng, L.ln2_g, d);
        fill(rng, L.ln2_b, d, 0.05f);
        fill(rng, L.w1, d * ff, ws);
        fill(rng, L.b1, ff, 0.05f);
        fill(rng, L.w2, ff * d, fs);
        fill(rng, L.b2, d, 0.05f);
    }
    fill_gain(rng, lnf_g_, d);
    fill(rng, lnf_b_, d, 0.05f);
    fill(rng, unembed_, d * v, ws);
}

std::vector<float> ToyModel::embed_tokens(const std::vector<int>& tokens) const {
    const int d = cfg_.d_model;
    std::vector<float> x(tokens.size() * static_cast<std::size_t>(d));
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        int t = tokens[i];
        if (t < 0 || t >= cfg_.vocab_size)
            throw ConfigError("unknown token id " + std::to_string(t));
        const float* row = embed_.data() + static_cast<std::size_t>(t) * d;
        std::copy(row, row + d, x.data() + i * d);
    }
    return x;
}

void ToyModel::qkv_rotary(const Layer& layer, const std::vector<float>& x, int rows,
                          const int* positions, std::vector<float>& q, std::vector<float>& k,
                          std::vector<float>& v) const {
    const int d = cfg_.d_model;
    const int hd = d / cfg_.heads;
    std::vector<float> h(x.begin(), x.begin() + static_cast<std::size_t>(rows) * d);
    kernels::layer_norm(h.data(), layer.ln1_g.data(), layer.ln1_b.data(), rows, d);
    q.resize(static_cast<std::size_t>(rows) * d);
    k.resize(static_cast<std::size_t>(rows) * d);
    v.resize(static_cast<std::size_t>(rows) * d);
    kernels::matmul(h.data(), layer.wq.data(), q.data(), rows, d, d);
    kernels::matmul(h.data(), layer.wk.data(), k.data(), rows, d, d);
    kernels::matmul(h.data(), layer.wv.data(), v.data(), rows, d, d);
    for (int r = 0; r < rows; ++r) {
        for (int head = 0; head < cfg_.heads; ++head) {
            kernels::rotary(q.data() + static_cast<std::size_t>(r) * d + head * hd, hd,
                            positions[r]);
            kernels::rotary(k.data() + static_cast<std::size_t>(r) * d + head * hd, hd,
                            positions[r]);
        }
    }
}

void ToyModel::attn_out_residual(const Layer& layer, const std::vector<float>& attn,
                                 std::vector<float>& x, int rows) const {
    const int d = cfg_.d_model;
    std::vector<float> proj(static_cast<std::size_t>(rows) * d);
    kernels::matmul(attn.data(), layer.wo.data(), proj.data(), rows, d, d);
    for (std::size_t i = 0; i < proj.size(); ++i) x[i] += proj[i];
}

void ToyModel::ff_residual(const Layer& layer, std::vector<float>& x, int rows) const {
    const int d = cfg_.d_model;
    const int ff = cfg_.d_ff;
    std::vector<float> h(x.begin(), x.begin() + static_cast<std::size_t>(rows) * d);
    kernels::layer_norm(h.data(), layer.ln2_g.data(), layer.ln2_b.data(), rows, d);
    std::vector<float> mid(static_cast<std::size_t>(rows) * ff);
    kernels::matmul(h.data(), layer.w1.data(), mid.data(), rows, d, ff);
    for (int r = 0; r < rows; ++r)
        for (int j = 0; j < ff; ++j) {
            auto& m = mid[static_cast<std::size_t>(r) * ff + j];
            m = kernels::gelu(m + layer.b1[j]);
        }
    std::vector<float> out(static_cast<std::size_t>(rows) * d);
    kernels::matmul(mid.data(), layer.w2.data(), out.data(), rows, ff, d);
    for (int r = 0; r < rows; ++r)
        for (int j = 0; j < d; ++j)
            x[static_cast<std::size_t>(r) * d + j] += out[static_cast<std::size_t>(r) * d + j] +
                                                      layer.b2[j];
}

std::vector<float> ToyModel::final_logits(std::vector<float> x, int rows) const {
    const int d = cfg_.d_model;
    kernels::layer_norm(x.data(), lnf_g_.data(), lnf_b_.data(), rows, d);
    std::vector<float> logits(static_cast<std::size_t>(rows) * cfg_.vocab_size);
    kernels::matmul(x.data(), unembed_.data(), logits.data(), rows, d, cfg_.vocab_size);
    return logits;
}

std::vector<float> ToyModel::forward_step(const KvCache* prefix, KvCache& own,
                                          const std::vector<int>& tokens) const {
    const int d = cfg_.d_model;
    const int hd = d / cfg_.heads;
    const float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(hd));
    const int rows = static_cast<int>(tokens.size());
    const int prefix_len = prefix ? prefix->len : 0;
    const int base = prefix_len + own.len;
    if (base + rows > cfg_.max_depth)
        throw ConfigError("sequence length " + std::to_string(base + rows) +
                          " exceeds max_depth " + std::to_string(cfg_.max_depth));
    if (own.k.empty()) {
        own.k.resize(cfg_.layers);
        own.v.resize(cfg_.layers);
    }

    std::vector<float> x = embed_tokens(tokens);
    std::vector<int> positions(rows);
    for (int i = 0; i < rows; ++i) positions[i] = base + i;

    std::vector<float> q, k, v, attn(static_cast<std::size_t>(rows) * d);
    for (int l = 0; l < cfg_.layers; ++l) {
        const Layer& L = layers_[l];
        qkv_rotary(L, x, rows, positions.data(), q, k, v);
        auto& ok = own.k[l];
        auto& ov = own.v[l];
        ok.insert(ok.end(), k.begin(), k.end());
        ov.insert(ov.end(), v.begin(), v.end());

        // Causal attention: row i sees prefix plus own positions <= base+i.
        // Plain float32 softmax in key order, matching the dense reference.
        std::vector<float> scores;
        std::vector<const float*> value_rows;
        for (int r = 0; r < rows; ++r) {
            const int own_keys = own.len + r + 1;
            for (int head = 0; head < cfg_.heads; ++head) {
                const int off = head * hd;
                const float* qv = q.data() + static_cast<std::size_t>(r) * d + off;
                scores.clear();
                value_rows.clear();
                auto push = [&](const float* krow, const float* vrow) {
                    float s = 0.0f;
                    for (int t = 0; t < hd; ++t) s += qv[t] * krow[t];
                    scores.push_back(s * inv_sqrt);
                    value_rows.push_back(vrow);
                };
                for (int p = 0; p < prefix_len; ++p)
                    push(prefix->k[l].data() + static_cast<std::size_t>(p) * d + off,
                         prefix->v[l].data() + static_cast<std::size_t>(p) * d + off);
                for (int p = 0; p < own_keys; ++p)
                    push(ok.data() + static_cast<std::size_t>(p) * d + off,
                         ov.data() + static_cast<std::size_t>(p) * d + off);

                float m = scores[0];
                for (float s : scores) m = std::max(m, s);
                float denom = 0.0f;
                for (float& s : scores) {
                    s = std::exp(s - m);
                    denom += s;
                }
                float* out = attn.data() + static_cast<std::size_t>(r) * d + off;
                for (int t = 0; t < hd; ++t) out[t] = 0.0f;
                for (std::size_t i = 0; i < scores.size(); ++i)
                    for (int t = 0; t < hd; ++t) out[t] += scores[i] * value_rows[i][t];
                for (int t = 0; t < hd; ++t) out[t] /= denom;
            }
        }
        attn_out_residual(L, attn, x, rows);
        ff_residual(L, x, rows);
    }
    own.len += rows;
    return final_logits(std::move(x), rows);
}

std::vector<float> ToyModel::forward_full(const std::vector<int>& tokens) const {
    KvCache own;
    return forward_step(nullptr, own, tokens);
}

KvCache ToyModel::prefill(const std::vector<int>& prompt) const {
    if (prompt.empty()) throw ConfigError("prefill prompt must be non-empty");
    KvCache cache;
    forward_step(nullptr, cache, prompt);
    return cache;
}

int ToyModel::argmax_row(const float* row, int n) {
    int best = 0;
    for (int j = 1; j < n; ++j)
        if (row[j] > row[best]) best = j;  // ties keep the lowest id
    return best;
}

std::vector<int> ToyModel::decode_greedy(const std::vector<int>& prompt, int max_new) const {
    if (max_new < 1) throw ConfigError("max_new must be >= 1");
    KvCache cache;
    std::vector<float> logits = forward_step(nullptr, cache, prompt);
    const int v = cfg_.vocab_size;
    std::vector<int> out;
    int next = argmax_row(logits.data() + (prompt.size() - 1) * static_cast<std::size_t>(v), v);
    for (int step = 0;; ++step) {
        out.push_back(next);
        if (next == Tokenizer::kEos || step + 1 >= max_new) break;
        if (cache.len + 1 > cfg_.max_depth) break;  // depth-bounded decode
        logits = forward_step(nullptr, cache, {next});
        next = argmax_row(logits.data(), v);
    }
    return out;
}

std::vector<float> ToyModel::forward_trie(const Trie& trie, const KvCache* prefix,
                                          TreeKernel kernel, int block_size,
                                          int dense_cap) const {
    const int d = cfg_.d_model;
    const int rows = trie.real_node_count();
    const int prefix_len = prefix ? prefix->len : 0;
    if (rows == 0) return {};
    if (kernel == TreeKernel::Dense && trie.node_count() > dense_cap)
        throw ConfigError("trie has " + std::to_string(trie.node_count()) +
                          " nodes, above the dense cap " + std::to_string(dense_cap) +
                          "; use the flashtree kernel");
    if (block_size < 1) throw ConfigError("block_size must be >= 1");

    std::vector<int> tokens(rows), positions(rows);
    std::vector<std::int32_t> node_of(rows);
    int max_pos = 0;
    for (int r = 0; r < rows; ++r) {
        const TrieNode& n = trie.nodes[r + 1];
        tokens[r] = n.token;
        positions[r] = prefix_len + n.depth;
        node_of[r] = r + 1;
        max_pos = std::max(max_pos, positions[r]);
    }
    if (max_pos >= cfg_.max_depth)
        throw ConfigError("trie depth exceeds max_depth");

    std::vector<float> x = embed_tokens(tokens);
    std::vector<float> q, k, v, attn(static_cast<std::size_t>(rows) * d);
    static const std::vector<float> kEmpty;
    for (int l = 0; l < cfg_.layers; ++l) {
        const Layer& L = layers_[l];
        qkv_rotary(L, x, rows, positions.data(), q, k, v);
        kernels::TreeAttentionArgs args;
        args.q = q.data();
        args.k = k.data();
        args.v = v.data();
        args.prefix_k = prefix ? prefix->k[l].data() : kEmpty.data();
        args.prefix_v = prefix ? prefix->v[l].data() : kEmpty.data();
        args.rows = rows;
        args.prefix_len = prefix_len;
        args.d_model = d;
        args.heads = cfg_.heads;
        args.trie = &trie;
        args.node_of = node_of.data();
        args.out = attn.data();
        if (kernel == TreeKernel::Dense)
            kernels::attention_tree_dense(args, &stats_);
        else
            kernels::attention_tree_flash(args, block_size, &stats_);
        attn_out_residual(L, attn, x, rows);
        ff_residual(L, x, rows);
    }
    return final_logits(std::move(x), rows);
}

}  // namespace zeh
