#include "zeh/kernels.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace zeh {

int zeh_threads() {
    static const int n = [] {
        if (const char* env = std::getenv("ZEH_THREADS")) {
            int v = std::atoi(env);
            if (v >= 1) return v;
        }
#ifdef _OPENMP
        return omp_get_max_threads();
#else
        return 1;
#endif
    }();
    return n;
}

namespace kernels {

void matmul(const float* x, const float* w, float* out, int rows, int in_dim, int out_dim) {
    for (int r = 0; r < rows; ++r) {
        const float* xr = x + static_cast<std::size_t>(r) * in_dim;
        float* or_ = out + static_cast<std::size_t>(r) * out_dim;
        for (int j = 0; j < out_dim; ++j) or_[j] = 0.0f;
        for (int i = 0; i < in_dim; ++i) {
            const float xi = xr[i];
            const float* wr = w + static_cast<std::size_t>(i) * out_dim;
            for (int j = 0; j < out_dim; ++j) or_[j] += xi * wr[j];
        }
    }
}

void layer_norm(float* x, const float* gain, const float* bias, int rows, int dim) {
    constexpr float eps = 1e-5f;
    for (int r = 0; r < rows; ++r) {
        float* xr = x + static_cast<std::size_t>(r) * dim;
        float mean = 0.0f;
        for (int i = 0; i < dim; ++i) mean += xr[i];
        mean /= static_cast<float>(dim);
        float var = 0.0f;
        for (int i = 0; i < dim; ++i) {
            float d = xr[i] - mean;
            var += d * d;
        }
        var /= static_cast<float>(dim);
        float inv = 1.0f / std::sqrt(var + eps);
        for (int i = 0; i < dim; ++i) xr[i] = (xr[i] - mean) * inv * gain[i] + bias[i];
    }
}

float gelu(float x) {
    return 0.5f * x * (1.0f + std::erf(x * 0.70710678f));
}

void rotary(float* qk, int head_dim, int pos) {
    for (int i = 0; i < head_dim / 2; ++i) {
        float theta = std::pow(10000.0f, -2.0f * static_cast<float>(i) /
                                             static_cast<float>(head_dim));
        float angle = static_cast<float>(pos) * theta;
        float c = std::cos(angle), s = std::sin(angle);
        float a = qk[2 * i], b = qk[2 * i + 1];
        qk[2 * i] = a * c - b * s;
        qk[2 * i + 1] = a * s + b * c;
    }
}

SoftmaxState::SoftmaxState(int head_dim)
    : m(-std::numeric_limits<double>::max()), l(0.0), acc(head_dim, 0.0) {}

void SoftmaxState::fold(const float* scores, const float* values, int count, int head_dim) {
    if (count == 0) return;  // empty block leaves the state unchanged
    double m_block = scores[0];
    for (int i = 1; i < count; ++i) m_block = std::max(m_block, static_cast<double>(scores[i]));
    const double m_new = std::max(m, m_block);
    // exp(m - m_new) underflows to exactly 0 when m is still the -max sentinel.
    const double scale = std::exp(m - m_new);
    l *= scale;
    for (int d = 0; d < head_dim; ++d) acc[d] *= scale;
    for (int i = 0; i < count; ++i) {
        const double w = std::exp(scores[i] - m_new);
        l += w;
        const float* vi = values + static_cast<std::size_t>(i) * head_dim;
        for (int d = 0; d < head_dim; ++d) acc[d] += w * vi[d];
    }
    m = m_new;
}

void SoftmaxState::finish(float* out, int head_dim) const {
    for (int d = 0; d < head_dim; ++d) out[d] = static_cast<float>(acc[d] / l);
}

namespace {

inline float dot(const float* a, const float* b, int n) {
    float s = 0.0f;
    for (int i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

}  // namespace

void attention_tree_dense(const TreeAttentionArgs& a, ScoreStats* stats) {
    const int hd = a.d_model / a.heads;
    const float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(hd));
    const int total_keys = a.prefix_len + a.rows;
    const float neg = -std::numeric_limits<float>::max();

    // Reference path: the ancestor mask is materialized explicitly
    // (rows x rows; prefix columns are always allowed).
    std::vector<unsigned char> mask(static_cast<std::size_t>(a.rows) * a.rows, 0);
    for (int qr = 0; qr < a.rows; ++qr) {
        const std::int32_t qn = a.node_of[qr];
        for (int kr = 0; kr < a.rows; ++kr)
            mask[static_cast<std::size_t>(qr) * a.rows + kr] =
                a.trie->is_ancestor_or_self(a.node_of[kr], qn) ? 1 : 0;
    }

    std::vector<float> scores(total_keys);
    for (int h = 0; h < a.heads; ++h) {
        const int off = h * hd;
        for (int qr = 0; qr < a.rows; ++qr) {
            const float* qv = a.q + static_cast<std::size_t>(qr) * a.d_model + off;
            for (int p = 0; p < a.prefix_len; ++p)
                scores[p] = dot(qv, a.prefix_k + static_cast<std::size_t>(p) * a.d_model + off,
                                hd) * inv_sqrt;
            const unsigned char* mrow = mask.data() + static_cast<std::size_t>(qr) * a.rows;
            for (int kr = 0; kr < a.rows; ++kr) {
                float s = dot(qv, a.k + static_cast<std::size_t>(kr) * a.d_model + off, hd) *
                          inv_sqrt;
                scores[a.prefix_len + kr] = mrow[kr] ? s : neg;
            }
            float m = scores[0];
            for (int i = 1; i < total_keys; ++i) m = std::max(m, scores[i]);
            float l = 0.0f;
            for (int i = 0; i < total_keys; ++i) {
                scores[i] = std::exp(scores[i] - m);
                l += scores[i];
            }
            float* out = a.out + static_cast<std::size_t>(qr) * a.d_model + off;
            for (int d = 0; d < hd; ++d) out[d] = 0.0f;
            for (int p = 0; p < a.prefix_len; ++p) {
                const float* vv = a.prefix_v + static_cast<std::size_t>(p) * a.d_model + off;
                for (int d = 0; d < hd; ++d) out[d] += scores[p] * vv[d];
            }
            for (int kr = 0; kr < a.rows; ++kr) {
                const float w = scores[a.prefix_len + kr];
                if (w == 0.0f) continue;
                const float* vv = a.v + static_cast<std::size_t>(kr) * a.d_model + off;
                for (int d = 0; d < hd; ++d) out[d] += w * vv[d];
            }
            for (int d = 0; d < hd; ++d) out[d] /= l;
        }
    }
    if (stats)
        stats->dense_scores += static_cast<std::uint64_t>(a.rows) * total_keys * a.heads;
}

void attention_tree_flash(const TreeAttentionArgs& a, int block_size, ScoreStats* stats) {
    const int hd = a.d_model / a.heads;
    const float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(hd));
    std::atomic<std::uint64_t> scored{0};

#pragma omp parallel num_threads(zeh_threads())
    {
        std::vector<float> block_scores(block_size);
        std::vector<float> block_values(static_cast<std::size_t>(block_size) * hd);
        std::uint64_t local_scored = 0;

#pragma omp for schedule(dynamic, 8)
        for (int qr = 0; qr < a.rows; ++qr) {
            const std::int32_t q_tin = a.trie->nodes[a.node_of[qr]].tin;
            for (int h = 0; h < a.heads; ++h) {
                const int off = h * hd;
                const float* qv = a.q + static_cast<std::size_t>(qr) * a.d_model + off;
                SoftmaxState state(hd);

                // Prefix keys attend unconditionally.
                for (int p0 = 0; p0 < a.prefix_len; p0 += block_size) {
                    const int count = std::min(block_size, a.prefix_len - p0);
                    for (int i = 0; i < count; ++i) {
                        const std::size_t row = static_cast<std::size_t>(p0 + i) * a.d_model;
                        block_scores[i] = dot(qv, a.prefix_k + row + off, hd) * inv_sqrt;
                        for (int d = 0; d < hd; ++d)
                            block_values[static_cast<std::size_t>(i) * hd + d] =
                                a.prefix_v[row + off + d];
                    }
                    local_scored += static_cast<std::uint64_t>(count);
                    state.fold(block_scores.data(), block_values.data(), count, hd);
                }

                // Tree keys: k contributes iff tin[k] <= tin[q] <= tout[k],
                // decided per key from the interval arrays; excluded keys are
                // never scored (their -inf weight is an exact exp-underflow 0).
                for (int k0 = 0; k0 < a.rows; k0 += block_size) {
                    const int limit = std::min(block_size, a.rows - k0);
                    int count = 0;
                    for (int i = 0; i < limit; ++i) {
                        const std::int32_t kn = a.node_of[k0 + i];
                        const auto& node = a.trie->nodes[kn];
                        if (node.tin <= q_tin && q_tin <= node.tout) {
                            const std::size_t row =
                                static_cast<std::size_t>(k0 + i) * a.d_model;
                            block_scores[count] = dot(qv, a.k + row + off, hd) * inv_sqrt;
                            for (int d = 0; d < hd; ++d)
                                block_values[static_cast<std::size_t>(count) * hd + d] =
                                    a.v[row + off + d];
                            ++count;
                        }
                    }
                    local_scored += static_cast<std::uint64_t>(count);
                    state.fold(block_scores.data(), block_values.data(), count, hd);
                }

                state.finish(a.out + static_cast<std::size_t>(qr) * a.d_model + off, hd);
            }
        }
        scored.fetch_add(local_scored, std::memory_order_relaxed);
    }
    if (stats) stats->flash_scores += scored.load();
}

}  // namespace kernels
}  // namespace zeh
