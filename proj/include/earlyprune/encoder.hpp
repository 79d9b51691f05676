// Copyright 2026 The earlyprune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Minimal pre-norm transformer encoder, forward only.
//
// Numerics: all tensors are float. Matrix products accumulate in float over
// the inner dimension in ascending order. LayerNorm statistics and softmax
// denominators accumulate in double so attention rows sum to 1 within 1e-6.
// Everything is single-threaded; identical inputs give bit-identical outputs.

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "earlyprune/binary_io.hpp"
#include "earlyprune/config.hpp"
#include "earlyprune/core_types.hpp"
#include "earlyprune/merging.hpp"

namespace earlyprune {

struct LayerWeights {
    std::vector<float> ln1_scale, ln1_shift;
    Matrix wq, wk, wv, wo;  // d x d, applied as x * W
    std::vector<float> ln2_scale, ln2_shift;
    Matrix w1;  // d x 4d
    Matrix w2;  // 4d x d

    friend bool operator==(const LayerWeights&, const LayerWeights&) = default;
};

struct EncoderWeights {
    std::size_t dim = 0;
    std::size_t heads = 0;
    std::vector<LayerWeights> layers;

    std::size_t head_dim() const noexcept { return heads == 0 ? 0 : dim / heads; }

    /// Throws on bad shapes or non-finite entries.
    void validate() const {
        if (heads == 0 || dim == 0 || dim % heads != 0) throw std::invalid_argument("EncoderWeights: d % H != 0");
        auto check = [&](const Matrix& m, std::size_t r, std::size_t c, const char* name) {
            if (m.rows() != r || m.cols() != c) throw std::invalid_argument(std::string("EncoderWeights: bad shape for ") + name);
            for (float v : m.data()) {
                if (!std::isfinite(v)) throw std::invalid_argument(std::string("EncoderWeights: non-finite entry in ") + name);
            }
        };
        auto check_vec = [&](const std::vector<float>& v, const char* name) {
            if (v.size() != dim) throw std::invalid_argument(std::string("EncoderWeights: bad length for ") + name);
        };
        for (const auto& l : layers) {
            check_vec(l.ln1_scale, "ln1_scale");
            check_vec(l.ln1_shift, "ln1_shift");
            check_vec(l.ln2_scale, "ln2_scale");
            check_vec(l.ln2_shift, "ln2_shift");
            check(l.wq, dim, dim, "wq");
            check(l.wk, dim, dim, "wk");
            check(l.wv, dim, dim, "wv");
            check(l.wo, dim, dim, "wo");
            check(l.w1, dim, 4 * dim, "w1");
            check(l.w2, 4 * dim, dim, "w2");
        }
    }

    friend bool operator==(const EncoderWeights&, const EncoderWeights&) = default;
};

/// Matrices uniform in [-0.02, 0.02] from mt19937_64(seed), drawn in the order
/// wq, wk, wv, wo, w1, w2 per layer; each float takes the top 24 bits of one
/// draw. Norm scales are 1 and shifts 0.
inline EncoderWeights init_weights(std::uint64_t seed, std::size_t dim, std::size_t heads, std::size_t layers) {
    if (heads == 0 || dim % heads != 0) throw std::invalid_argument("init_weights: d must be divisible by H");
    std::mt19937_64 rng(seed);
    auto fill = [&](std::size_t r, std::size_t c) {
        Matrix m(r, c);
        for (auto& v : m.data()) {
            const float u = static_cast<float>(rng() >> 40) * 0x1.0p-24f;
            v = -0.02f + 0.04f * u;
        }
        return m;
    };
    EncoderWeights w{dim, heads, {}};
    w.layers.reserve(layers);
    for (std::size_t l = 0; l < layers; ++l) {
        LayerWeights lw;
        lw.ln1_scale.assign(dim, 1.0f);
        lw.ln1_shift.assign(dim, 0.0f);
        lw.ln2_scale.assign(dim, 1.0f);
        lw.ln2_shift.assign(dim, 0.0f);
        lw.wq = fill(dim, dim);
        lw.wk = fill(dim, dim);
        lw.wv = fill(dim, dim);
        lw.wo = fill(dim, dim);
        lw.w1 = fill(dim, 4 * dim);
        lw.w2 = fill(4 * dim, dim);
        w.layers.push_back(std::move(lw));
    }
    return w;
}

inline constexpr std::uint32_t kWeightMagic = 0x54575045;  // "EPWT" little-endian

/// Writes the flat weight file: magic, d, H, L (u32), then per layer
/// ln1_scale, ln1_shift, wq, wk, wv, wo, ln2_scale, ln2_shift, w1, w2 as
/// row-major little-endian f32.
inline void save_weights(const EncoderWeights& w, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write weight file '" + path + "'");
    io::write_u32(os, kWeightMagic);
    io::write_u32(os, static_cast<std::uint32_t>(w.dim));
    io::write_u32(os, static_cast<std::uint32_t>(w.heads));
    io::write_u32(os, static_cast<std::uint32_t>(w.layers.size()));
    auto put = [&](std::span<const float> v) {
        for (float x : v) io::write_f32(os, x);
    };
    for (const auto& l : w.layers) {
        put(l.ln1_scale);
        put(l.ln1_shift);
        put(l.wq.data());
        put(l.wk.data());
        put(l.wv.data());
        put(l.wo.data());
        put(l.ln2_scale);
        put(l.ln2_shift);
        put(l.w1.data());
        put(l.w2.data());
    }
    if (!os) throw std::runtime_error("failed writing weight file '" + path + "'");
}

inline EncoderWeights load_weights(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open weight file '" + path + "'");
    const std::string what = "weight file '" + path + "'";
    if (io::read_u32(is, what) != kWeightMagic) throw std::runtime_error(what + ": bad magic");
    EncoderWeights w;
    w.dim = io::read_u32(is, what);
    w.heads = io::read_u32(is, what);
    const std::size_t layers = io::read_u32(is, what);
    if (w.heads == 0 || w.dim == 0 || w.dim % w.heads != 0) throw std::runtime_error(what + ": d % H != 0");
    auto vec = [&](std::size_t n) {
        std::vector<float> v(n);
        for (auto& x : v) x = io::read_f32(is, what);
        return v;
    };
    const std::size_t d = w.dim;
    for (std::size_t l = 0; l < layers; ++l) {
        LayerWeights lw;
        lw.ln1_scale = vec(d);
        lw.ln1_shift = vec(d);
        lw.wq = Matrix(d, d, vec(d * d));
        lw.wk = Matrix(d, d, vec(d * d));
        lw.wv = Matrix(d, d, vec(d * d));
        lw.wo = Matrix(d, d, vec(d * d));
        lw.ln2_scale = vec(d);
        lw.ln2_shift = vec(d);
        lw.w1 = Matrix(d, 4 * d, vec(d * 4 * d));
        lw.w2 = Matrix(4 * d, d, vec(4 * d * d));
        w.layers.push_back(std::move(lw));
    }
    if (is.peek() != std::char_traits<char>::eof()) throw std::runtime_error(what + ": trailing bytes");
    w.validate();
    return w;
}

namespace detail {

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw std::invalid_argument("matmul: dimension mismatch");
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    Matrix c(n, m);
    for (std::size_t i = 0; i < n; ++i) {
        float* ci = c.row(i).data();
        const float* ai = a.row(i).data();
        for (std::size_t p = 0; p < k; ++p) {
            const float av = ai[p];
            const float* bp = b.row(p).data();
            for (std::size_t j = 0; j < m; ++j) ci[j] += av * bp[j];
        }
    }
    return c;
}

inline Matrix layer_norm(const Matrix& x, std::span<const float> scale, std::span<const float> shift) {
    constexpr double kEps = 1e-5;
    Matrix out(x.rows(), x.cols());
    const auto d = static_cast<double>(x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const auto row = x.row(i);
        double mean = 0.0;
        for (float v : row) mean += v;
        mean /= d;
        double var = 0.0;
        for (float v : row) var += (v - mean) * (v - mean);
        var /= d;
        const auto inv = static_cast<float>(1.0 / std::sqrt(var + kEps));
        const auto mu = static_cast<float>(mean);
        auto o = out.row(i);
        for (std::size_t c = 0; c < x.cols(); ++c) o[c] = (row[c] - mu) * inv * scale[c] + shift[c];
    }
    return out;
}

inline float gelu(float x) { return 0.5f * x * (1.0f + std::erf(x * 0.70710678118654752f)); }

inline void check_block_input(const Matrix& x, const LayerWeights& w) {
    if (x.cols() != w.wq.rows()) {
        throw std::invalid_argument("encoder block: token dimension " + std::to_string(x.cols()) +
                                    " does not match weights " + std::to_string(w.wq.rows()));
    }
}

}  // namespace detail

struct AttentionOutput {
    Matrix hidden;        // x + MHSA(LN1(x))
    AttentionMaps maps;   // post-softmax, per head
    Matrix keys;          // keys averaged over heads, T x head_dim
};

/// Pre-norm multi-head self-attention with residual.
inline AttentionOutput attention_block(const Matrix& x, const LayerWeights& w, std::size_t heads) {
    detail::check_block_input(x, w);
    const std::size_t t = x.rows(), d = x.cols();
    if (heads == 0 || d % heads != 0) throw std::invalid_argument("attention_block: d % H != 0");
    const std::size_t hd = d / heads;
    const float scale = 1.0f / std::sqrt(static_cast<float>(hd));

    const Matrix h = detail::layer_norm(x, w.ln1_scale, w.ln1_shift);
    const Matrix q = detail::matmul(h, w.wq);
    const Matrix k = detail::matmul(h, w.wk);
    const Matrix v = detail::matmul(h, w.wv);

    AttentionOutput out;
    out.maps.heads.reserve(heads);
    out.keys = Matrix(t, hd);
    Matrix ctx(t, d);
    Matrix qh(t, hd), kt(hd, t), vh(t, hd);
    for (std::size_t head = 0; head < heads; ++head) {
        const std::size_t off = head * hd;
        for (std::size_t i = 0; i < t; ++i) {
            for (std::size_t c = 0; c < hd; ++c) {
                qh(i, c) = q(i, off + c) * scale;
                kt(c, i) = k(i, off + c);
                vh(i, c) = v(i, off + c);
                out.keys(i, c) += k(i, off + c);
            }
        }
        Matrix s = detail::matmul(qh, kt);
        for (std::size_t i = 0; i < t; ++i) {
            auto row = s.row(i);
            float mx = row[0];
            for (float val : row) mx = std::max(mx, val);
            double sum = 0.0;
            for (auto& val : row) {
                val = std::exp(val - mx);
                sum += val;
            }
            const auto inv = static_cast<float>(1.0 / sum);
            for (auto& val : row) val *= inv;
        }
        const Matrix c = detail::matmul(s, vh);
        for (std::size_t i = 0; i < t; ++i) {
            for (std::size_t cc = 0; cc < hd; ++cc) ctx(i, off + cc) = c(i, cc);
        }
        out.maps.heads.push_back(std::move(s));
    }
    const float inv_heads = 1.0f / static_cast<float>(heads);
    for (auto& val : out.keys.data()) val *= inv_heads;

    out.hidden = detail::matmul(ctx, w.wo);
    for (std::size_t i = 0; i < out.hidden.data().size(); ++i) out.hidden.data()[i] += x.data()[i];
    return out;
}

/// Pre-norm GELU MLP (d -> 4d -> d) with residual.
inline Matrix mlp_block(const Matrix& x, const LayerWeights& w) {
    detail::check_block_input(x, w);
    const Matrix h = detail::layer_norm(x, w.ln2_scale, w.ln2_shift);
    Matrix u = detail::matmul(h, w.w1);
    for (auto& val : u.data()) val = detail::gelu(val);
    Matrix out = detail::matmul(u, w.w2);
    for (std::size_t i = 0; i < out.data().size(); ++i) out.data()[i] += x.data()[i];
    return out;
}

/// Plain encoder with no pruning path.
inline Matrix encode(Matrix x, const EncoderWeights& weights) {
    for (const auto& lw : weights.layers) {
        x = attention_block(x, lw, weights.heads).hidden;
        x = mlp_block(x, lw);
    }
    return x;
}

struct ForwardResult {
    TokenSet tokens;
    MergeTrace trace;
    double prune_seconds = 0.0;  // time spent inside merge steps
};

/// Encoder pass with merging between attention and MLP wherever the layer's
/// budget is positive. Budget a layer could not spend carries to the next
/// layer with a positive budget, or to the next layer when none remains.
inline ForwardResult forward(const TokenSet& tokens0, const EncoderWeights& weights, const PruneSchedule& schedule,
                             const RunConfig& cfg) {
    const std::size_t layers = weights.layers.size();
    if (schedule.layers() != layers) throw std::invalid_argument("forward: schedule length != encoder layers");
    if (tokens0.dim() != weights.dim) throw std::invalid_argument("forward: token dimension != encoder dimension");
    if (!schedule_feasible(schedule, tokens0.size())) throw std::invalid_argument("forward: infeasible schedule");

    const auto params = MergeParams::from(cfg);
    std::vector<char> positive_ahead(layers + 1, 0);  // any r > 0 at index >= l
    for (std::size_t l = layers; l-- > 0;) positive_ahead[l] = positive_ahead[l + 1] || schedule.per_layer[l] > 0;

    ForwardResult out;
    out.tokens = tokens0;
    out.trace.layers.reserve(layers);
    std::size_t pending = 0;
    for (std::size_t l = 0; l < layers; ++l) {
        const auto& lw = weights.layers[l];
        auto att = attention_block(out.tokens.embeddings(), lw, weights.heads);
        out.tokens.set_embeddings(att.hidden);

        const std::size_t scheduled = schedule.per_layer[l];
        const bool takes_carry = scheduled > 0 || !positive_ahead[l];
        const std::size_t want = scheduled + (takes_carry ? pending : 0);
        const std::size_t r = std::min(want, layer_capacity(out.tokens.size()));
        LayerRecord rec;
        if (r > 0) {
            const auto t0 = std::chrono::steady_clock::now();
            const Matrix& features =
                cfg.similarity_source == SimilaritySource::AttentionKeys ? att.keys : att.hidden;
            auto step = merge_layer(out.tokens, att.maps, features, params, r, l + 1);
            out.tokens = std::move(step.tokens);
            rec = std::move(step.record);
            out.prune_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        } else {
            rec.count_before = rec.count_after = out.tokens.size();
        }
        rec.layer = l + 1;
        rec.scheduled = scheduled;
        rec.requested = r;
        const std::size_t merged = rec.count_before - rec.count_after;
        if (takes_carry) pending = want - merged;
        rec.shortfall = pending;

        out.tokens.set_embeddings(mlp_block(out.tokens.embeddings(), lw));
        out.trace.layers.push_back(std::move(rec));
    }
    out.trace.unspent = pending;
    out.trace.meta = {to_string(cfg.strategy), schedule.total(), cfg.ctr, cfg.lambda_d, cfg.k,
                      cfg.tau ? detail::format_double(*cfg.tau) : "auto", cfg.seed, tokens0.size()};
    return out;
}

}  // namespace earlyprune
