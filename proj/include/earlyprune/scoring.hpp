// Copyright 2026 The earlyprune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "earlyprune/bipartite.hpp"
#include "earlyprune/config.hpp"
#include "earlyprune/core_types.hpp"

namespace earlyprune {

inline constexpr double kRowStochasticTolerance = 1e-6;

/// Mean attention received per token.
struct ImportanceVector {
    std::vector<double> s;
};

/// Local uniqueness per token from a Gaussian-kernel KNN estimate. d_i in [0,1).
struct DensityVector {
    std::vector<double> d;
    std::size_t k = 0;
    double tau = 0.0;
};

struct ScoringParams {
    double lambda_d = 1.0;
    std::size_t k = 5;
    std::optional<double> tau;  // nullopt = auto
    SimilarityNorm norm = SimilarityNorm::Affine;

    static ScoringParams from(const RunConfig& cfg) { return {cfg.lambda_d, cfg.k, cfg.tau, cfg.similarity_norm}; }
};

struct SimilarityResult {
    std::vector<double> values;  // row-major |a| x |b|
    std::size_t degenerate_norms = 0;
};

namespace detail {

inline double row_norm(std::span<const float> v) {
    double sq = 0.0;
    for (float x : v) sq += static_cast<double>(x) * static_cast<double>(x);
    return std::sqrt(sq);
}

inline double cosine_to_unit(double cosine, SimilarityNorm norm) {
    if (norm == SimilarityNorm::Sigmoid) return 1.0 / (1.0 + std::exp(-cosine));
    return (cosine + 1.0) * 0.5;
}

inline double cosine(std::span<const float> x, double nx, std::span<const float> y, double ny) {
    if (nx == 0.0 || ny == 0.0) return 0.0;
    double dot = 0.0;
    for (std::size_t c = 0; c < x.size(); ++c) dot += static_cast<double>(x[c]) * static_cast<double>(y[c]);
    return std::clamp(dot / (nx * ny), -1.0, 1.0);
}

/// Upper triangle of squared Euclidean distances in double, then mirrored.
/// Each pair sums its coordinates in ascending order; four columns are
/// carried at once only to break the dependency chain.
inline std::vector<double> pairwise_sq_distances(const Matrix& v) {
    const std::size_t n = v.rows(), dim = v.cols();
    const std::vector<double> x(v.data().begin(), v.data().end());
    std::vector<double> d2(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* vi = x.data() + i * dim;
        double* out = d2.data() + i * n;
        std::size_t k = i + 1;
        for (; k + 4 <= n; k += 4) {
            const double* v0 = x.data() + k * dim;
            const double* v1 = v0 + dim;
            const double* v2 = v1 + dim;
            const double* v3 = v2 + dim;
            double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
            for (std::size_t c = 0; c < dim; ++c) {
                const double e0 = vi[c] - v0[c], e1 = vi[c] - v1[c], e2 = vi[c] - v2[c], e3 = vi[c] - v3[c];
                a0 += e0 * e0;
                a1 += e1 * e1;
                a2 += e2 * e2;
                a3 += e3 * e3;
            }
            out[k] = a0;
            out[k + 1] = a1;
            out[k + 2] = a2;
            out[k + 3] = a3;
        }
        for (; k < n; ++k) {
            const double* vk = x.data() + k * dim;
            double acc = 0.0;
            for (std::size_t c = 0; c < dim; ++c) {
                const double diff = vi[c] - vk[c];
                acc += diff * diff;
            }
            out[k] = acc;
        }
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < i; ++k) d2[i * n + k] = d2[k * n + i];
    return d2;
}

inline double mean_pairwise_distance(const std::vector<double>& d2, std::size_t n) {
    if (n < 2) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = i + 1; k < n; ++k) sum += std::sqrt(d2[i * n + k]);
    }
    return sum / (static_cast<double>(n) * static_cast<double>(n - 1) / 2.0);
}

inline double resolve_tau(std::optional<double> tau, const std::vector<double>& d2, std::size_t n) {
    if (tau) return *tau;
    const double mean = mean_pairwise_distance(d2, n);
    // all-coincident tokens: any bandwidth gives d = 0
    return mean > 0.0 ? mean : 1.0;
}

inline DensityVector density_from_distances(const std::vector<double>& d2, std::size_t n, std::size_t k, double tau) {
    if (n < 2) throw std::invalid_argument("density undefined for a single token");
    if (!(tau > 0.0)) throw std::invalid_argument("local_density: tau must be > 0");
    if (k == 0) throw std::invalid_argument("local_density: K must be >= 1");
    const std::size_t eff_k = std::min(k, n - 1);
    const double tau2 = tau * tau;
    DensityVector out{std::vector<double>(n, 0.0), eff_k, tau};
    std::vector<std::pair<double, std::size_t>> cand;
    cand.reserve(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        cand.clear();
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) cand.emplace_back(d2[i * n + j], j);
        }
        // (distance, index) ordering breaks distance ties toward the lower index
        std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(eff_k), cand.end());
        double kernel = 0.0;
        for (std::size_t m = 0; m < eff_k; ++m) kernel += std::exp(-cand[m].first / tau2);
        out.d[i] = 1.0 - kernel / static_cast<double>(eff_k);
    }
    return out;
}

}  // namespace detail

/// Similarity between rows `a_rows` and `b_rows` of `features`, mapped into [0,1].
/// A zero-norm row has cosine 0 against everything and is counted as degenerate.
inline SimilarityResult similarity(const Matrix& features, std::span<const std::size_t> a_rows,
                                   std::span<const std::size_t> b_rows,
                                   SimilarityNorm norm = SimilarityNorm::Affine) {
    std::vector<double> norms(features.rows());
    SimilarityResult out{std::vector<double>(a_rows.size() * b_rows.size(), 0.0), 0};
    for (std::size_t i = 0; i < features.rows(); ++i) norms[i] = detail::row_norm(features.row(i));
    for (auto i : a_rows) out.degenerate_norms += norms[i] == 0.0;
    for (auto j : b_rows) out.degenerate_norms += norms[j] == 0.0;
    for (std::size_t i = 0; i < a_rows.size(); ++i) {
        for (std::size_t j = 0; j < b_rows.size(); ++j) {
            const double c = detail::cosine(features.row(a_rows[i]), norms[a_rows[i]], features.row(b_rows[j]),
                                            norms[b_rows[j]]);
            out.values[i * b_rows.size() + j] = detail::cosine_to_unit(c, norm);
        }
    }
    return out;
}

/// Similarity between every row of `a` and every row of `b`.
inline SimilarityResult similarity(const Matrix& a, const Matrix& b, SimilarityNorm norm = SimilarityNorm::Affine) {
    if (a.cols() != b.cols()) throw std::invalid_argument("similarity: dimension mismatch");
    Matrix both(a.rows() + b.rows(), a.cols());
    std::copy(a.data().begin(), a.data().end(), both.data().begin());
    std::copy(b.data().begin(), b.data().end(), both.data().begin() + static_cast<std::ptrdiff_t>(a.data().size()));
    std::vector<std::size_t> ai(a.rows()), bi(b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) ai[i] = i;
    for (std::size_t j = 0; j < b.rows(); ++j) bi[j] = a.rows() + j;
    return similarity(both, ai, bi, norm);
}

/// tau = "auto": mean pairwise Euclidean distance of the rows.
inline double auto_tau(const Matrix& embeddings) {
    return detail::resolve_tau(std::nullopt, detail::pairwise_sq_distances(embeddings), embeddings.rows());
}

/// d_i = 1 - mean_{k in KNN(i)} exp(-|v_i - v_k|^2 / tau^2), K clamped to N-1.
inline DensityVector local_density(const Matrix& embeddings, std::size_t k, std::optional<double> tau) {
    const std::size_t n = embeddings.rows();
    if (n < 2) throw std::invalid_argument("density undefined for a single token");
    const auto d2 = detail::pairwise_sq_distances(embeddings);
    return detail::density_from_distances(d2, n, k, detail::resolve_tau(tau, d2, n));
}

inline double diversity_weight(double d_i, double d_j, double lambda_d) { return std::exp(-lambda_d * (d_i + d_j)); }

/// Column mean of the attention maps averaged over heads: how much attention
/// each token receives.
inline ImportanceVector attention_importance(const AttentionMaps& maps) {
    if (maps.heads.empty()) throw std::invalid_argument("attention_importance: no heads");
    const std::size_t n = maps.tokens();
    for (const auto& head : maps.heads) {
        if (head.rows() != n || head.cols() != n) throw std::invalid_argument("attention maps must be square N x N");
    }
    if (!(max_row_stochastic_error(maps) <= kRowStochasticTolerance)) {
        throw std::invalid_argument("attention rows must sum to 1");
    }
    std::vector<double> acc(n, 0.0);
    for (const auto& head : maps.heads) {
        for (std::size_t q = 0; q < n; ++q) {
            const auto row = head.row(q);
            for (std::size_t i = 0; i < n; ++i) acc[i] += static_cast<double>(row[i]);
        }
    }
    const double denom = static_cast<double>(maps.heads.size()) * static_cast<double>(n);
    for (auto& x : acc) x /= denom;
    return {std::move(acc)};
}

/// Number of importance-protected tokens: max(0, min(floor(CTR*T), T - 2r)).
inline std::size_t protect_count(double ctr, std::size_t tokens, std::size_t merges) {
    const auto by_ratio = static_cast<std::size_t>(std::floor(ctr * static_cast<double>(tokens) + 1e-9));
    const std::size_t floor_room = 2 * merges >= tokens ? 0 : tokens - 2 * merges;
    return std::min(by_ratio, floor_room);
}

/// Sorted positions of the protected set: `always` plus the protect_count()
/// highest-importance tokens outside it (ties toward lower position).
inline std::vector<std::size_t> protected_set(const ImportanceVector& importance, double ctr, std::size_t tokens,
                                              std::size_t merges, std::span<const std::size_t> always = {}) {
    if (importance.s.size() != tokens) throw std::invalid_argument("protected_set: importance length != T");
    std::vector<char> flag(tokens, 0);
    for (auto p : always) {
        if (p < tokens) flag[p] = 1;
    }
    std::vector<std::size_t> order;
    order.reserve(tokens);
    for (std::size_t i = 0; i < tokens; ++i) {
        if (!flag[i]) order.push_back(i);
    }
    const std::size_t n_protect = std::min(protect_count(ctr, tokens, merges), order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_protect), order.end(),
                      [&](std::size_t x, std::size_t y) {
                          if (importance.s[x] != importance.s[y]) return importance.s[x] > importance.s[y];
                          return x < y;
                      });
    for (std::size_t m = 0; m < n_protect; ++m) flag[order[m]] = 1;
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < tokens; ++i) {
        if (flag[i]) out.push_back(i);
    }
    return out;
}

struct ScoreResult {
    ScoreMatrix scores;
    DensityVector density;
    std::size_t degenerate_norms = 0;
};

/// Score_ij = Sim_ij * w_div_ij over the parity split, with pairs touching a
/// protected position masked to -infinity. Density is estimated on the token
/// embeddings; similarity on `similarity_features` (one row per token).
inline ScoreResult composite_scores(const TokenSet& tokens, const Matrix& similarity_features,
                                    std::span<const std::size_t> protected_positions, const ScoringParams& params) {
    const std::size_t n = tokens.size();
    if (similarity_features.rows() != n) throw std::invalid_argument("composite_scores: feature rows != token count");
    if (!(params.lambda_d > 0.0)) throw std::invalid_argument("composite_scores: lambda_d must be > 0");

    std::vector<char> guarded(n, 0);
    for (auto p : protected_positions) {
        if (p >= n) throw std::invalid_argument("composite_scores: protected position out of range");
        guarded[p] = 1;
    }
    const auto split = bipartite_split(n);

    ScoreResult out;
    auto& sm = out.scores;
    sm.rows = split.a.size();
    sm.cols = split.b.size();
    sm.a_indices = split.a;
    sm.b_indices = split.b;
    sm.values.assign(sm.rows * sm.cols, -std::numeric_limits<double>::infinity());
    if (n < 2) return out;

    out.density = local_density(tokens.embeddings(), params.k, params.tau);
    const auto sim = similarity(similarity_features, split.a, split.b, params.norm);
    out.degenerate_norms = sim.degenerate_norms;

    for (std::size_t i = 0; i < sm.rows; ++i) {
        if (guarded[split.a[i]]) continue;
        for (std::size_t j = 0; j < sm.cols; ++j) {
            if (guarded[split.b[j]]) continue;
            const double w = diversity_weight(out.density.d[split.a[i]], out.density.d[split.b[j]], params.lambda_d);
            sm.values[i * sm.cols + j] = sim.values[i * sm.cols + j] * w;
        }
    }
    return out;
}

/// Convenience form that derives the protected set from the attention maps.
inline ScoreResult composite_scores(const TokenSet& tokens, const AttentionMaps& maps, const Matrix& similarity_features,
                                    const RunConfig& cfg, std::size_t merges,
                                    std::span<const std::size_t> always = {}) {
    const auto importance = attention_importance(maps);
    const auto guarded = protected_set(importance, cfg.ctr, tokens.size(), merges, always);
    return composite_scores(tokens, similarity_features, guarded, ScoringParams::from(cfg));
}

}  // namespace earlyprune
