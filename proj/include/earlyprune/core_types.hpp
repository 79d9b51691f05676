// Copyright 2026 The earlyprune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace earlyprune {

/// Dense row-major float matrix. Rows are tokens, columns are features.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, float fill = 0.0f)
        : m_rows(rows), m_cols(cols), m_data(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<float> data)
        : m_rows(rows), m_cols(cols), m_data(std::move(data)) {
        if (m_data.size() != rows * cols) {
            throw std::invalid_argument("Matrix: data size does not match shape");
        }
    }

    std::size_t rows() const noexcept { return m_rows; }
    std::size_t cols() const noexcept { return m_cols; }
    bool empty() const noexcept { return m_data.empty(); }

    float& operator()(std::size_t r, std::size_t c) noexcept { return m_data[r * m_cols + c]; }
    float operator()(std::size_t r, std::size_t c) const noexcept { return m_data[r * m_cols + c]; }

    std::span<float> row(std::size_t r) noexcept { return {m_data.data() + r * m_cols, m_cols}; }
    std::span<const float> row(std::size_t r) const noexcept { return {m_data.data() + r * m_cols, m_cols}; }

    std::vector<float>& data() noexcept { return m_data; }
    const std::vector<float>& data() const noexcept { return m_data; }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t m_rows = 0;
    std::size_t m_cols = 0;
    std::vector<float> m_data;
};

/// One visual token. `size` counts the original tokens folded into it and
/// always equals `origin_ids.size()`; `origin_ids` is kept sorted.
struct Token {
    std::vector<float> embedding;
    std::size_t size = 1;
    std::vector<std::uint32_t> origin_ids;
    bool is_protected = false;

    friend bool operator==(const Token&, const Token&) = default;
};

/// Ordered token collection. Positions (0-based) are what the bipartite split
/// and the merge trace refer to.
class TokenSet {
public:
    TokenSet() = default;
    TokenSet(std::vector<Token> tokens, std::size_t dim) : m_tokens(std::move(tokens)), m_dim(dim) {}

    /// Fresh token set, token i carrying origin id i.
    static TokenSet from_embeddings(const Matrix& embeddings) {
        std::vector<Token> tokens;
        tokens.reserve(embeddings.rows());
        for (std::size_t i = 0; i < embeddings.rows(); ++i) {
            auto row = embeddings.row(i);
            tokens.push_back(Token{{row.begin(), row.end()}, 1, {static_cast<std::uint32_t>(i)}, false});
        }
        return TokenSet(std::move(tokens), embeddings.cols());
    }

    std::size_t size() const noexcept { return m_tokens.size(); }
    bool empty() const noexcept { return m_tokens.empty(); }
    std::size_t dim() const noexcept { return m_dim; }

    Token& operator[](std::size_t i) noexcept { return m_tokens[i]; }
    const Token& operator[](std::size_t i) const noexcept { return m_tokens[i]; }

    std::vector<Token>& tokens() noexcept { return m_tokens; }
    const std::vector<Token>& tokens() const noexcept { return m_tokens; }

    /// Sum of token sizes; equals the original token count N0.
    std::size_t total_size() const noexcept {
        std::size_t total = 0;
        for (const auto& t : m_tokens) total += t.size;
        return total;
    }

    Matrix embeddings() const {
        Matrix out(m_tokens.size(), m_dim);
        for (std::size_t i = 0; i < m_tokens.size(); ++i) {
            std::copy(m_tokens[i].embedding.begin(), m_tokens[i].embedding.end(), out.row(i).begin());
        }
        return out;
    }

    void set_embeddings(const Matrix& m) {
        if (m.rows() != m_tokens.size() || m.cols() != m_dim) {
            throw std::invalid_argument("TokenSet::set_embeddings: shape mismatch");
        }
        for (std::size_t i = 0; i < m_tokens.size(); ++i) {
            auto row = m.row(i);
            std::copy(row.begin(), row.end(), m_tokens[i].embedding.begin());
        }
    }

    /// Checks the size/origin bookkeeping against an original count of `n0`.
    /// Returns an empty string when consistent, otherwise a description.
    std::string check_invariants(std::size_t n0) const {
        std::vector<char> seen(n0, 0);
        std::size_t total = 0;
        for (std::size_t i = 0; i < m_tokens.size(); ++i) {
            const auto& t = m_tokens[i];
            if (t.embedding.size() != m_dim) return "token " + std::to_string(i) + " has wrong dimension";
            if (t.size < 1 || t.size != t.origin_ids.size()) {
                return "token " + std::to_string(i) + " size does not match origin_ids";
            }
            for (auto id : t.origin_ids) {
                if (id >= n0) return "origin id " + std::to_string(id) + " out of range";
                if (seen[id]) return "origin id " + std::to_string(id) + " appears twice";
                seen[id] = 1;
            }
            total += t.size;
        }
        if (total != n0) return "sizes sum to " + std::to_string(total) + ", expected " + std::to_string(n0);
        return {};
    }

    friend bool operator==(const TokenSet&, const TokenSet&) = default;

private:
    std::vector<Token> m_tokens;
    std::size_t m_dim = 0;
};

/// Per-head post-softmax attention, heads[h] is N x N and row-stochastic.
struct AttentionMaps {
    std::vector<Matrix> heads;

    std::size_t head_count() const noexcept { return heads.size(); }
    std::size_t tokens() const noexcept { return heads.empty() ? 0 : heads.front().rows(); }
};

/// Largest |row sum - 1| over all heads, accumulated in double.
inline double max_row_stochastic_error(const AttentionMaps& maps) {
    double worst = 0.0;
    for (const auto& head : maps.heads) {
        for (std::size_t i = 0; i < head.rows(); ++i) {
            double sum = 0.0;
            for (float v : head.row(i)) {
                if (v < 0.0f || !std::isfinite(v)) return INFINITY;
                sum += v;
            }
            worst = std::max(worst, std::abs(sum - 1.0));
        }
    }
    return worst;
}

/// Per-layer merge counts r_1..r_L. Layer l (1-based) lives at index l-1.
struct PruneSchedule {
    std::vector<std::size_t> per_layer;

    std::size_t layers() const noexcept { return per_layer.size(); }
    std::size_t total() const noexcept { return std::accumulate(per_layer.begin(), per_layer.end(), std::size_t{0}); }

    friend bool operator==(const PruneSchedule&, const PruneSchedule&) = default;
};

/// Tokens a layer may merge when `tokens_in` enter it.
constexpr std::size_t layer_capacity(std::size_t tokens_in) noexcept {
    if (tokens_in == 0) return 0;
    return std::min(tokens_in / 2, tokens_in - 1);
}

/// Forward-simulates the schedule from n0 tokens and checks every per-layer cap.
inline bool schedule_feasible(const PruneSchedule& schedule, std::size_t n0) {
    std::size_t t = n0;
    for (auto r : schedule.per_layer) {
        if (r > layer_capacity(t)) return false;
        t -= r;
    }
    return t >= 1;
}

/// |a| x |b| merge-benefit scores. Masked entries hold -infinity.
struct ScoreMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;
    std::vector<std::size_t> a_indices;  // row -> token position
    std::vector<std::size_t> b_indices;  // column -> token position

    double operator()(std::size_t i, std::size_t j) const noexcept { return values[i * cols + j]; }
    bool masked(std::size_t i, std::size_t j) const noexcept { return std::isinf(values[i * cols + j]); }
};

/// A single selected merge: token at position `src` (group a) folds into `dst` (group b).
struct MergePair {
    std::size_t src = 0;
    std::size_t dst = 0;
    double score = 0.0;

    friend bool operator==(const MergePair&, const MergePair&) = default;
};

/// What happened at one encoder layer.
struct LayerRecord {
    std::size_t layer = 0;  // 1-based
    std::size_t scheduled = 0;
    std::size_t requested = 0;  // scheduled plus carried shortfall, capped
    std::vector<std::size_t> protected_positions;
    std::vector<MergePair> pairs;
    std::size_t count_before = 0;
    std::size_t count_after = 0;
    std::size_t shortfall = 0;  // budget still pending after this layer
    std::size_t degenerate_norms = 0;
    double tau = 0.0;

    friend bool operator==(const LayerRecord&, const LayerRecord&) = default;
};

struct TraceMetadata {
    std::string strategy;
    std::size_t budget = 0;
    double ctr = 0.0;
    double lambda_d = 0.0;
    std::size_t k = 0;
    std::string tau;
    std::uint64_t seed = 0;
    std::size_t n0 = 0;

    friend bool operator==(const TraceMetadata&, const TraceMetadata&) = default;
};

struct MergeTrace {
    TraceMetadata meta;
    std::vector<LayerRecord> layers;
    std::size_t unspent = 0;  // budget still pending after the final layer

    std::size_t merged() const noexcept {
        std::size_t n = 0;
        for (const auto& rec : layers) n += rec.pairs.size();
        return n;
    }

    friend bool operator==(const MergeTrace&, const MergeTrace&) = default;
};

}  // namespace earlyprune
