// Copyright 2026 The earlyprune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "earlyprune/bipartite.hpp"
#include "earlyprune/config.hpp"
#include "earlyprune/core_types.hpp"
#include "earlyprune/scoring.hpp"

namespace earlyprune {

struct PairSelection {
    std::vector<MergePair> pairs;  // score descending
    std::size_t shortfall = 0;     // r minus the number of pairs found
};

/// Best b-partner per a-row (ties toward the lower column), then the r
/// highest-scoring rows (ties toward the lower row). Rows with no finite entry
/// are not candidates. Several rows may share a destination.
inline PairSelection select_pairs(const ScoreMatrix& scores, std::size_t r) {
    struct Candidate {
        std::size_t row;
        std::size_t col;
        double score;
    };
    std::vector<Candidate> cand;
    cand.reserve(scores.rows);
    for (std::size_t i = 0; i < scores.rows; ++i) {
        std::size_t best = scores.cols;
        double best_score = 0.0;
        for (std::size_t j = 0; j < scores.cols; ++j) {
            const double v = scores(i, j);
            if (std::isinf(v) && v < 0) continue;
            if (best == scores.cols || v > best_score) {
                best = j;
                best_score = v;
            }
        }
        if (best != scores.cols) cand.push_back({i, best, best_score});
    }
    const std::size_t take = std::min(r, cand.size());
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(take), cand.end(),
                      [](const Candidate& x, const Candidate& y) {
                          if (x.score != y.score) return x.score > y.score;
                          return x.row < y.row;
                      });
    PairSelection out;
    out.pairs.reserve(take);
    for (std::size_t m = 0; m < take; ++m) {
        out.pairs.push_back({scores.a_indices[cand[m].row], scores.b_indices[cand[m].col], cand[m].score});
    }
    out.shortfall = r - take;
    return out;
}

/// Folds every `src` into its `dst` as a size-weighted average, drops the
/// sources and keeps survivors in their original order.
inline TokenSet apply_merges(const TokenSet& tokens, std::span<const MergePair> pairs) {
    if (pairs.empty()) return tokens;
    const std::size_t n = tokens.size();
    constexpr std::size_t kNone = static_cast<std::size_t>(-1);
    std::vector<std::size_t> target(n, kNone);
    std::vector<char> is_dst(n, 0);
    for (const auto& p : pairs) {
        if (p.src >= n || p.dst >= n) throw std::invalid_argument("apply_merges: position out of range");
        if (p.src == p.dst) throw std::invalid_argument("apply_merges: token merged into itself");
        if (target[p.src] != kNone) throw std::invalid_argument("source merged twice");
        if (tokens[p.src].is_protected || tokens[p.dst].is_protected) {
            throw std::invalid_argument("apply_merges: protected token in a merge pair");
        }
        target[p.src] = p.dst;
        is_dst[p.dst] = 1;
    }
    for (const auto& p : pairs) {
        if (target[p.dst] != kNone || is_dst[p.src]) {
            throw std::invalid_argument("apply_merges: token is both a merge source and a destination");
        }
    }

    const std::size_t dim = tokens.dim();
    std::vector<std::vector<std::size_t>> sources(n);
    for (std::size_t pos = 0; pos < n; ++pos) {
        if (target[pos] != kNone) sources[target[pos]].push_back(pos);
    }

    std::vector<Token> out;
    out.reserve(n - pairs.size());
    std::vector<double> acc(dim);
    for (std::size_t pos = 0; pos < n; ++pos) {
        if (target[pos] != kNone) continue;
        if (sources[pos].empty()) {
            out.push_back(tokens[pos]);
            continue;
        }
        Token merged = tokens[pos];
        const auto weight = static_cast<double>(merged.size);
        for (std::size_t c = 0; c < dim; ++c) acc[c] = weight * static_cast<double>(merged.embedding[c]);
        for (auto s : sources[pos]) {
            const auto& src = tokens[s];
            const auto w = static_cast<double>(src.size);
            for (std::size_t c = 0; c < dim; ++c) acc[c] += w * static_cast<double>(src.embedding[c]);
            merged.size += src.size;
            merged.origin_ids.insert(merged.origin_ids.end(), src.origin_ids.begin(), src.origin_ids.end());
        }
        const auto total = static_cast<double>(merged.size);
        for (std::size_t c = 0; c < dim; ++c) merged.embedding[c] = static_cast<float>(acc[c] / total);
        std::sort(merged.origin_ids.begin(), merged.origin_ids.end());
        out.push_back(std::move(merged));
    }
    return TokenSet(std::move(out), dim);
}

struct MergeParams {
    double ctr = 0.25;
    ScoringParams scoring;
    std::vector<std::uint32_t> always_protect;  // original token ids

    static MergeParams from(const RunConfig& cfg) { return {cfg.ctr, ScoringParams::from(cfg), cfg.always_protect}; }
};

/// Positions of tokens containing any of `ids`.
inline std::vector<std::size_t> positions_of(const TokenSet& tokens, std::span<const std::uint32_t> ids) {
    std::vector<std::size_t> out;
    if (ids.empty()) return out;
    for (std::size_t pos = 0; pos < tokens.size(); ++pos) {
        const auto& origin = tokens[pos].origin_ids;
        const bool hit = std::any_of(ids.begin(), ids.end(), [&](std::uint32_t id) {
            return std::binary_search(origin.begin(), origin.end(), id);
        });
        if (hit) out.push_back(pos);
    }
    return out;
}

struct LayerOutcome {
    TokenSet tokens;
    LayerRecord record;
};

/// One in-encoder merge step over the current token set. `maps` must be this
/// layer's attention over exactly these tokens and `similarity_features` must
/// have one row per token. r = 0 returns the input untouched.
inline LayerOutcome merge_layer(const TokenSet& tokens, const AttentionMaps& maps, const Matrix& similarity_features,
                                const MergeParams& params, std::size_t r, std::size_t layer = 0) {
    const std::size_t t = tokens.size();
    LayerOutcome out;
    out.record.layer = layer;
    out.record.scheduled = r;
    out.record.requested = r;
    out.record.count_before = t;
    if (r == 0) {
        out.tokens = tokens;
        out.record.count_after = t;
        return out;
    }
    if (r > t / 2) {
        throw std::invalid_argument("merge_layer: r=" + std::to_string(r) + " exceeds floor(T/2) for T=" +
                                    std::to_string(t));
    }
    if (maps.tokens() != t) throw std::invalid_argument("merge_layer: attention maps do not match token count");

    const auto importance = attention_importance(maps);
    const auto always = positions_of(tokens, params.always_protect);
    auto guarded = protected_set(importance, params.ctr, t, r, always);
    const auto scored = composite_scores(tokens, similarity_features, guarded, params.scoring);
    auto selection = select_pairs(scored.scores, r);

    TokenSet marked = tokens;
    for (auto& tok : marked.tokens()) tok.is_protected = false;
    for (auto p : guarded) marked[p].is_protected = true;

    out.tokens = apply_merges(marked, selection.pairs);
    out.record.protected_positions = std::move(guarded);
    out.record.pairs = std::move(selection.pairs);
    out.record.count_after = out.tokens.size();
    out.record.shortfall = selection.shortfall;
    out.record.degenerate_norms = scored.degenerate_norms;
    out.record.tau = scored.density.tau;
    return out;
}

}  // namespace earlyprune
