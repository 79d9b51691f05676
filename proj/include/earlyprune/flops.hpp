// Copyright 2026 The earlyprune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "earlyprune/core_types.hpp"

namespace earlyprune {

/// Analytic operation counts. Per layer: attention = 4*T*d^2 + 2*T^2*d with T
/// the tokens entering the layer, MLP = 8*T*d^2 with T the tokens left after
/// the merge step.
struct FlopModel {
    struct Layer {
        std::uint64_t attention = 0;
        std::uint64_t mlp = 0;
    };
    std::vector<Layer> per_layer;
    std::uint64_t attention_total = 0;
    std::uint64_t mlp_total = 0;
    std::uint64_t total = 0;
    std::size_t downstream_llm_tokens = 0;
};

inline std::uint64_t attention_flops(std::uint64_t t, std::uint64_t d) { return 4 * t * d * d + 2 * t * t * d; }
inline std::uint64_t mlp_flops(std::uint64_t t, std::uint64_t d) { return 8 * t * d * d; }

/// `heads` does not enter the count; it is validated only.
inline FlopModel flop_report(const MergeTrace& trace, std::size_t dim, std::size_t heads) {
    if (heads == 0 || dim % heads != 0) throw std::invalid_argument("flop_report: d must be divisible by H");
    if (trace.layers.empty()) throw std::invalid_argument("flop_report: incomplete trace (no layers)");
    FlopModel out;
    for (std::size_t l = 0; l < trace.layers.size(); ++l) {
        const auto& rec = trace.layers[l];
        if (rec.layer != l + 1) throw std::invalid_argument("flop_report: incomplete trace (missing layer " + std::to_string(l + 1) + ")");
        if (l > 0 && rec.count_before != trace.layers[l - 1].count_after) {
            throw std::invalid_argument("flop_report: inconsistent token counts at layer " + std::to_string(l + 1));
        }
        if (rec.count_after > rec.count_before) throw std::invalid_argument("flop_report: token count grew");
        FlopModel::Layer f{attention_flops(rec.count_before, dim), mlp_flops(rec.count_after, dim)};
        out.attention_total += f.attention;
        out.mlp_total += f.mlp;
        out.per_layer.push_back(f);
    }
    out.total = out.attention_total + out.mlp_total;
    out.downstream_llm_tokens = trace.layers.back().count_after;
    return out;
}

/// Total for an L-layer pass that never merges.
inline std::uint64_t unpruned_flops(std::size_t n0, std::size_t dim, std::size_t layers) {
    return layers * (attention_flops(n0, dim) + mlp_flops(n0, dim));
}

}  // namespace earlyprune
