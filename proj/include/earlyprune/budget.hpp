// Copyright 2026 The earlyprune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "earlyprune/config.hpp"
#include "earlyprune/core_types.hpp"

namespace earlyprune {

/// Thrown when no integer schedule fits the per-layer caps.
class InfeasibleSchedule : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kUncapped = std::numeric_limits<std::size_t>::max();

/// Normalized per-layer share of the budget. Layers are 1-based in the
/// strategy definitions; index l-1 holds layer l.
inline std::vector<double> strategy_weights(const Strategy& strategy, std::size_t layers) {
    if (layers == 0) throw std::invalid_argument("strategy_weights: layers must be >= 1");
    std::vector<double> w(layers, 0.0);
    switch (strategy.kind) {
        case Strategy::Kind::Mean:
            std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(layers));
            return w;
        case Strategy::Kind::Skip: {
            // odd layers 1, 3, 5, ...
            const double share = 1.0 / static_cast<double>((layers + 1) / 2);
            for (std::size_t i = 0; i < layers; i += 2) w[i] = share;
            return w;
        }
        case Strategy::Kind::First:
        case Strategy::Kind::Last: {
            const std::size_t n = strategy.window;
            if (n < 1 || n > layers) throw std::invalid_argument("strategy window N must satisfy 1 <= N <= L");
            const std::size_t begin = strategy.kind == Strategy::Kind::First ? 0 : layers - n;
            for (std::size_t i = begin; i < begin + n; ++i) w[i] = 1.0 / static_cast<double>(n);
            return w;
        }
        case Strategy::Kind::Increasing:
        case Strategy::Kind::Decreasing: {
            if (!(strategy.alpha >= 0.0) || !std::isfinite(strategy.alpha)) {
                throw std::invalid_argument("strategy alpha must be finite and >= 0");
            }
            double total = 0.0;
            for (std::size_t i = 0; i < layers; ++i) {
                const std::size_t depth = strategy.kind == Strategy::Kind::Increasing ? i + 1 : layers - i;
                w[i] = std::pow(static_cast<double>(depth), strategy.alpha);
                total += w[i];
            }
            for (auto& x : w) x /= total;
            return w;
        }
    }
    return w;
}

/// Largest-remainder split of `total` by `weights` (ties toward earlier layers).
inline std::vector<std::size_t> largest_remainder(std::span<const double> weights, std::size_t total) {
    constexpr double kSlack = 1e-9;  // absorbs R*w landing a hair under an integer
    const std::size_t n = weights.size();
    std::vector<std::size_t> out(n, 0);
    std::vector<double> frac(n, 0.0);
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double quota = static_cast<double>(total) * weights[i];
        const double base = std::floor(quota + kSlack);
        out[i] = static_cast<std::size_t>(base);
        // snapped so that mathematically equal remainders compare equal
        frac[i] = std::round(std::max(0.0, quota - base) * 1e9);
        assigned += out[i];
    }
    if (assigned > total) throw std::invalid_argument("largest_remainder: weights sum above 1");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
    for (std::size_t k = 0; assigned < total; k = (k + 1) % n) {
        ++out[order[k]];
        ++assigned;
    }
    return out;
}

/// Largest-remainder rounding of total*weights, then a forward pass that clamps
/// each layer to `cap(layer, tokens_merged_before_layer)` and spills any excess
/// into the following layer.
template <typename CapFn>
std::vector<std::size_t> round_with_caps(std::span<const double> weights, std::size_t total, CapFn&& cap) {
    auto out = largest_remainder(weights, total);
    std::size_t carry = 0;
    std::size_t merged = 0;
    for (std::size_t l = 0; l < out.size(); ++l) {
        const std::size_t want = out[l] + carry;
        const std::size_t limit = cap(l, merged);
        out[l] = std::min(want, limit);
        carry = want - out[l];
        merged += out[l];
    }
    if (carry > 0) {
        throw InfeasibleSchedule("cannot place " + std::to_string(carry) + " of " + std::to_string(total) +
                                 " merges within per-layer capacity");
    }
    return out;
}

/// Static-cap variant; use kUncapped for an unbounded layer.
inline std::vector<std::size_t> round_to_integers(std::span<const double> weights, std::size_t total,
                                                  std::span<const std::size_t> caps) {
    if (caps.size() != weights.size()) throw std::invalid_argument("round_to_integers: caps/weights length mismatch");
    return round_with_caps(weights, total, [&](std::size_t l, std::size_t) { return caps[l]; });
}

/// Feasible per-layer schedule for removing `budget` of `n0` tokens over `layers` layers.
inline PruneSchedule allocate(const Strategy& strategy, std::size_t layers, std::size_t budget, std::size_t n0) {
    if (budget >= n0) throw std::invalid_argument("allocate: R must be < N0");
    const auto weights = strategy_weights(strategy, layers);
    try {
        auto r = round_with_caps(weights, budget,
                                 [n0](std::size_t, std::size_t merged) { return layer_capacity(n0 - merged); });
        return PruneSchedule{std::move(r)};
    } catch (const InfeasibleSchedule& e) {
        throw InfeasibleSchedule("infeasible(R=" + std::to_string(budget) + ", N0=" + std::to_string(n0) +
                                 ", strategy=" + to_string(strategy) + "): " + e.what());
    }
}

}  // namespace earlyprune
