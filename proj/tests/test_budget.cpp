// Copyright 2026 The earlyprune Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "earlyprune/budget.hpp"

using namespace earlyprune;

namespace {

// Exhaustive search over non-negative integer vectors summing to `total`,
// returning every minimizer of sum |r_l - total * w_l|.
std::vector<std::vector<std::size_t>> brute_force_minimizers(const std::vector<double>& w, std::size_t total) {
    std::vector<std::vector<std::size_t>> best;
    double best_cost = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> cur(w.size(), 0);
    auto rec = [&](auto&& self, std::size_t l, std::size_t left) -> void {
        if (l + 1 == w.size()) {
            cur[l] = left;
            double cost = 0.0;
            for (std::size_t i = 0; i < w.size(); ++i) cost += std::abs(static_cast<double>(cur[i]) - total * w[i]);
            if (cost < best_cost - 1e-12) {
                best_cost = cost;
                best = {cur};
            } else if (std::abs(cost - best_cost) <= 1e-12) {
                best.push_back(cur);
            }
            return;
        }
        for (std::size_t v = 0; v <= left; ++v) {
            cur[l] = v;
            self(self, l + 1, left - v);
        }
    };
    rec(rec, 0, total);
    return best;
}

std::vector<Strategy> strategies_for(std::size_t layers, std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> window(1, layers);
    std::uniform_real_distribution<double> alpha(0.1, 3.0);
    return {Strategy::mean(),           Strategy::skip(),          Strategy::first(window(rng)),
            Strategy::last(window(rng)), Strategy::increasing(alpha(rng)), Strategy::decreasing(alpha(rng))};
}

void expect_weights(const std::vector<double>& got, const std::vector<double>& want) {
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12) << "layer " << i + 1;
}

}  // namespace

TEST(StrategyWeights, FirstWindow) { expect_weights(strategy_weights(Strategy::first(2), 4), {0.5, 0.5, 0, 0}); }

TEST(StrategyWeights, DecreasingLinear) {
    expect_weights(strategy_weights(Strategy::decreasing(1), 3), {3.0 / 6, 2.0 / 6, 1.0 / 6});
}

TEST(StrategyWeights, SkipOddLayers) {
    expect_weights(strategy_weights(Strategy::skip(), 5), {1.0 / 3, 0, 1.0 / 3, 0, 1.0 / 3});
}

TEST(StrategyWeights, MeanAndLast) {
    expect_weights(strategy_weights(Strategy::mean(), 4), {0.25, 0.25, 0.25, 0.25});
    expect_weights(strategy_weights(Strategy::last(1), 3), {0, 0, 1});
}

TEST(StrategyWeights, InvalidParameters) {
    EXPECT_THROW(strategy_weights(Strategy::first(0), 4), std::invalid_argument);
    EXPECT_THROW(strategy_weights(Strategy::last(5), 4), std::invalid_argument);
    EXPECT_THROW(strategy_weights(Strategy::increasing(-1), 4), std::invalid_argument);
    EXPECT_THROW(strategy_weights(Strategy::mean(), 0), std::invalid_argument);
}

TEST(StrategyWeights, IncreasingAlphaZeroIsMean) {
    for (std::size_t layers : {1u, 3u, 8u, 26u}) {
        expect_weights(strategy_weights(Strategy::increasing(0.0), layers), strategy_weights(Strategy::mean(), layers));
        expect_weights(strategy_weights(Strategy::decreasing(0.0), layers), strategy_weights(Strategy::mean(), layers));
    }
}

TEST(StrategyWeights, FirstReversedIsLast) {
    for (std::size_t layers = 1; layers <= 12; ++layers) {
        for (std::size_t n = 1; n <= layers; ++n) {
            auto first = strategy_weights(Strategy::first(n), layers);
            std::reverse(first.begin(), first.end());
            expect_weights(first, strategy_weights(Strategy::last(n), layers));
        }
    }
}

TEST(RoundToIntegers, TieGoesToEarlierLayer) {
    const std::vector<double> w{0.5, 0.5};
    const std::vector<std::size_t> caps{kUncapped, kUncapped};
    EXPECT_EQ(round_to_integers(w, 3, caps), (std::vector<std::size_t>{2, 1}));
}

TEST(RoundToIntegers, OverflowSpillsForward) {
    const std::vector<double> w{1.0, 0.0};
    const std::vector<std::size_t> caps{3, kUncapped};
    EXPECT_EQ(round_to_integers(w, 5, caps), (std::vector<std::size_t>{3, 2}));
}

TEST(RoundToIntegers, ThirdsMatchBruteForce) {
    const std::vector<double> w{1.0 / 3, 1.0 / 3, 1.0 / 3};
    const std::vector<std::size_t> caps(3, kUncapped);
    const auto got = round_to_integers(w, 4, caps);
    EXPECT_EQ(got, (std::vector<std::size_t>{2, 1, 1}));
    const auto minimizers = brute_force_minimizers(w, 4);
    EXPECT_NE(std::find(minimizers.begin(), minimizers.end(), got), minimizers.end());
}

TEST(RoundToIntegers, InfeasibleWhenCapacityShort) {
    const std::vector<double> w{0.5, 0.5};
    const std::vector<std::size_t> caps{1, 1};
    EXPECT_THROW(round_to_integers(w, 3, caps), InfeasibleSchedule);
}

TEST(RoundToIntegers, UncappedAlwaysAmongBruteForceMinimizers) {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<std::size_t> pick_l(1, 4), pick_r(0, 10);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t layers = pick_l(rng), total = pick_r(rng);
        std::vector<double> w(layers);
        double sum = 0.0;
        for (auto& x : w) sum += (x = u(rng) + 1e-3);
        for (auto& x : w) x /= sum;
        const std::vector<std::size_t> caps(layers, kUncapped);
        const auto got = round_to_integers(w, total, caps);
        const auto minimizers = brute_force_minimizers(w, total);
        EXPECT_NE(std::find(minimizers.begin(), minimizers.end(), got), minimizers.end()) << "trial " << trial;
    }
}

TEST(Allocate, SkipImageSetting) {
    const auto s = allocate(Strategy::skip(), 26, 448, 576);
    ASSERT_EQ(s.layers(), 26u);
    EXPECT_EQ(s.total(), 448u);
    std::size_t merging = 0, with35 = 0, with34 = 0;
    for (std::size_t l = 0; l < 26; ++l) {
        if (l % 2 == 1) {
            EXPECT_EQ(s.per_layer[l], 0u) << "even layer " << l + 1 << " must not merge";
            continue;
        }
        ++merging;
        with35 += s.per_layer[l] == 35;
        with34 += s.per_layer[l] == 34;
    }
    EXPECT_EQ(merging, 13u);
    EXPECT_EQ(with35, 6u);
    EXPECT_EQ(with34, 7u);
    // largest remainder ties resolve toward the earliest merging layers
    for (std::size_t l : {0u, 2u, 4u, 6u, 8u, 10u}) EXPECT_EQ(s.per_layer[l], 35u);
    EXPECT_TRUE(schedule_feasible(s, 576));
}

TEST(Allocate, ZeroBudget) {
    EXPECT_EQ(allocate(Strategy::mean(), 4, 0, 16).per_layer, (std::vector<std::size_t>{0, 0, 0, 0}));
}

TEST(Allocate, IncreasingLinearIsUniqueOptimum) {
    const auto s = allocate(Strategy::increasing(1), 4, 10, 64);
    EXPECT_EQ(s.per_layer, (std::vector<std::size_t>{1, 2, 3, 4}));
    const auto minimizers = brute_force_minimizers(strategy_weights(Strategy::increasing(1), 4), 10);
    ASSERT_EQ(minimizers.size(), 1u);
    EXPECT_EQ(minimizers.front(), s.per_layer);
}

TEST(Allocate, FirstOneBeyondHalfIsInfeasible) {
    EXPECT_EQ(allocate(Strategy::first(1), 4, 8, 16).per_layer.front(), 8u);
    EXPECT_THROW(allocate(Strategy::first(1), 1, 9, 16), InfeasibleSchedule);
    // with later layers available the overflow spills forward instead
    const auto s = allocate(Strategy::first(1), 3, 12, 16);
    EXPECT_EQ(s.per_layer, (std::vector<std::size_t>{8, 4, 0}));
}

TEST(Allocate, LastOneBeyondHalfIsInfeasible) {
    EXPECT_THROW(allocate(Strategy::last(1), 4, 9, 16), InfeasibleSchedule);
}

TEST(Allocate, RejectsBudgetAtOrAboveTokenCount) {
    EXPECT_THROW(allocate(Strategy::mean(), 4, 16, 16), std::invalid_argument);
}

TEST(Allocate, SumAndFeasibilityProperty) {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<std::size_t> pick_l(1, 30), pick_n(2, 2000);
    int feasible = 0;
    for (int trial = 0; trial < 400; ++trial) {
        const std::size_t layers = pick_l(rng), n0 = pick_n(rng);
        std::uniform_int_distribution<std::size_t> pick_r(0, n0 - 1);
        const std::size_t budget = pick_r(rng);
        for (const auto& strategy : strategies_for(layers, rng)) {
            try {
                const auto s = allocate(strategy, layers, budget, n0);
                ++feasible;
                EXPECT_EQ(s.total(), budget);
                EXPECT_TRUE(schedule_feasible(s, n0));
                EXPECT_EQ(s, allocate(strategy, layers, budget, n0));
            } catch (const InfeasibleSchedule&) {
            }
        }
    }
    EXPECT_GT(feasible, 1000);
}

TEST(Allocate, MonotoneBeforeCapping) {
    // budgets small enough that no cap binds
    for (std::size_t layers : {3u, 7u, 12u, 26u}) {
        for (double alpha : {0.5, 1.0, 2.0}) {
            const auto inc = allocate(Strategy::increasing(alpha), layers, 100, 100000).per_layer;
            const auto dec = allocate(Strategy::decreasing(alpha), layers, 100, 100000).per_layer;
            const auto inc_w = strategy_weights(Strategy::increasing(alpha), layers);
            for (std::size_t l = 0; l + 1 < layers; ++l) {
                EXPECT_LE(inc_w[l], inc_w[l + 1]);
                EXPECT_LE(inc[l], inc[l + 1]) << "inc layers " << l + 1 << "," << l + 2;
                EXPECT_GE(dec[l], dec[l + 1]) << "dec layers " << l + 1 << "," << l + 2;
            }
        }
    }
}
