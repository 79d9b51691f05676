// Copyright 2026 The earlyprune Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails. Tolerances are fixed below.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "earlyprune/earlyprune.hpp"
#include "oracle/oracle.hpp"
#include "test_util.hpp"

using namespace earlyprune;
using earlyprune::testutil::below;
using earlyprune::testutil::random_attention;
using earlyprune::testutil::random_matrix;
using earlyprune::testutil::unit;

namespace {

constexpr double kReductionTolerancePct = 0.05;
constexpr double kArithmeticSeconds = 1.0;
constexpr double kDensityTolerance = 1e-9;
constexpr double kConservationRelTolerance = 1e-6;
constexpr double kRequiredSpeedup = 1.3;
constexpr double kSpeedupSeconds = 120.0;
constexpr double kImportanceSpread = 1e-6;

struct Outcome {
    bool pass = true;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

RunConfig arithmetic_config(std::size_t n0, std::size_t budget) {
    RunConfig cfg;
    cfg.n0 = n0;
    cfg.dim = 16;
    cfg.heads = 2;
    cfg.layers = 26;
    cfg.budget = budget;
    cfg.strategy = Strategy::skip();
    cfg.repetitions = 1;
    return cfg;
}

Outcome token_retention() {
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t budgets[] = {448, 512, 544};
    const std::size_t retained[] = {128, 64, 32};
    const double reductions[] = {77.8, 88.9, 94.4};
    Outcome o;
    std::ostringstream os;
    double slowest = 0.0;
    for (int c = 0; c < 3; ++c) {
        const auto r0 = std::chrono::steady_clock::now();
        const auto rep = run(arithmetic_config(576, budgets[c])).report;
        slowest = std::max(slowest, seconds_since(r0));
        const bool ok = rep.final_count == retained[c] &&
                        std::abs(rep.reduction_pct - reductions[c]) <= kReductionTolerancePct;
        o.pass &= ok;
        os << rep.final_count << "/576 (" << fmt("%.1f", rep.reduction_pct) << "%) ";
    }
    o.pass &= slowest < kArithmeticSeconds;
    o.detail = os.str() + "slowest run " + fmt("%.3f", slowest) + " s, all three " + fmt("%.3f", seconds_since(t0)) + " s";
    return o;
}

Outcome video_retention() {
    const std::size_t retained[] = {64, 32, 16};
    const double reductions[] = {62.1, 81.1, 90.5};
    Outcome o;
    std::ostringstream os;
    double worst = 0.0;
    for (int c = 0; c < 3; ++c) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto rep = run(arithmetic_config(169, 169 - retained[c])).report;
        worst = std::max(worst, seconds_since(t0));
        const bool ok = rep.final_count == retained[c] && rep.shortfall == 0 &&
                        std::abs(rep.reduction_pct - reductions[c]) <= kReductionTolerancePct;
        o.pass &= ok;
        os << rep.final_count << "/169 (" << fmt("%.1f", rep.reduction_pct) << "%) ";
    }
    o.pass &= worst < kArithmeticSeconds;
    o.detail = os.str() + "slowest frame " + fmt("%.3f", worst) + " s";
    return o;
}

Outcome no_prune_equivalence() {
    Outcome o;
    std::size_t identical = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(seed);
        const std::size_t heads = 1 + seed % 4;
        const std::size_t d = heads * 2 * (1 + seed % 4);  // <= 32
        const std::size_t n = 2 + below(rng, 63), layers = 1 + below(rng, 8);
        const auto w = init_weights(seed, d, heads, layers);
        const auto x = random_matrix(rng, n, d);
        const auto got = forward(TokenSet::from_embeddings(x), w, PruneSchedule{std::vector<std::size_t>(layers, 0)},
                                 RunConfig{});
        identical += got.tokens.embeddings() == encode(x, w);
    }
    o.pass = identical == 20;
    o.detail = std::to_string(identical) + "/20 seeds bit-identical";
    return o;
}

Outcome oracle_equivalence() {
    Outcome o;
    std::mt19937_64 rng(4242);

    std::size_t steps_ok = 0;
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = 2 + below(rng, 15), dim = 1 + below(rng, 6);
        const TokenSet ts = trial % 3 == 0 ? TokenSet::from_embeddings(testutil::lattice_matrix(rng, n, dim))
                                           : testutil::premerged_tokens(rng, n, dim, below(rng, n + 1));
        const auto maps = random_attention(rng, 1 + below(rng, 3), n);
        const Matrix feats = trial % 2 == 0 ? ts.embeddings() : testutil::lattice_matrix(rng, n, 1 + below(rng, 4), 1);
        RunConfig cfg;
        cfg.ctr = 0.6 * unit(rng);
        cfg.lambda_d = 0.2 + 2.0 * unit(rng);
        cfg.k = 1 + below(rng, 6);
        if (trial % 4 != 0) cfg.tau = 0.3 + 2.0 * unit(rng);
        const std::size_t r = below(rng, n / 2 + 1);
        const auto want = oracle::oracle_forward_step(ts, maps, feats, cfg, r);
        const auto got = merge_layer(ts, maps, feats, MergeParams::from(cfg), r, 1);
        steps_ok += got.tokens == want.tokens && got.record.pairs == want.pairs;
    }

    std::size_t density_ok = 0;
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + below(rng, 30), dim = 1 + below(rng, 8);
        const Matrix v = trial % 2 ? random_matrix(rng, n, dim) : testutil::lattice_matrix(rng, n, dim);
        const std::size_t k = 1 + below(rng, 8);
        std::optional<double> tau;
        if (trial % 3) tau = 0.2 + 3.0 * unit(rng);
        const auto got = local_density(v, k, tau);
        const auto want = oracle::oracle_knn_density(v, k, tau);
        double err = 0.0;
        for (std::size_t i = 0; i < n; ++i) err = std::max(err, std::abs(got.d[i] - want.d[i]));
        worst = std::max(worst, err);
        density_ok += err <= kDensityTolerance && got.k == want.k;
    }

    std::size_t select_ok = 0, with_ties = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        ScoreMatrix sm;
        sm.rows = below(rng, 13);
        sm.cols = below(rng, 13);
        for (std::size_t i = 0; i < sm.rows; ++i) sm.a_indices.push_back(2 * i);
        for (std::size_t j = 0; j < sm.cols; ++j) sm.b_indices.push_back(2 * j + 1);
        std::set<double> distinct;
        for (std::size_t e = 0; e < sm.rows * sm.cols; ++e) {
            const double u = unit(rng);
            const double v = u < 0.2 ? -INFINITY : (trial % 2 ? std::round(unit(rng) * 4) / 4 : unit(rng));
            sm.values.push_back(v);
            distinct.insert(v);
        }
        with_ties += distinct.size() < sm.values.size();
        const std::size_t r = below(rng, 8);
        select_ok += select_pairs(sm, r).pairs == oracle::oracle_select_pairs(sm, r);
    }

    o.pass = steps_ok == 500 && density_ok == 200 && select_ok == 1000;
    o.detail = "merge step " + std::to_string(steps_ok) + "/500, density " + std::to_string(density_ok) +
               "/200 (max err " + fmt("%.1e", worst) + "), select " + std::to_string(select_ok) + "/1000 (" +
               std::to_string(with_ties) + " with ties)";
    return o;
}

Outcome protection_invariant() {
    Outcome o;
    std::mt19937_64 rng(5005);
    const double ctrs[] = {0.1, 0.25, 0.5};
    std::size_t violations = 0, count_mismatch = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t t = 2 + below(rng, 60), dim = 1 + below(rng, 8);
        const auto ts = testutil::premerged_tokens(rng, t, dim, below(rng, t + 1));
        const auto maps = random_attention(rng, 1 + below(rng, 4), t);
        RunConfig cfg;
        cfg.ctr = ctrs[trial % 3];
        const std::size_t r = 1 + below(rng, t / 2);
        const auto out = merge_layer(ts, maps, ts.embeddings(), MergeParams::from(cfg), r, 1);
        const std::set<std::size_t> guarded(out.record.protected_positions.begin(), out.record.protected_positions.end());
        for (const auto& p : out.record.pairs) violations += guarded.count(p.src) + guarded.count(p.dst);
        const long expected = std::max(0L, std::min(static_cast<long>(std::floor(cfg.ctr * static_cast<double>(t) + 1e-9)),
                                                    static_cast<long>(t) - 2 * static_cast<long>(r)));
        count_mismatch += static_cast<long>(guarded.size()) != expected;
    }
    o.pass = violations == 0 && count_mismatch == 0;
    o.detail = std::to_string(violations) + " protected tokens in pairs, " + std::to_string(count_mismatch) +
               "/1000 protected-count mismatches";
    return o;
}

Outcome conservation() {
    Outcome o;
    double worst = 0.0;
    std::size_t merge_layers = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        std::mt19937_64 rng(seed + 600);
        const std::size_t n0 = 16 + below(rng, 100), heads = 1 + below(rng, 4), d = heads * (2 + below(rng, 4));
        const std::size_t layers = 2 + below(rng, 8), budget = below(rng, n0 / 2);
        const auto w = init_weights(seed, d, heads, layers);
        const auto schedule = allocate(seed % 2 ? Strategy::skip() : Strategy::mean(), layers, budget, n0);
        RunConfig cfg;
        TokenSet ts = TokenSet::from_embeddings(random_matrix(rng, n0, d));
        for (std::size_t l = 0; l < layers; ++l) {
            const auto att = attention_block(ts.embeddings(), w.layers[l], heads);
            ts.set_embeddings(att.hidden);
            const std::size_t r = std::min(schedule.per_layer[l], layer_capacity(ts.size()));
            if (r > 0) {
                std::vector<double> before(d, 0.0), after(d, 0.0);
                for (const auto& t : ts.tokens())
                    for (std::size_t c = 0; c < d; ++c) before[c] += static_cast<double>(t.size) * t.embedding[c];
                ts = merge_layer(ts, att.maps, att.keys, MergeParams::from(cfg), r, l + 1).tokens;
                for (const auto& t : ts.tokens())
                    for (std::size_t c = 0; c < d; ++c) after[c] += static_cast<double>(t.size) * t.embedding[c];
                double num = 0.0, den = 0.0;
                for (std::size_t c = 0; c < d; ++c) {
                    num += (after[c] - before[c]) * (after[c] - before[c]);
                    den += before[c] * before[c];
                }
                worst = std::max(worst, std::sqrt(num) / std::max(std::sqrt(den), 1.0));
                ++merge_layers;
            }
            ts.set_embeddings(mlp_block(ts.embeddings(), w.layers[l]));
        }
    }
    o.pass = worst <= kConservationRelTolerance;
    o.detail = std::to_string(merge_layers) + " merge layers over 100 runs, max relative error " + fmt("%.2e", worst);
    return o;
}

Outcome budget_exactness() {
    Outcome o;
    std::mt19937_64 rng(7007);
    std::size_t checked = 0, bad = 0, unexpected_throw = 0;
    const Strategy::Kind kinds[] = {Strategy::Kind::Mean,  Strategy::Kind::Skip,       Strategy::Kind::First,
                                    Strategy::Kind::Last,  Strategy::Kind::Increasing, Strategy::Kind::Decreasing};
    auto verify = [&](const PruneSchedule& s, std::size_t layers, std::size_t budget, std::size_t n0) {
        ++checked;
        if (s.layers() != layers || s.total() != budget || !schedule_feasible(s, n0)) ++bad;
    };
    for (auto kind : kinds) {
        auto draw = [&](std::size_t layers) {
            Strategy s{kind, 1 + below(rng, layers), 3.0 * unit(rng)};
            return s;
        };
        // R <= N0/4 keeps every layer under its cap for any weighting
        for (int i = 0; i < 50; ++i) {
            const std::size_t layers = 1 + below(rng, 32), n0 = 4 + below(rng, 2000), budget = below(rng, n0 / 4 + 1);
            const auto s = draw(layers);
            try {
                verify(allocate(s, layers, budget, n0), layers, budget, n0);
            } catch (const InfeasibleSchedule&) {
                ++unexpected_throw;
            }
        }
        // full range of R; cells the strategy cannot place are skipped
        for (int accepted = 0; accepted < 50;) {
            const std::size_t layers = 1 + below(rng, 32), n0 = 2 + below(rng, 2000), budget = below(rng, n0);
            const auto s = draw(layers);
            try {
                const auto sched = allocate(s, layers, budget, n0);
                verify(sched, layers, budget, n0);
                ++accepted;
            } catch (const InfeasibleSchedule&) {
            }
        }
    }
    o.pass = bad == 0 && unexpected_throw == 0;
    o.detail = std::to_string(checked) + " schedules, " + std::to_string(bad) + " wrong sum or cap, " +
               std::to_string(unexpected_throw) + " spurious infeasible";
    return o;
}

Outcome flop_ordering() {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    std::size_t cases = 0, ordered = 0, bounded = 0, skipped = 0;
    struct Cell {
        std::size_t n0, budget, layers;
        bool all_strategies;
    };
    const Cell grid[] = {{169, 105, 26, true}, {169, 137, 26, true}, {169, 153, 26, true}, {169, 105, 12, true},
                         {169, 137, 12, true}, {169, 153, 12, true}, {576, 448, 26, false}};
    for (const auto& cell : grid) {
        auto cfg = arithmetic_config(cell.n0, cell.budget);
        cfg.dim = 8;
        cfg.heads = 1;
        cfg.layers = cell.layers;
        const auto w = init_weights(cfg.seed, cfg.dim, cfg.heads, cell.layers);
        const auto x0 = gen_tokens(cfg.source, cell.n0, cfg.dim, cfg.seed).embeddings;
        auto total = [&](Strategy s) {
            cfg.strategy = s;
            const auto sched = allocate(s, cell.layers, cell.budget, cell.n0);
            const auto trace = forward(TokenSet::from_embeddings(x0), w, sched, cfg).trace;
            return flop_report(trace, cfg.dim, cfg.heads).total;
        };
        try {
            const auto unpruned = unpruned_flops(cell.n0, cfg.dim, cell.layers);
            const auto first = total(Strategy::first(cell.layers / 2));
            const auto skip = total(Strategy::skip());
            const auto last = total(Strategy::last(cell.layers / 2));
            bool below = first <= unpruned && skip <= unpruned && last <= unpruned;
            if (cell.all_strategies) {
                for (auto s : {Strategy::mean(), Strategy::increasing(), Strategy::decreasing()}) below &= total(s) <= unpruned;
            }
            ++cases;
            ordered += first <= skip && skip <= last;
            bounded += below;
        } catch (const InfeasibleSchedule&) {
            ++skipped;  // e.g. last:6 cannot remove 153 of 169 in six layers
        }
    }
    const double secs = seconds_since(t0);
    o.pass = cases > 0 && ordered == cases && bounded == cases && secs < kArithmeticSeconds;
    o.detail = "first:L/2 <= skip <= last:L/2 in " + std::to_string(ordered) + "/" + std::to_string(cases) +
               ", pruned <= unpruned in " + std::to_string(bounded) + "/" + std::to_string(cases) + ", " +
               fmt("%.3f", secs) + " s, " + std::to_string(skipped) + " infeasible cells skipped";
    return o;
}

Outcome wall_clock_speedup() {
    const auto t0 = std::chrono::steady_clock::now();
    RunConfig cfg;
    cfg.n0 = 1024;
    cfg.dim = 256;
    cfg.heads = 8;
    cfg.layers = 12;
    cfg.budget = 512;
    cfg.strategy = Strategy::skip();
    cfg.repetitions = 5;
    cfg.measure_baseline = true;
    const auto rep = run(cfg).report;
    const double secs = seconds_since(t0);
    const double pruned = rep.encoder.median_ms, base = rep.baseline_encoder->median_ms;
    const double speedup = base / pruned;
    Outcome o;
    o.pass = speedup >= kRequiredSpeedup && secs < kSpeedupSeconds && rep.final_count == 512;
    o.detail = "pruned " + fmt("%.1f", pruned) + " ms vs unpruned " + fmt("%.1f", base) + " ms (median of 5, merging " +
               fmt("%.1f", rep.prune_overhead.median_ms) + " ms), " + fmt("%.2f", speedup) + "x, total " + fmt("%.1f", secs) + " s";
    return o;
}

Outcome importance_not_constant() {
    Outcome o;
    std::mt19937_64 rng(1010);
    std::size_t ok = 0;
    double min_spread = INFINITY, max_row_mean_spread = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + below(rng, 63);
        const auto maps = random_attention(rng, 1 + below(rng, 8), n);
        const auto s = attention_importance(maps).s;
        const auto [lo, hi] = std::minmax_element(s.begin(), s.end());
        min_spread = std::min(min_spread, *hi - *lo);
        ok += *hi - *lo > kImportanceSpread;
        // the row-mean reading is 1/N for every token
        std::vector<double> row_mean(n, 0.0);
        for (const auto& head : maps.heads)
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) row_mean[i] += head(i, j);
        const auto [rlo, rhi] = std::minmax_element(row_mean.begin(), row_mean.end());
        max_row_mean_spread = std::max(max_row_mean_spread, (*rhi - *rlo) / static_cast<double>(maps.head_count() * n));
    }
    o.pass = ok == 200;
    o.detail = std::to_string(ok) + "/200 non-constant, min spread " + fmt("%.2e", min_spread) +
               " (row-mean spread <= " + fmt("%.1e", max_row_mean_spread) + ")";
    return o;
}

}  // namespace

int main() {
    const std::pair<const char*, std::function<Outcome()>> criteria[] = {
        {"token-retention arithmetic (N0=576)", token_retention},
        {"video-scale retention (N0=169)", video_retention},
        {"no-prune equivalence", no_prune_equivalence},
        {"oracle equivalence", oracle_equivalence},
        {"protection invariant", protection_invariant},
        {"size-weighted conservation", conservation},
        {"budget exactness", budget_exactness},
        {"FLOP ordering", flop_ordering},
        {"wall-clock speedup", wall_clock_speedup},
        {"importance degeneracy guard", importance_not_constant},
    };
    int failures = 0;
    int index = 1;
    for (const auto& [name, check] : criteria) {
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::printf("%s [%d] %s: %s\n", o.pass ? "PASS" : "FAIL", index++, name, o.detail.c_str());
        std::fflush(stdout);
        failures += !o.pass;
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(std::size(criteria)) - failures, std::size(criteria));
    return failures == 0 ? 0 : 1;
}
