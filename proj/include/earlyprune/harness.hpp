// Copyright 2026 The earlyprune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "earlyprune/budget.hpp"
#include "earlyprune/config.hpp"
#include "earlyprune/core_types.hpp"
#include "earlyprune/encoder.hpp"
#include "earlyprune/flops.hpp"
#include "earlyprune/token_source.hpp"
#include "earlyprune/trace_io.hpp"

namespace earlyprune {

/// Median/min/max of repeated wall-clock samples, in milliseconds.
struct TimingStats {
    double median_ms = 0.0;
    double min_ms = 0.0;
    double max_ms = 0.0;
    std::size_t samples = 0;

    static TimingStats of(std::vector<double> ms) {
        if (ms.empty()) return {};
        std::sort(ms.begin(), ms.end());
        const std::size_t n = ms.size();
        const double median = n % 2 == 1 ? ms[n / 2] : 0.5 * (ms[n / 2 - 1] + ms[n / 2]);
        return {median, ms.front(), ms.back(), n};
    }
};

struct RunReport {
    RunConfig config;
    PruneSchedule schedule;
    std::size_t n0 = 0;
    std::size_t final_count = 0;
    double retention_ratio = 0.0;  // final_count / N0
    double reduction_pct = 0.0;    // 100 * (1 - retention_ratio)
    std::size_t shortfall = 0;
    FlopModel flops;
    std::uint64_t unpruned_flops = 0;
    // Wall clock. Encoder time covers the whole pruned pass including merging;
    // projector/pooling stages of a full multimodal pipeline are not modeled.
    TimingStats encoder;
    TimingStats prune_overhead;
    std::optional<TimingStats> baseline_encoder;
    double total_ms = 0.0;
    std::string trace_path;
};

struct RunResult {
    RunReport report;
    MergeTrace trace;
    TokenSet tokens;
    std::vector<std::uint32_t> cluster;  // labels of the input tokens, clustered source only
};

inline std::string describe_errors(const std::vector<ConfigError>& errors) {
    std::string msg = "invalid config:";
    for (const auto& e : errors) msg += "\n  " + e.field + ": " + e.message;
    return msg;
}

inline EncoderWeights weights_for(const RunConfig& cfg) {
    if (cfg.weights_path.empty()) return init_weights(cfg.seed, cfg.dim, cfg.heads, cfg.layers);
    auto w = load_weights(cfg.weights_path);
    if (w.dim != cfg.dim || w.heads != cfg.heads || w.layers.size() != cfg.layers) {
        throw std::runtime_error("weight file '" + cfg.weights_path + "' does not match dim/heads/layers in config");
    }
    return w;
}

/// Executes one configured run: generate tokens, allocate the schedule, run the
/// pruned encoder (timed), and derive FLOPs and retention from the trace.
inline RunResult run(const RunConfig& cfg) {
    if (auto errors = validate_config(cfg); !errors.empty()) throw std::invalid_argument(describe_errors(errors));
    const auto start = std::chrono::steady_clock::now();

    auto generated = gen_tokens(cfg.source, cfg.n0, cfg.dim, cfg.seed);
    const auto weights = weights_for(cfg);
    const auto schedule = allocate(cfg.strategy, cfg.layers, cfg.budget, cfg.n0);
    const auto tokens0 = TokenSet::from_embeddings(generated.embeddings);

    RunResult result;
    result.cluster = std::move(generated.cluster);
    auto first = forward(tokens0, weights, schedule, cfg);

    // The first pass doubles as the warm-up. Baseline passes alternate with the
    // pruned ones so drift in machine speed hits both series alike.
    const Matrix x0 = tokens0.embeddings();
    if (cfg.measure_baseline) (void)encode(x0, weights);
    std::vector<double> encoder_ms, prune_ms, baseline_ms;
    for (std::size_t i = 0; i < cfg.repetitions; ++i) {
        auto t0 = std::chrono::steady_clock::now();
        const auto again = forward(tokens0, weights, schedule, cfg);
        encoder_ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
        prune_ms.push_back(again.prune_seconds * 1e3);
        if (cfg.measure_baseline) {
            t0 = std::chrono::steady_clock::now();
            (void)encode(x0, weights);
            baseline_ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
        }
    }

    auto& rep = result.report;
    rep.config = cfg;
    rep.schedule = schedule;
    rep.n0 = cfg.n0;
    rep.final_count = first.tokens.size();
    rep.retention_ratio = static_cast<double>(rep.final_count) / static_cast<double>(cfg.n0);
    rep.reduction_pct = 100.0 * (1.0 - rep.retention_ratio);
    rep.shortfall = first.trace.unspent;
    rep.flops = flop_report(first.trace, cfg.dim, cfg.heads);
    rep.unpruned_flops = unpruned_flops(cfg.n0, cfg.dim, cfg.layers);
    rep.encoder = TimingStats::of(std::move(encoder_ms));
    rep.prune_overhead = TimingStats::of(std::move(prune_ms));
    if (cfg.measure_baseline) rep.baseline_encoder = TimingStats::of(std::move(baseline_ms));
    rep.total_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

    result.trace = std::move(first.trace);
    result.tokens = std::move(first.tokens);
    return result;
}

namespace detail {

inline nlohmann::json to_json(const TimingStats& t) {
    return {{"median_ms", t.median_ms}, {"min_ms", t.min_ms}, {"max_ms", t.max_ms}, {"samples", t.samples}};
}

inline nlohmann::json config_json(const RunConfig& c) {
    return {{"n0", c.n0},
            {"dim", c.dim},
            {"layers", c.layers},
            {"heads", c.heads},
            {"budget", c.budget},
            {"strategy", to_string(c.strategy)},
            {"ctr", c.ctr},
            {"lambda_d", c.lambda_d},
            {"k", c.k},
            {"tau", c.tau ? nlohmann::json(*c.tau) : nlohmann::json("auto")},
            {"similarity_source", c.similarity_source == SimilaritySource::AttentionKeys ? "attention_keys" : "hidden_states"},
            {"similarity_norm", c.similarity_norm == SimilarityNorm::Affine ? "affine" : "sigmoid"},
            {"always_protect", c.always_protect},
            {"seed", c.seed},
            {"source", to_string(c.source)},
            {"weights", c.weights_path.empty() ? std::string("random") : c.weights_path},
            {"repetitions", c.repetitions}};
}

}  // namespace detail

/// Machine-readable report. Everything outside "timing" is deterministic for a
/// fixed config and seed.
inline nlohmann::json to_json(const RunReport& r) {
    nlohmann::json timing{{"encoder", detail::to_json(r.encoder)},
                          {"prune_overhead", detail::to_json(r.prune_overhead)},
                          {"total_ms", r.total_ms}};
    if (r.baseline_encoder) {
        timing["baseline_encoder"] = detail::to_json(*r.baseline_encoder);
        timing["speedup"] = r.encoder.median_ms > 0 ? r.baseline_encoder->median_ms / r.encoder.median_ms : 0.0;
    }
    nlohmann::json per_layer = nlohmann::json::array();
    for (const auto& l : r.flops.per_layer) per_layer.push_back({{"attention", l.attention}, {"mlp", l.mlp}});
    return {{"config", detail::config_json(r.config)},
            {"schedule", r.schedule.per_layer},
            {"tokens", {{"n0", r.n0}, {"final", r.final_count}, {"retention_ratio", r.retention_ratio},
                        {"reduction_pct", r.reduction_pct}, {"shortfall", r.shortfall}}},
            {"flops", {{"attention", r.flops.attention_total}, {"mlp", r.flops.mlp_total}, {"total", r.flops.total},
                       {"unpruned_total", r.unpruned_flops},
                       {"relative", r.unpruned_flops ? static_cast<double>(r.flops.total) / static_cast<double>(r.unpruned_flops) : 0.0},
                       {"downstream_llm_tokens", r.flops.downstream_llm_tokens}, {"per_layer", per_layer}}},
            {"timing", std::move(timing)},
            {"trace", r.trace_path}};
}

/// Runs the config and writes `report.json` and `trace.jsonl` into `out_dir`.
inline RunResult run_to_dir(const RunConfig& cfg, const std::string& out_dir) {
    auto result = run(cfg);
    std::filesystem::create_directories(out_dir);
    const auto trace_path = (std::filesystem::path(out_dir) / "trace.jsonl").string();
    write_trace(result.trace, trace_path);
    result.report.trace_path = trace_path;
    const auto report_path = (std::filesystem::path(out_dir) / "report.json").string();
    std::ofstream os(report_path);
    if (!os) throw std::runtime_error("cannot write report '" + report_path + "'");
    os << to_json(result.report).dump(2) << '\n';
    return result;
}

struct SweepCell {
    Strategy strategy;
    std::size_t retained = 0;
};

struct SweepResult {
    std::vector<RunReport> reports;
    std::vector<std::string> skipped;  // one message per infeasible cell
};

/// One run per (strategy, retained budget) cell; a cell with retained count B
/// removes R = N0 - B tokens. Infeasible cells are reported and skipped.
inline SweepResult sweep(const std::vector<Strategy>& strategies, const std::vector<std::size_t>& retained,
                         const RunConfig& base) {
    SweepResult out;
    for (const auto& s : strategies) {
        for (auto b : retained) {
            RunConfig cfg = base;
            cfg.strategy = s;
            const std::string cell = to_string(s) + " B=" + std::to_string(b);
            if (b == 0 || b > cfg.n0) {
                out.skipped.push_back(cell + ": retained budget must be in [1, N0]");
                continue;
            }
            cfg.budget = cfg.n0 - b;
            try {
                out.reports.push_back(run(cfg).report);
            } catch (const InfeasibleSchedule& e) {
                out.skipped.push_back(cell + ": " + e.what());
            } catch (const std::invalid_argument& e) {
                out.skipped.push_back(cell + ": " + e.what());
            }
        }
    }
    return out;
}

inline std::string summary_table(const std::vector<RunReport>& reports) {
    std::ostringstream os;
    os << std::left << std::setw(12) << "strategy" << std::right << std::setw(8) << "R" << std::setw(8) << "final"
       << std::setw(11) << "reduce%" << std::setw(11) << "rel.FLOPs" << std::setw(13) << "encoder ms" << std::setw(11)
       << "prune ms" << std::setw(11) << "shortfall" << '\n';
    os << std::fixed;
    for (const auto& r : reports) {
        const double rel = r.unpruned_flops ? static_cast<double>(r.flops.total) / static_cast<double>(r.unpruned_flops) : 0.0;
        os << std::left << std::setw(12) << to_string(r.config.strategy) << std::right << std::setw(8)
           << r.config.budget << std::setw(8) << r.final_count << std::setw(11) << std::setprecision(1)
           << r.reduction_pct << std::setw(11) << std::setprecision(3) << rel << std::setw(13) << std::setprecision(2)
           << r.encoder.median_ms << std::setw(11) << r.prune_overhead.median_ms << std::setw(11) << r.shortfall
           << '\n';
    }
    return os.str();
}

}  // namespace earlyprune
