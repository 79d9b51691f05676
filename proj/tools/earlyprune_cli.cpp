// Copyright 2026 The earlyprune Authors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "earlyprune/earlyprune.hpp"

namespace {

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!earlyprune::detail::trim(item).empty()) out.push_back(earlyprune::detail::trim(item));
    }
    return out;
}

int cmd_run(const std::string& config_path, const std::string& out_dir) {
    const auto cfg = earlyprune::load_config(config_path);
    const auto result = earlyprune::run_to_dir(cfg, out_dir);
    const auto& r = result.report;
    std::cout << earlyprune::summary_table({r});
    std::cout << "retained " << r.final_count << "/" << r.n0 << " tokens (" << std::fixed << std::setprecision(1)
              << 100.0 * r.retention_ratio << "%, reduction " << r.reduction_pct << "%)\n";
    if (r.baseline_encoder) {
        std::cout << "baseline encoder " << std::setprecision(2) << r.baseline_encoder->median_ms << " ms, pruned "
                  << r.encoder.median_ms << " ms, speedup " << r.baseline_encoder->median_ms / r.encoder.median_ms
                  << "x\n";
    }
    std::cout << "report: " << (std::filesystem::path(out_dir) / "report.json").string() << "\ntrace: " << r.trace_path
              << '\n';
    return 0;
}

int cmd_sweep(const std::string& strategies, const std::string& budgets, const std::string& config_path,
              const std::string& out_dir, bool budgets_remove) {
    const auto base = earlyprune::load_config(config_path);
    std::vector<earlyprune::Strategy> parsed;
    for (const auto& s : split_list(strategies)) parsed.push_back(earlyprune::parse_strategy(s));
    std::vector<std::size_t> retained;
    for (const auto& b : split_list(budgets)) {
        const auto v = earlyprune::detail::parse_number<std::size_t>(b, "budget");
        if (budgets_remove && v >= base.n0) throw std::invalid_argument("budget R=" + b + " must be < N0");
        retained.push_back(budgets_remove ? base.n0 - v : v);
    }
    const auto result = earlyprune::sweep(parsed, retained, base);
    std::cout << earlyprune::summary_table(result.reports);
    for (const auto& msg : result.skipped) std::cerr << "skipped " << msg << '\n';
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        const auto path = (std::filesystem::path(out_dir) / "sweep.jsonl").string();
        std::ofstream os(path);
        for (const auto& r : result.reports) os << earlyprune::to_json(r).dump() << '\n';
        std::cout << "reports: " << path << '\n';
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Layer-wise in-encoder visual token merging: runs, sweeps and trace inspection"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out";
    auto* run = app.add_subcommand("run", "Run one configuration and write report.json and trace.jsonl");
    run->add_option("--config", config_path, "key=value config file")->required()->check(CLI::ExistingFile);
    run->add_option("--out", out_dir, "output directory")->capture_default_str();

    std::string strategies, budgets, sweep_out;
    bool budgets_remove = false;
    auto* sweep = app.add_subcommand("sweep", "Run every (strategy, budget) cell and print a summary table");
    sweep->add_option("--strategies", strategies, "comma list, e.g. first:13,last:13,inc:1,dec:1,mean,skip")->required();
    sweep->add_option("--budgets", budgets, "comma list of retained token counts, e.g. 16,32,64")->required();
    sweep->add_option("--config", config_path, "base config file")->required()->check(CLI::ExistingFile);
    sweep->add_option("--out", sweep_out, "directory for sweep.jsonl");
    sweep->add_flag("--remove", budgets_remove, "interpret --budgets as tokens removed (R) instead of retained");

    std::string trace_path;
    bool as_json = false;
    auto* dump = app.add_subcommand("trace-dump", "Print a per-layer summary of a trace file");
    dump->add_option("path", trace_path, "trace.jsonl")->required()->check(CLI::ExistingFile);
    dump->add_flag("--json", as_json, "re-emit the parsed trace as JSON Lines");

    std::string source = "gaussian", tokens_out;
    std::size_t n0 = 576, dim = 64, heads = 4, layers = 26;
    std::uint64_t seed = 0;
    auto* gen = app.add_subcommand("gen-tokens", "Write generated token embeddings to a binary or .csv file");
    gen->add_option("--source", source, "gaussian | clustered:K")->capture_default_str();
    gen->add_option("--n0", n0)->capture_default_str();
    gen->add_option("--dim", dim)->capture_default_str();
    gen->add_option("--seed", seed)->capture_default_str();
    gen->add_option("--out", tokens_out, "output path")->required();

    std::string weights_out;
    auto* wgen = app.add_subcommand("init-weights", "Write seeded random encoder weights to a weight file");
    wgen->add_option("--dim", dim)->capture_default_str();
    wgen->add_option("--heads", heads)->capture_default_str();
    wgen->add_option("--layers", layers)->capture_default_str();
    wgen->add_option("--seed", seed)->capture_default_str();
    wgen->add_option("--out", weights_out, "output path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) return cmd_run(config_path, out_dir);
        if (*sweep) return cmd_sweep(strategies, budgets, config_path, sweep_out, budgets_remove);
        if (*dump) {
            const auto trace = earlyprune::read_trace(trace_path);
            if (as_json) earlyprune::write_trace(trace, std::cout);
            else std::cout << earlyprune::format_trace(trace);
            return 0;
        }
        if (*gen) {
            const auto tokens = earlyprune::gen_tokens(earlyprune::parse_source(source), n0, dim, seed).embeddings;
            if (earlyprune::detail::ends_with(tokens_out, ".csv")) {
                std::ofstream os(tokens_out);
                os.precision(9);
                for (std::size_t i = 0; i < tokens.rows(); ++i) {
                    for (std::size_t c = 0; c < tokens.cols(); ++c) os << (c ? "," : "") << tokens(i, c);
                    os << '\n';
                }
            } else {
                earlyprune::write_embeddings(tokens, tokens_out);
            }
            return 0;
        }
        if (*wgen) {
            earlyprune::save_weights(earlyprune::init_weights(seed, dim, heads, layers), weights_out);
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
