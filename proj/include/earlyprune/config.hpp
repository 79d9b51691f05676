// Copyright 2026 The earlyprune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace earlyprune {

/// Layer-wise budget allocation pattern.
struct Strategy {
    enum class Kind { Mean, Skip, First, Last, Increasing, Decreasing };

    Kind kind = Kind::Skip;
    std::size_t window = 0;  // N for First/Last
    double alpha = 1.0;      // growth/decay rate for Increasing/Decreasing

    static Strategy mean() { return {Kind::Mean}; }
    static Strategy skip() { return {Kind::Skip}; }
    static Strategy first(std::size_t n) { return {Kind::First, n}; }
    static Strategy last(std::size_t n) { return {Kind::Last, n}; }
    static Strategy increasing(double a = 1.0) { return {Kind::Increasing, 0, a}; }
    static Strategy decreasing(double a = 1.0) { return {Kind::Decreasing, 0, a}; }

    friend bool operator==(const Strategy&, const Strategy&) = default;
};

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(std::string_view text, std::string_view what) {
    const std::string s = trim(text);
    T value{};
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, value);
    if (ec != std::errc{} || ptr != end || s.empty()) {
        throw std::invalid_argument(std::string(what) + ": cannot parse '" + s + "'");
    }
    return value;
}

inline std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace detail

/// Parses `mean | skip | first:N | last:N | inc:ALPHA | dec:ALPHA`.
inline Strategy parse_strategy(std::string_view text) {
    const std::string s = detail::trim(text);
    const auto colon = s.find(':');
    const std::string head = s.substr(0, colon);
    const std::string arg = colon == std::string::npos ? std::string{} : s.substr(colon + 1);
    const bool has_arg = colon != std::string::npos;

    if (head == "mean" && !has_arg) return Strategy::mean();
    if (head == "skip" && !has_arg) return Strategy::skip();
    if ((head == "first" || head == "last") && has_arg) {
        const auto n = detail::parse_number<std::size_t>(arg, "strategy window");
        return head == "first" ? Strategy::first(n) : Strategy::last(n);
    }
    if (head == "inc" || head == "dec") {
        const double a = has_arg ? detail::parse_number<double>(arg, "strategy alpha") : 1.0;
        return head == "inc" ? Strategy::increasing(a) : Strategy::decreasing(a);
    }
    throw std::invalid_argument("unknown strategy '" + s + "' (expected mean|skip|first:N|last:N|inc:A|dec:A)");
}

inline std::string to_string(const Strategy& s) {
    switch (s.kind) {
        case Strategy::Kind::Mean: return "mean";
        case Strategy::Kind::Skip: return "skip";
        case Strategy::Kind::First: return "first:" + std::to_string(s.window);
        case Strategy::Kind::Last: return "last:" + std::to_string(s.window);
        case Strategy::Kind::Increasing: return "inc:" + detail::format_double(s.alpha);
        case Strategy::Kind::Decreasing: return "dec:" + detail::format_double(s.alpha);
    }
    return "?";
}

enum class SimilaritySource { HiddenStates, AttentionKeys };
enum class SimilarityNorm { Affine, Sigmoid };

/// Where the initial token embeddings come from.
struct TokenSource {
    enum class Kind { Gaussian, Clustered, File };
    Kind kind = Kind::Gaussian;
    std::size_t clusters = 2;
    std::string path;

    friend bool operator==(const TokenSource&, const TokenSource&) = default;
};

/// Parses `gaussian | clustered:K | file:PATH`.
inline TokenSource parse_source(std::string_view text) {
    const std::string s = detail::trim(text);
    if (s == "gaussian") return {};
    if (s.rfind("clustered", 0) == 0) {
        TokenSource src{TokenSource::Kind::Clustered, 2, {}};
        if (s.size() > 9) {
            if (s[9] != ':') throw std::invalid_argument("bad token source '" + s + "'");
            src.clusters = detail::parse_number<std::size_t>(s.substr(10), "cluster count");
        }
        return src;
    }
    if (s.rfind("file:", 0) == 0) return {TokenSource::Kind::File, 0, s.substr(5)};
    throw std::invalid_argument("unknown token source '" + s + "' (expected gaussian|clustered:K|file:PATH)");
}

inline std::string to_string(const TokenSource& s) {
    switch (s.kind) {
        case TokenSource::Kind::Gaussian: return "gaussian";
        case TokenSource::Kind::Clustered: return "clustered:" + std::to_string(s.clusters);
        case TokenSource::Kind::File: return "file:" + s.path;
    }
    return "?";
}

struct RunConfig {
    std::size_t n0 = 576;
    std::size_t dim = 64;
    std::size_t layers = 26;
    std::size_t heads = 4;
    std::size_t budget = 448;  // R, total tokens removed
    Strategy strategy = Strategy::skip();
    double ctr = 0.25;
    double lambda_d = 1.0;
    std::size_t k = 5;              // clamped to N-1 at use
    std::optional<double> tau;      // nullopt = auto (mean pairwise distance)
    SimilaritySource similarity_source = SimilaritySource::AttentionKeys;
    SimilarityNorm similarity_norm = SimilarityNorm::Affine;
    std::vector<std::uint32_t> always_protect;  // original token ids never merged
    std::uint64_t seed = 0;

    // Harness-only knobs.
    TokenSource source;
    std::string weights_path;  // empty = random init from seed
    std::size_t repetitions = 5;
    bool measure_baseline = false;

    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

struct ConfigError {
    std::string field;
    std::string message;

    friend bool operator==(const ConfigError&, const ConfigError&) = default;
};

/// Collects every violated constraint; an empty result means the config is usable.
inline std::vector<ConfigError> validate_config(const RunConfig& cfg) {
    std::vector<ConfigError> errors;
    auto positive = [&](std::size_t v, const char* name) {
        if (v == 0) errors.push_back({name, std::string(name) + " must be positive"});
    };
    positive(cfg.n0, "n0");
    positive(cfg.dim, "dim");
    positive(cfg.layers, "layers");
    positive(cfg.heads, "heads");
    if (cfg.heads > 0 && cfg.dim % cfg.heads != 0) errors.push_back({"heads", "dim must be divisible by heads"});
    if (!(cfg.ctr >= 0.0 && cfg.ctr <= 1.0)) errors.push_back({"ctr", "CTR out of [0,1]"});
    if (!(cfg.lambda_d > 0.0)) errors.push_back({"lambda_d", "lambda_d must be > 0"});
    if (cfg.k == 0) errors.push_back({"k", "k must be >= 1"});
    if (cfg.tau && !(*cfg.tau > 0.0)) errors.push_back({"tau", "tau must be > 0 or auto"});
    if (cfg.budget >= cfg.n0) errors.push_back({"budget", "R must be < N0"});
    switch (cfg.strategy.kind) {
        case Strategy::Kind::First:
        case Strategy::Kind::Last:
            if (cfg.strategy.window < 1 || cfg.strategy.window > cfg.layers) {
                errors.push_back({"strategy", "window N must satisfy 1 <= N <= layers"});
            }
            break;
        case Strategy::Kind::Increasing:
        case Strategy::Kind::Decreasing:
            if (!(cfg.strategy.alpha >= 0.0) || !std::isfinite(cfg.strategy.alpha)) {
                errors.push_back({"strategy", "alpha must be finite and >= 0"});
            }
            break;
        default: break;
    }
    for (auto id : cfg.always_protect) {
        if (id >= cfg.n0) {
            errors.push_back({"always_protect", "id " + std::to_string(id) + " must be < N0"});
            break;
        }
    }
    if (cfg.repetitions == 0) errors.push_back({"repetitions", "repetitions must be >= 1"});
    return errors;
}

/// Applies one `key=value` setting. Unknown keys are rejected.
inline void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
    using detail::parse_number;
    if (key == "n0") cfg.n0 = parse_number<std::size_t>(value, key);
    else if (key == "dim" || key == "d") cfg.dim = parse_number<std::size_t>(value, key);
    else if (key == "layers" || key == "L") cfg.layers = parse_number<std::size_t>(value, key);
    else if (key == "heads" || key == "H") cfg.heads = parse_number<std::size_t>(value, key);
    else if (key == "budget" || key == "R") cfg.budget = parse_number<std::size_t>(value, key);
    else if (key == "strategy") cfg.strategy = parse_strategy(value);
    else if (key == "ctr") cfg.ctr = parse_number<double>(value, key);
    else if (key == "lambda_d") cfg.lambda_d = parse_number<double>(value, key);
    else if (key == "k") cfg.k = parse_number<std::size_t>(value, key);
    else if (key == "tau") {
        if (value == "auto") cfg.tau.reset();
        else cfg.tau = parse_number<double>(value, key);
    } else if (key == "similarity_source") {
        if (value == "attention_keys") cfg.similarity_source = SimilaritySource::AttentionKeys;
        else if (value == "hidden_states") cfg.similarity_source = SimilaritySource::HiddenStates;
        else throw std::invalid_argument("similarity_source must be attention_keys or hidden_states");
    } else if (key == "similarity_norm") {
        if (value == "affine") cfg.similarity_norm = SimilarityNorm::Affine;
        else if (value == "sigmoid") cfg.similarity_norm = SimilarityNorm::Sigmoid;
        else throw std::invalid_argument("similarity_norm must be affine or sigmoid");
    } else if (key == "always_protect") {
        cfg.always_protect.clear();
        std::stringstream ss(value);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (!detail::trim(item).empty()) cfg.always_protect.push_back(parse_number<std::uint32_t>(item, key));
        }
    } else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(value, key);
    else if (key == "source") cfg.source = parse_source(value);
    else if (key == "weights") cfg.weights_path = value;
    else if (key == "repetitions") cfg.repetitions = parse_number<std::size_t>(value, key);
    else if (key == "measure_baseline") {
        if (value == "true" || value == "1") cfg.measure_baseline = true;
        else if (value == "false" || value == "0") cfg.measure_baseline = false;
        else throw std::invalid_argument("measure_baseline must be true or false");
    } else {
        throw std::invalid_argument("unknown config key '" + key + "'");
    }
}

/// Reads `key = value` lines; `#` starts a comment. Errors carry the line number.
inline RunConfig parse_config(std::istream& in) {
    RunConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string text = detail::trim(line);
        if (text.empty()) continue;
        const auto eq = text.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key=value");
        }
        try {
            apply_setting(cfg, detail::trim(text.substr(0, eq)), detail::trim(text.substr(eq + 1)));
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return cfg;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
    return parse_config(in);
}

}  // namespace earlyprune
