// Copyright 2026 The earlyprune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Trace file: JSON Lines. Line 1 is {"meta": {...}}, then one object per
// encoder layer, then {"unspent": n}.

#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "json.hpp"

#include "earlyprune/core_types.hpp"

namespace earlyprune {

inline nlohmann::json to_json(const LayerRecord& rec) {
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& p : rec.pairs) pairs.push_back({p.src, p.dst, p.score});
    return {{"layer", rec.layer},
            {"scheduled", rec.scheduled},
            {"requested", rec.requested},
            {"count_before", rec.count_before},
            {"count_after", rec.count_after},
            {"shortfall", rec.shortfall},
            {"degenerate_norms", rec.degenerate_norms},
            {"tau", rec.tau},
            {"protected", rec.protected_positions},
            {"pairs", std::move(pairs)}};
}

inline LayerRecord layer_from_json(const nlohmann::json& j) {
    LayerRecord rec;
    rec.layer = j.at("layer").get<std::size_t>();
    rec.scheduled = j.at("scheduled").get<std::size_t>();
    rec.requested = j.at("requested").get<std::size_t>();
    rec.count_before = j.at("count_before").get<std::size_t>();
    rec.count_after = j.at("count_after").get<std::size_t>();
    rec.shortfall = j.at("shortfall").get<std::size_t>();
    rec.degenerate_norms = j.at("degenerate_norms").get<std::size_t>();
    rec.tau = j.at("tau").get<double>();
    rec.protected_positions = j.at("protected").get<std::vector<std::size_t>>();
    for (const auto& p : j.at("pairs")) {
        rec.pairs.push_back({p.at(0).get<std::size_t>(), p.at(1).get<std::size_t>(), p.at(2).get<double>()});
    }
    return rec;
}

inline nlohmann::json to_json(const TraceMetadata& m) {
    return {{"strategy", m.strategy}, {"R", m.budget},     {"CTR", m.ctr}, {"lambda_d", m.lambda_d},
            {"K", m.k},               {"tau", m.tau},      {"seed", m.seed}, {"N0", m.n0}};
}

inline TraceMetadata meta_from_json(const nlohmann::json& j) {
    return {j.at("strategy").get<std::string>(), j.at("R").get<std::size_t>(), j.at("CTR").get<double>(),
            j.at("lambda_d").get<double>(),       j.at("K").get<std::size_t>(), j.at("tau").get<std::string>(),
            j.at("seed").get<std::uint64_t>(),    j.at("N0").get<std::size_t>()};
}

inline void write_trace(const MergeTrace& trace, std::ostream& os) {
    os << nlohmann::json{{"meta", to_json(trace.meta)}}.dump() << '\n';
    for (const auto& rec : trace.layers) os << to_json(rec).dump() << '\n';
    os << nlohmann::json{{"unspent", trace.unspent}}.dump() << '\n';
}

inline void write_trace(const MergeTrace& trace, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write trace file '" + path + "'");
    write_trace(trace, os);
}

inline MergeTrace read_trace(std::istream& is) {
    MergeTrace trace;
    std::string line;
    std::size_t lineno = 0;
    bool saw_meta = false;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            if (j.contains("meta")) {
                trace.meta = meta_from_json(j.at("meta"));
                saw_meta = true;
            } else if (j.contains("unspent")) {
                trace.unspent = j.at("unspent").get<std::size_t>();
            } else {
                trace.layers.push_back(layer_from_json(j));
            }
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error("trace line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (!saw_meta) throw std::runtime_error("trace file has no meta record");
    return trace;
}

inline MergeTrace read_trace(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open trace file '" + path + "'");
    return read_trace(is);
}

/// Human-readable per-layer table.
inline std::string format_trace(const MergeTrace& trace) {
    std::ostringstream os;
    os << "strategy=" << trace.meta.strategy << " R=" << trace.meta.budget << " N0=" << trace.meta.n0
       << " CTR=" << trace.meta.ctr << " lambda_d=" << trace.meta.lambda_d << " K=" << trace.meta.k
       << " tau=" << trace.meta.tau << " seed=" << trace.meta.seed << '\n';
    os << std::setw(6) << "layer" << std::setw(10) << "before" << std::setw(8) << "r" << std::setw(8) << "merged"
       << std::setw(10) << "after" << std::setw(11) << "protected" << std::setw(11) << "shortfall" << '\n';
    for (const auto& rec : trace.layers) {
        os << std::setw(6) << rec.layer << std::setw(10) << rec.count_before << std::setw(8) << rec.requested
           << std::setw(8) << rec.pairs.size() << std::setw(10) << rec.count_after << std::setw(11)
           << rec.protected_positions.size() << std::setw(11) << rec.shortfall << '\n';
    }
    os << "merged " << trace.merged() << " tokens, unspent budget " << trace.unspent << '\n';
    return os.str();
}

}  // namespace earlyprune
