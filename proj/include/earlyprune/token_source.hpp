// Copyright 2026 The earlyprune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "earlyprune/binary_io.hpp"
#include "earlyprune/config.hpp"
#include "earlyprune/core_types.hpp"

namespace earlyprune {

struct GeneratedTokens {
    Matrix embeddings;
    std::vector<std::uint32_t> cluster;  // per-token cluster label, clustered source only
};

namespace detail {

/// Standard normal draws via Box-Muller on raw mt19937_64 output, so the
/// sequence is identical across standard libraries.
class NormalStream {
public:
    explicit NormalStream(std::uint64_t seed) : m_rng(seed) {}

    double next() {
        if (m_has_spare) {
            m_has_spare = false;
            return m_spare;
        }
        const double u1 = (static_cast<double>(m_rng() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
        const double u2 = static_cast<double>(m_rng() >> 11) * 0x1.0p-53;          // [0, 1)
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 6.283185307179586 * u2;
        m_spare = radius * std::sin(angle);
        m_has_spare = true;
        return radius * std::cos(angle);
    }

private:
    std::mt19937_64 m_rng;
    double m_spare = 0.0;
    bool m_has_spare = false;
};

inline bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace detail

/// Binary layout: u32 N0, u32 d, then N0*d row-major f32, all little-endian.
/// A `.csv` path gets one comma-separated row per token instead.
inline void write_embeddings(const Matrix& m, const std::string& path) {
    if (detail::ends_with(path, ".csv")) {
        std::ofstream os(path);
        if (!os) throw std::runtime_error("cannot write embedding file '" + path + "'");
        os.precision(std::numeric_limits<float>::max_digits10);
        for (std::size_t i = 0; i < m.rows(); ++i) {
            for (std::size_t c = 0; c < m.cols(); ++c) os << (c ? "," : "") << m(i, c);
            os << '\n';
        }
        if (!os) throw std::runtime_error("failed writing embedding file '" + path + "'");
        return;
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write embedding file '" + path + "'");
    io::write_u32(os, static_cast<std::uint32_t>(m.rows()));
    io::write_u32(os, static_cast<std::uint32_t>(m.cols()));
    for (float v : m.data()) io::write_f32(os, v);
    if (!os) throw std::runtime_error("failed writing embedding file '" + path + "'");
}

/// Reads the binary layout, or comma-separated rows when the path ends in `.csv`.
inline Matrix read_embeddings(const std::string& path) {
    if (detail::ends_with(path, ".csv")) {
        std::ifstream is(path);
        if (!is) throw std::runtime_error("cannot open embedding file '" + path + "'");
        std::vector<float> data;
        std::size_t rows = 0, cols = 0;
        std::string line;
        while (std::getline(is, line)) {
            if (detail::trim(line).empty()) continue;
            std::stringstream ss(line);
            std::string cell;
            std::size_t n = 0;
            while (std::getline(ss, cell, ',')) {
                data.push_back(detail::parse_number<float>(cell, "embedding csv"));
                ++n;
            }
            if (rows == 0) cols = n;
            if (n != cols) throw std::runtime_error("embedding file '" + path + "': ragged row " + std::to_string(rows + 1));
            ++rows;
        }
        return Matrix(rows, cols, std::move(data));
    }
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open embedding file '" + path + "'");
    const std::string what = "embedding file '" + path + "'";
    const std::size_t rows = io::read_u32(is, what);
    const std::size_t cols = io::read_u32(is, what);
    std::vector<float> data(rows * cols);
    for (auto& v : data) v = io::read_f32(is, what);
    if (is.peek() != std::char_traits<char>::eof()) throw std::runtime_error(what + ": trailing bytes");
    return Matrix(rows, cols, std::move(data));
}

/// gaussian: iid N(0,1). clustered:k: k contiguous blocks of tokens, each a
/// N(0, 4^2) center plus N(0,1) noise. file: loaded and shape-checked.
inline GeneratedTokens gen_tokens(const TokenSource& source, std::size_t n0, std::size_t dim, std::uint64_t seed) {
    GeneratedTokens out;
    switch (source.kind) {
        case TokenSource::Kind::Gaussian: {
            detail::NormalStream normal(seed);
            out.embeddings = Matrix(n0, dim);
            for (auto& v : out.embeddings.data()) v = static_cast<float>(normal.next());
            return out;
        }
        case TokenSource::Kind::Clustered: {
            const std::size_t k = source.clusters;
            if (k == 0 || k > n0) throw std::invalid_argument("clustered source needs 1 <= k <= N0");
            detail::NormalStream normal(seed);
            std::vector<double> centers(k * dim);
            for (auto& c : centers) c = 4.0 * normal.next();
            out.embeddings = Matrix(n0, dim);
            out.cluster.resize(n0);
            for (std::size_t i = 0; i < n0; ++i) {
                const auto label = static_cast<std::uint32_t>(i * k / n0);
                out.cluster[i] = label;
                for (std::size_t c = 0; c < dim; ++c) {
                    out.embeddings(i, c) = static_cast<float>(centers[label * dim + c] + normal.next());
                }
            }
            return out;
        }
        case TokenSource::Kind::File: {
            out.embeddings = read_embeddings(source.path);
            if (out.embeddings.rows() != n0 || out.embeddings.cols() != dim) {
                throw std::runtime_error("embedding file '" + source.path + "': shape " +
                                         std::to_string(out.embeddings.rows()) + "x" +
                                         std::to_string(out.embeddings.cols()) + " does not match N0=" +
                                         std::to_string(n0) + ", d=" + std::to_string(dim));
            }
            return out;
        }
    }
    return out;
}

}  // namespace earlyprune
