// Copyright 2026 The earlyprune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

namespace earlyprune {

/// Parity split of the current ordering: a = even positions, b = odd positions.
struct BipartiteSplit {
    std::vector<std::size_t> a;
    std::vector<std::size_t> b;
};

inline BipartiteSplit bipartite_split(std::size_t token_count) {
    BipartiteSplit split;
    split.a.reserve((token_count + 1) / 2);
    split.b.reserve(token_count / 2);
    for (std::size_t i = 0; i < token_count; ++i) (i % 2 == 0 ? split.a : split.b).push_back(i);
    return split;
}

}  // namespace earlyprune
