// Copyright 2026 The earlyprune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "earlyprune/bipartite.hpp"
#include "earlyprune/budget.hpp"
#include "earlyprune/config.hpp"
#include "earlyprune/core_types.hpp"
#include "earlyprune/encoder.hpp"
#include "earlyprune/flops.hpp"
#include "earlyprune/harness.hpp"
#include "earlyprune/merging.hpp"
#include "earlyprune/scoring.hpp"
#include "earlyprune/token_source.hpp"
#include "earlyprune/trace_io.hpp"
