// Copyright 2026 The MUSE Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "muse/instrument.hpp"

namespace muse::instrument {

namespace {
thread_local Counters* g_current = nullptr;
}  // namespace

Counters* current() { return g_current; }

void add_madds(std::uint64_t n) {
  if (g_current != nullptr) g_current->madds += n;
}

CountingScope::CountingScope(Counters& counters) : previous_(g_current) {
  g_current = &counters;
}

CountingScope::~CountingScope() { g_current = previous_; }

}  // namespace muse::instrument
