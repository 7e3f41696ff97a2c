// Copyright 2026 The MUSE Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

namespace muse::instrument {

/// Per-run operation and allocation counters.
///
/// Kernels report multiply-add counts through `add_madds`; every tensor
/// buffer reports its scalar count on allocation and release. Counters are
/// only live while a `CountingScope` is installed on the current thread.
struct Counters {
  std::uint64_t madds = 0;
  std::int64_t live_scalars = 0;
  std::int64_t peak_scalars = 0;

  void on_alloc(std::int64_t n) {
    live_scalars += n;
    if (live_scalars > peak_scalars) peak_scalars = live_scalars;
  }
  void on_free(std::int64_t n) { live_scalars -= n; }
};

/// Counters installed on this thread, or nullptr.
Counters* current();

void add_madds(std::uint64_t n);

/// Installs `counters` for the lifetime of the scope; restores the previous
/// installation on exit so scopes nest.
class CountingScope {
 public:
  explicit CountingScope(Counters& counters);
  ~CountingScope();
  CountingScope(const CountingScope&) = delete;
  CountingScope& operator=(const CountingScope&) = delete;

 private:
  Counters* previous_;
};

}  // namespace muse::instrument
