// Copyright 2026 The MUSE Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "muse/tensor.hpp"

namespace muse::io {

/// Binary tensor record, all integers little-endian:
///   "MUST" | u32 version | u8 dtype (0 = f64) | u8 rank | u64 shape[rank] | f64 payload (row-major)
inline constexpr std::uint32_t kTensorFormatVersion = 1;
inline constexpr std::uint8_t kDtypeF64 = 0;

void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

}  // namespace muse::io
