#pragma once

#include <filesystem>
#include <iosfwd>

#include "streamcap/memory.hpp"

namespace streamcap::io {

// Token-stream file ("STK1"): u32 T, u32 N_f, u32 D, f64 fps, then T*N_f*D
// f32 values, frame-major, token-major, channel-major. All little-endian.
// Duration is implied as T / fps.
void write_token_stream(std::ostream& out, const memory::TokenStream& stream);
memory::TokenStream read_token_stream(std::istream& in);

void write_token_stream(const std::filesystem::path& path, const memory::TokenStream& stream);
memory::TokenStream read_token_stream(const std::filesystem::path& path);

// Memory snapshot ("SMEM"): u32 K, u32 D, K*D f32 centers, K f32 weights.
void write_snapshot(std::ostream& out, const memory::MemoryState& state);
memory::MemoryState read_snapshot(std::istream& in);

void write_snapshot(const std::filesystem::path& path, const memory::MemoryState& state);
memory::MemoryState read_snapshot(const std::filesystem::path& path);

}  // namespace streamcap::io
