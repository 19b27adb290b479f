#include "streamcap/stream_io.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

namespace streamcap::io {

namespace {

static_assert(std::numeric_limits<float>::is_iec559 && std::numeric_limits<double>::is_iec559);

template <class U>
void put_le(std::ostream& out, U v) {
  std::array<char, sizeof(U)> buf;
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(buf.data(), buf.size());
}

template <class U>
U get_le(std::istream& in, const char* what) {
  std::array<unsigned char, sizeof(U)> buf;
  if (!in.read(reinterpret_cast<char*>(buf.data()), buf.size()))
    throw ParseError(std::string("truncated file while reading ") + what);
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
  return v;
}

void put_f32(std::ostream& out, float f) { put_le(out, std::bit_cast<std::uint32_t>(f)); }
void put_f64(std::ostream& out, double f) { put_le(out, std::bit_cast<std::uint64_t>(f)); }
float get_f32(std::istream& in, const char* what) { return std::bit_cast<float>(get_le<std::uint32_t>(in, what)); }
double get_f64(std::istream& in, const char* what) { return std::bit_cast<double>(get_le<std::uint64_t>(in, what)); }

void expect_magic(std::istream& in, const char (&magic)[5]) {
  char got[4];
  if (!in.read(got, 4) || std::memcmp(got, magic, 4) != 0)
    throw ParseError(std::string("bad magic, expected ") + magic);
}

std::uint32_t checked_u32(Eigen::Index v, const char* what) {
  if (v < 0 || v > static_cast<Eigen::Index>(std::numeric_limits<std::uint32_t>::max()))
    throw InvalidArgument(std::string(what) + " does not fit in u32");
  return static_cast<std::uint32_t>(v);
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return in;
}

}  // namespace

void write_token_stream(std::ostream& out, const memory::TokenStream& stream) {
  stream.validate();
  out.write("STK1", 4);
  put_le(out, checked_u32(stream.num_frames(), "frame count"));
  put_le(out, checked_u32(stream.tokens_per_frame(), "tokens per frame"));
  put_le(out, checked_u32(stream.dim(), "dimension"));
  put_f64(out, stream.fps);
  for (const auto& f : stream.frames)
    for (Eigen::Index i = 0; i < f.rows(); ++i)
      for (Eigen::Index d = 0; d < f.cols(); ++d) put_f32(out, f(i, d));
  if (!out) throw IoError("write failed");
}

memory::TokenStream read_token_stream(std::istream& in) {
  expect_magic(in, "STK1");
  const auto T = get_le<std::uint32_t>(in, "T");
  const auto n_f = get_le<std::uint32_t>(in, "N_f");
  const auto D = get_le<std::uint32_t>(in, "D");
  const double fps = get_f64(in, "fps");
  if (T == 0 || n_f == 0 || D == 0) throw ParseError("token stream has an empty dimension");
  if (!(fps > 0.0) || !std::isfinite(fps)) throw ParseError("token stream fps must be positive");

  memory::TokenStream s;
  s.fps = fps;
  s.duration_sec = static_cast<double>(T) / fps;
  s.frames.reserve(T);
  for (std::uint32_t t = 0; t < T; ++t) {
    Matrix f(n_f, D);
    for (std::uint32_t i = 0; i < n_f; ++i)
      for (std::uint32_t d = 0; d < D; ++d) f(i, d) = get_f32(in, "tokens");
    if (!f.allFinite()) throw ParseError("token stream contains non-finite values");
    s.frames.push_back(std::move(f));
  }
  return s;
}

void write_token_stream(const std::filesystem::path& path, const memory::TokenStream& stream) {
  auto out = open_out(path);
  write_token_stream(out, stream);
}

memory::TokenStream read_token_stream(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_token_stream(in);
}

void write_snapshot(std::ostream& out, const memory::MemoryState& state) {
  if (state.weights.size() != state.centers.rows())
    throw InvalidArgument("snapshot: weights and centers disagree in size");
  out.write("SMEM", 4);
  put_le(out, checked_u32(state.centers.rows(), "K"));
  put_le(out, checked_u32(state.centers.cols(), "D"));
  for (Eigen::Index k = 0; k < state.centers.rows(); ++k)
    for (Eigen::Index d = 0; d < state.centers.cols(); ++d) put_f32(out, state.centers(k, d));
  for (Eigen::Index k = 0; k < state.weights.size(); ++k) put_f32(out, state.weights[k]);
  if (!out) throw IoError("write failed");
}

memory::MemoryState read_snapshot(std::istream& in) {
  expect_magic(in, "SMEM");
  const auto K = get_le<std::uint32_t>(in, "K");
  const auto D = get_le<std::uint32_t>(in, "D");
  memory::MemoryState s;
  s.centers.resize(K, D);
  s.weights.resize(K);
  for (std::uint32_t k = 0; k < K; ++k)
    for (std::uint32_t d = 0; d < D; ++d) s.centers(k, d) = get_f32(in, "centers");
  for (std::uint32_t k = 0; k < K; ++k) s.weights[k] = get_f32(in, "weights");
  return s;
}

void write_snapshot(const std::filesystem::path& path, const memory::MemoryState& state) {
  auto out = open_out(path);
  write_snapshot(out, state);
}

memory::MemoryState read_snapshot(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_snapshot(in);
}

}  // namespace streamcap::io
