#include "dsegan/serialize.hpp"

#include <bit>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "serialized tensors are little-endian; big-endian hosts are unsupported");
static_assert(sizeof(float) == 4, "f32 storage expected");

namespace dsegan {

namespace {
void fail(const char* what) { throw std::runtime_error(std::string("serialize: ") + what); }
}  // namespace

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) fail("truncated stream reading u32");
  return v;
}

void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) fail("truncated stream reading u64");
  return v;
}

void write_string(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
  const std::uint32_t len = read_u32(in);
  if (len > (1u << 28)) fail("string length out of range");
  std::string s(len, '\0');
  in.read(s.data(), static_cast<std::streamsize>(len));
  if (!in) fail("truncated stream reading string");
  return s;
}

void write_tensor(std::ostream& out, const Tensor& t) {
  write_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (int i = 0; i < t.rank(); ++i) {
    write_u32(out, static_cast<std::uint32_t>(t.dim(i)));
  }
  const auto& v = t.values();
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(float)));
}

Tensor read_tensor(std::istream& in) {
  const std::uint32_t rank = read_u32(in);
  if (rank == 0 || rank > 8) fail("tensor rank out of range");
  std::vector<int> shape(rank);
  std::int64_t numel = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const std::uint32_t extent = read_u32(in);
    if (extent == 0 || extent > (1u << 24)) fail("tensor extent out of range");
    shape[i] = static_cast<int>(extent);
    numel *= extent;
  }
  if (numel > (std::int64_t{1} << 30)) fail("tensor too large");
  std::vector<float> values(static_cast<std::size_t>(numel));
  in.read(reinterpret_cast<char*>(values.data()),
          static_cast<std::streamsize>(values.size() * sizeof(float)));
  if (!in) fail("truncated stream reading tensor data");
  return Tensor::from_data(std::move(shape), std::move(values));
}

}  // namespace dsegan
