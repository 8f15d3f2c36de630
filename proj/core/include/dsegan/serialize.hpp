#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "dsegan/tensor.hpp"

namespace dsegan {

// Binary tensor layout: rank as u32, then each extent as u32, then the
// elements as IEEE-754 f32 in row-major order. All fields little-endian.
void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);

void write_u32(std::ostream& out, std::uint32_t v);
std::uint32_t read_u32(std::istream& in);
void write_u64(std::ostream& out, std::uint64_t v);
std::uint64_t read_u64(std::istream& in);
void write_string(std::ostream& out, const std::string& s);
std::string read_string(std::istream& in);

}  // namespace dsegan
