#include "dsegan/random.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace dsegan {

double RandomSource::uniform() {
  // 53-bit mantissa fill; avoids std::uniform_real_distribution, whose output
  // sequence is not pinned by the standard.
  const std::uint64_t bits = engine_() >> 11;
  return static_cast<double>(bits) * 0x1.0p-53;
}

std::int64_t RandomSource::uniform_int(std::int64_t n) {
  if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
  // Rejection sampling for an unbiased draw.
  const std::uint64_t un = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
  std::uint64_t bits;
  do {
    bits = engine_();
  } while (bits >= limit);
  return static_cast<std::int64_t>(bits % un);
}

double RandomSource::gaussian() {
  double u1 = uniform();
  const double u2 = uniform();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Tensor RandomSource::uniform_tensor(std::vector<int> shape, float lo, float hi) {
  std::vector<float> data(static_cast<std::size_t>(shape_numel(shape)));
  for (float& v : data) v = lo + static_cast<float>(uniform()) * (hi - lo);
  return Tensor::from_data(std::move(shape), std::move(data));
}

Tensor RandomSource::gaussian_tensor(std::vector<int> shape, float stddev) {
  std::vector<float> data(static_cast<std::size_t>(shape_numel(shape)));
  for (float& v : data) v = static_cast<float>(gaussian()) * stddev;
  return Tensor::from_data(std::move(shape), std::move(data));
}

std::vector<int> RandomSource::derangement(int n) {
  if (n < 2) throw std::invalid_argument("derangement: need at least two elements");
  std::vector<int> perm(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(uniform_int(i));
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }
  return perm;
}

std::string RandomSource::serialize_state() const {
  std::ostringstream out;
  out << engine_;
  return out.str();
}

void RandomSource::restore_state(const std::string& text) {
  std::istringstream in(text);
  in >> engine_;
  if (in.fail()) throw std::runtime_error("RandomSource: malformed engine state");
}

}  // namespace dsegan
