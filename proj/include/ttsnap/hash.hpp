#pragma once

#include <bit>
#include <cstdint>
#include <span>
#include <string_view>

namespace ttsnap {

// FNV-1a, 64-bit. Doubles are hashed by bit pattern.
class Fnv1a {
 public:
  void bytes(std::string_view s) {
    for (unsigned char c : s) byte(c);
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) byte(static_cast<unsigned char>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void f64s(std::span<const double> v) {
    for (double x : v) f64(x);
  }
  std::uint64_t digest() const { return state_; }

 private:
  void byte(unsigned char c) {
    state_ ^= c;
    state_ *= 0x100000001b3ULL;
  }
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

}  // namespace ttsnap
