#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace fairvoice {

// 64-bit FNV-1a. Used for parameter checksums, config hashes and sub-seeds.
class Fnv1a {
 public:
  void update(std::span<const std::byte> bytes) {
    for (std::byte b : bytes) {
      state_ ^= static_cast<std::uint64_t>(b);
      state_ *= 0x100000001b3ULL;
    }
  }
  void update(std::string_view s) { update(std::as_bytes(std::span(s.data(), s.size()))); }
  template <typename T>
  void update_value(const T& v) {
    update(std::as_bytes(std::span(&v, 1)));
  }
  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent stream seed for one named item (a sample, a member, ...).
inline std::uint64_t sub_seed(std::uint64_t seed, std::string_view name) {
  Fnv1a h;
  h.update_value(seed);
  h.update(name);
  return splitmix64(h.digest());
}

std::string to_hex(std::uint64_t value);

}  // namespace fairvoice
