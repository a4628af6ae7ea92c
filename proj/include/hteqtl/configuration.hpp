#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace hteqtl {

inline constexpr int kMaxTissues = 63;

// Binary eQTL configuration over K tissues. Tissue 0 is the most significant
// bit, so numeric order of `bits` is the lexicographic order of the bit string.
class Configuration {
public:
  Configuration() = default;
  Configuration(std::uint64_t bits, int k);

  static Configuration zeros(int k) { return {0, k}; }
  static Configuration ones(int k);
  static Configuration from_string(std::string_view s);
  // All 2^k configurations in canonical order (k <= 24).
  static std::vector<Configuration> enumerate(int k);

  std::uint64_t bits() const { return bits_; }
  int size() const { return k_; }
  bool test(int tissue) const { return (bits_ >> (k_ - 1 - tissue)) & 1u; }
  int hamming() const;
  bool is_zero() const { return bits_ == 0; }
  bool is_ones() const;

  Configuration with(int tissue, bool on) const;
  std::string to_string() const;

  friend bool operator==(const Configuration&, const Configuration&) = default;
  friend std::strong_ordering operator<=>(const Configuration& a, const Configuration& b) {
    if (auto c = a.k_ <=> b.k_; c != 0) return c;
    return a.bits_ <=> b.bits_;
  }

private:
  std::uint64_t bits_ = 0;
  int k_ = 0;
};

// Index of a configuration within enumerate(k).
inline std::size_t config_index(const Configuration& g) { return static_cast<std::size_t>(g.bits()); }

}  // namespace hteqtl
