#include "hteqtl/configuration.hpp"

#include <bit>

#include "hteqtl/errors.hpp"

namespace hteqtl {

namespace {
std::uint64_t low_mask(int k) { return k == 64 ? ~0ull : ((1ull << k) - 1); }
}  // namespace

Configuration::Configuration(std::uint64_t bits, int k) : bits_(bits), k_(k) {
  if (k < 1 || k > kMaxTissues) throw ContractViolation("configuration length out of range: " + std::to_string(k));
  if (bits & ~low_mask(k)) throw ContractViolation("configuration bits exceed length");
}

Configuration Configuration::ones(int k) { return {low_mask(k), k}; }

Configuration Configuration::from_string(std::string_view s) {
  if (s.empty() || s.size() > kMaxTissues) throw InputError("bad configuration string '" + std::string(s) + "'");
  std::uint64_t bits = 0;
  for (char ch : s) {
    if (ch != '0' && ch != '1') throw InputError("bad configuration string '" + std::string(s) + "'");
    bits = (bits << 1) | static_cast<std::uint64_t>(ch == '1');
  }
  return {bits, static_cast<int>(s.size())};
}

std::vector<Configuration> Configuration::enumerate(int k) {
  if (k < 1 || k > 24) throw ContractViolation("cannot enumerate configurations for K=" + std::to_string(k));
  std::vector<Configuration> out;
  out.reserve(std::size_t{1} << k);
  for (std::uint64_t b = 0; b < (1ull << k); ++b) out.emplace_back(b, k);
  return out;
}

int Configuration::hamming() const { return std::popcount(bits_); }

bool Configuration::is_ones() const { return bits_ == low_mask(k_); }

Configuration Configuration::with(int tissue, bool on) const {
  std::uint64_t m = 1ull << (k_ - 1 - tissue);
  return {on ? (bits_ | m) : (bits_ & ~m), k_};
}

std::string Configuration::to_string() const {
  std::string s(static_cast<std::size_t>(k_), '0');
  for (int t = 0; t < k_; ++t)
    if (test(t)) s[static_cast<std::size_t>(t)] = '1';
  return s;
}

}  // namespace hteqtl
