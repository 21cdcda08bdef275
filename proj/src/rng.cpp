#include "fedrfq/rng.hpp"

#include <cmath>

namespace fedrfq {

namespace {

constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;

// splitmix64 finalizer: bijective, full avalanche.
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t Rng::next_u64() {
  state_ += kGamma;
  return mix64(state_);
}

double Rng::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::next_normal() {
  // u1 in (0, 1] so the log never sees zero.
  double u1 = 1.0 - next_double();
  double u2 = next_double();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(6.283185307179586476925286766559 * u2);
}

int Rng::next_int(int bound) {
  // Lemire multiply-shift; bias is < 2^-32 for any desk-scale bound.
  return static_cast<int>((static_cast<unsigned __int128>(next_u64()) *
                           static_cast<unsigned __int128>(bound)) >>
                          64);
}

std::vector<double> Rng::normal_vec(int n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (double& x : v) x = next_normal();
  return v;
}

// Chained finalizer: h <- mix64(h ^ component) for each component, with a
// full avalanche between injections. Streams for distinct (domain, a, b)
// triples are independent for all practical purposes.
std::uint64_t substream(std::uint64_t seed, std::uint64_t domain,
                        std::uint64_t a, std::uint64_t b) {
  std::uint64_t h = mix64(seed ^ kGamma);
  h = mix64(h ^ domain);
  h = mix64(h ^ a);
  h = mix64(h ^ b);
  return h;
}

}  // namespace fedrfq
