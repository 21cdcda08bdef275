#pragma once

#include <cstdint>
#include <vector>

namespace fedrfq {

// Every random draw in the simulator goes through this generator
// (splitmix64 core, hand-rolled normal) so identical seeds give
// bit-identical runs on any platform or standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();

  // Uniform in [0, 1), 53-bit mantissa.
  double next_double();

  // Standard normal via Box-Muller; two uniforms per draw, no cached spare.
  double next_normal();

  // Uniform integer in [0, bound); bound must be positive.
  int next_int(int bound);

  std::vector<double> normal_vec(int n);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      int j = next_int(i + 1);
      std::swap(v[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(j)]);
    }
  }

 private:
  std::uint64_t state_;
};

// Derives an independent substream seed from (seed, domain, a, b) by
// chained splitmix64 finalization. Used so that e.g. the batch draws of
// client 3 in round 7 never overlap with any other stream.
std::uint64_t substream(std::uint64_t seed, std::uint64_t domain,
                        std::uint64_t a = 0, std::uint64_t b = 0);

// Stream domain tags. Arbitrary distinct constants.
namespace domains {
inline constexpr std::uint64_t kDataset = 0x1001;
inline constexpr std::uint64_t kPartition = 0x1002;
inline constexpr std::uint64_t kInit = 0x1003;
inline constexpr std::uint64_t kTrain = 0x1004;
inline constexpr std::uint64_t kPoison = 0x1005;
inline constexpr std::uint64_t kAuthKey = 0x1006;
inline constexpr std::uint64_t kConsensus = 0x1007;
}  // namespace domains

}  // namespace fedrfq
