#pragma once

#include <array>
#include <cstdint>

namespace cpmap {

/// Philox4x32-10 block function (Salmon et al., Random123).
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

/// Counter-based random stream. A stream is identified by (seed, stream id);
/// the same pair yields the same sequence on every platform. Streams are
/// cheap values: copying one forks it.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream);

  std::uint32_t next_u32();
  /// Uniform on the open interval (0, 1).
  double uniform();
  /// Standard normal via Box-Muller; both deviates of a pair are used.
  double normal();

 private:
  void refill();

  std::array<std::uint32_t, 2> key_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buf_{};
  int pos_ = 4;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline RngStream rng_stream(std::uint64_t seed, std::uint64_t stream) { return {seed, stream}; }

/// Mixes several integers into a stream id (splitmix64 finaliser chain).
std::uint64_t mix_stream_id(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0,
                            std::uint64_t d = 0, std::uint64_t e = 0);

}  // namespace cpmap
