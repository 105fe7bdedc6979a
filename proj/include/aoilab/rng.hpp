#ifndef AOILAB_RNG_HPP
#define AOILAB_RNG_HPP

#include <cstdint>
#include <random>
#include <string_view>

namespace aoilab {

using Rng = std::mt19937_64;

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

/// Seed for the named sub-stream `name` (optionally indexed, e.g. by episode)
/// of a master seed. Streams with different names or indices are unrelated,
/// so varying one stochastic component leaves every other one untouched.
constexpr std::uint64_t stream_seed(std::uint64_t master, std::string_view name,
                                    std::uint64_t index = 0) {
  std::uint64_t s = detail::splitmix64(master);
  s = detail::splitmix64(s ^ detail::fnv1a(name));
  return detail::splitmix64(s ^ detail::splitmix64(index + 0x632be59bd9b4e019ULL));
}

inline Rng make_stream(std::uint64_t master, std::string_view name, std::uint64_t index = 0) {
  return Rng(stream_seed(master, name, index));
}

// Stream names used throughout the lab.
namespace streams {
inline constexpr std::string_view kProcessNoise = "dynamics.noise";
inline constexpr std::string_view kControls = "dynamics.controls";
inline constexpr std::string_view kInitialState = "dynamics.initial";
inline constexpr std::string_view kAdmission = "network.admission";
inline constexpr std::string_view kService = "network.service";
inline constexpr std::string_view kNoisyAge = "network.noisy_age";
inline constexpr std::string_view kTimeVarying = "network.time_varying";
inline constexpr std::string_view kInit = "laa.init";
inline constexpr std::string_view kReplay = "laa.replay";
}  // namespace streams

}  // namespace aoilab

#endif  // AOILAB_RNG_HPP
