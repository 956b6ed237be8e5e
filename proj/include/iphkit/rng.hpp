#pragma once

#include <cstdint>
#include <deque>
#include <random>
#include <vector>

namespace iphkit {

// Source of randomness for sampling and simulation.  Everything that draws
// random numbers goes through this interface so that runs can be replayed,
// either with a seeded generator or with a scripted sequence of draws.
class RngStream {
 public:
  virtual ~RngStream() = default;

  // Uniform draw on [0, 1).
  virtual double uniform() = 0;

  // Raw delay draw.  The default routes through uniform() via each density's
  // sampler; scripted streams override it to return pre-recorded delays.
  virtual bool supplies_delays() const { return false; }
  virtual double next_delay() { return 0.0; }
};

// Mersenne-twister backed stream.  Distinct (seed, stream) pairs give
// independent streams, which is how parallel simulation splits its RNG.
class SeededStream final : public RngStream {
 public:
  explicit SeededStream(std::uint64_t seed, std::uint64_t stream = 0)
      : engine_(mix(seed, stream)) {}

  double uniform() override {
    // 53-bit mantissa; never returns 1.0.
    return (engine_() >> 11) * 0x1.0p-53;
  }

  static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream);

 private:
  std::mt19937_64 engine_;
};

// Replays a fixed list of numbers.  Delay requests consume entries directly;
// uniform requests consume entries and clamp them to [0, 1).  Running out of
// entries is an error because a scripted run must be fully specified.
class ScriptedStream final : public RngStream {
 public:
  explicit ScriptedStream(std::vector<double> draws)
      : draws_(draws.begin(), draws.end()) {}

  double uniform() override { return clamp01(pop()); }
  bool supplies_delays() const override { return true; }
  double next_delay() override { return pop(); }

  std::size_t remaining() const { return draws_.size(); }

 private:
  double pop();
  static double clamp01(double u) { return u < 0.0 ? 0.0 : (u >= 1.0 ? 0x1.fffffffffffffp-1 : u); }

  std::deque<double> draws_;
};

}  // namespace iphkit
