#include "iphkit/rng.hpp"

#include "iphkit/errors.hpp"

namespace iphkit {

std::uint64_t SeededStream::mix(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over (seed, stream); decorrelates nearby seeds and
  // run indices so per-run streams behave as independent generators.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double ScriptedStream::pop() {
  if (draws_.empty()) {
    throw PreconditionError("scripted random stream exhausted");
  }
  double v = draws_.front();
  draws_.pop_front();
  return v;
}

}  // namespace iphkit
