#include "kws/rng.hpp"

namespace kws {

uint64_t mix_seed(uint64_t seed, const std::string& name) {
  // FNV-1a over the name, then a splitmix64 finalizer over (hash ^ seed).
  uint64_t h = 14695981039346656037ull;
  for (unsigned char c : name) {
    h ^= c;
    h *= 1099511628211ull;
  }
  uint64_t z = h ^ seed;
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace kws
