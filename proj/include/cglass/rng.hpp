#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace cglass {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Seed for an independent stream identified by (master, ids...). Streams
// depend only on the ids, never on the order in which they are created.
inline std::uint64_t stream_seed(std::uint64_t master, std::initializer_list<std::uint64_t> ids) {
    std::uint64_t h = splitmix64(master);
    for (auto id : ids) h = splitmix64(h ^ splitmix64(id + 0x632be59bd9b4e019ULL));
    return h;
}

inline Rng make_stream(std::uint64_t master, std::initializer_list<std::uint64_t> ids) {
    return Rng(stream_seed(master, ids));
}

// purpose tags for stream_seed
enum Stream : std::uint64_t {
    kSample = 1,
    kChain = 2,
    kSwap = 3,
    kAnneal = 4,
    kTrajectory = 5,
    kBootstrap = 6,
    kTriplet = 7,
    kEnsemble = 8,
    kGoe = 9,
};

}  // namespace cglass
