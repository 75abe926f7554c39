#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mdt {

class Error : public std::runtime_error {
  public:
    explicit Error(const std::string &msg) : std::runtime_error(msg) {}
};

// FNV-1a 64-bit, used for seed derivation and artifact hashing.
inline std::uint64_t fnv1a64(std::string_view data, std::uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string to_hex(std::uint64_t v);

// All stage seeds are derived from the global seed by hashing the stage label,
// so any stage can be re-run in isolation.
inline std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view label) {
    return fnv1a64(label) ^ (global_seed * 0x9e3779b97f4a7c15ull + 0x2545f4914f6cdd1dull);
}

// Deterministic RNG with explicit bit-to-double mappings. std::*_distribution
// output is implementation-defined, so we do not use it anywhere results must
// be byte-reproducible.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x853c49e6748fea9bull) {}

    std::uint64_t next_u64() {
        // splitmix64
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

    // uniform integer in [0, n)
    std::uint64_t next_below(std::uint64_t n) {
        if (n == 0) throw Error("Rng::next_below: n must be positive");
        // rejection sampling, avoids modulo bias
        std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v;
        do {
            v = next_u64();
        } while (v >= limit);
        return v % n;
    }

    double next_gaussian();

  private:
    std::uint64_t state_;
    bool have_cached_ = false;
    double cached_ = 0.0;
};

template <typename T>
void shuffle(std::vector<T> &v, Rng &rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = std::size_t(rng.next_below(i));
        std::swap(v[i - 1], v[j]);
    }
}

// k distinct indices out of n, in random order
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng &rng);

std::string read_file(const std::filesystem::path &path);
void write_file(const std::filesystem::path &path, std::string_view content);
std::string hash_file_hex(const std::filesystem::path &path);

std::vector<std::string> split_ws(std::string_view text);
std::string join(const std::vector<std::string> &parts, std::string_view sep);
std::string trim(std::string_view s);

} // namespace mdt
