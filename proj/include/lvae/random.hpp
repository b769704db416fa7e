#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace lvae {

// Single deterministic random stream. Distributions are constructed per draw
// so that the engine state alone captures the stream position.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
  std::size_t uniform_index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  std::vector<double> normals(std::size_t n) {
    std::vector<double> out(n);
    for (auto& v : out) v = normal();
    return out;
  }
  // Draws an index from unnormalized nonnegative weights.
  std::size_t categorical(std::span<const double> probs);

  template <class T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[uniform_index(i)]);
  }

  std::string state() const;
  void set_state(const std::string& s);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace lvae
