#include "lvae/random.hpp"

#include <sstream>

namespace lvae {

std::size_t Rng::categorical(std::span<const double> probs) {
  double total = 0.0;
  for (double p : probs) total += p;
  double u = uniform() * total;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    last_positive = i;
    if (u < probs[i]) return i;
    u -= probs[i];
  }
  return last_positive;
}

std::string Rng::state() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::set_state(const std::string& s) {
  std::istringstream is(s);
  is >> engine_;
}

}  // namespace lvae
