#pragma once

#include <functional>
#include <map>
#include <span>
#include <vector>

#include "lvae/model.hpp"

namespace lvae {

/// Gauss–Hermite rule for the weight exp(-x^2): nodes ascending, weights sum to sqrt(pi).
struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

GaussHermiteRule gauss_hermite(int n);

/// Tensor-product rule for E_{z ~ N(0, I_d)}[f(z)]: points z and weights summing to 1.
struct StandardNormalRule {
  std::vector<std::vector<double>> points;
  std::vector<double> weights;
};

StandardNormalRule standard_normal_rule(int nodes_per_dim, int dim);

/// log p(x|z) for every sequence of length <= max_len under the generator,
/// enumerated by depth-first search over the prefix tree. Also returns the
/// log of the mass that has not terminated after max_len tokens.
struct ConditionalTable {
  std::map<TokenSequence, double> log_prob;
  double log_unterminated = -1e300;
};

ConditionalTable enumerate_conditional(const SequenceVae& model, std::span<const double> z,
                                       int max_len);

/// Marginal log p(x) = log E_{p(z)} p(x|z) by quadrature for every sequence of
/// length <= max_len. Throws LatentTooLarge when d_z > 2.
struct MarginalTable {
  std::map<TokenSequence, double> log_prob;
  double truncated_mass = 0.0;  // 1 - sum of enumerated probabilities
};

MarginalTable quadrature_marginal(const SequenceVae& model, int max_len, int nodes_per_dim = 64);

/// log p(x) for a single sequence by quadrature.
double quadrature_log_marginal(const SequenceVae& model, std::span<const TokenId> x,
                               int nodes_per_dim = 64);

double log_sum_exp(std::span<const double> xs);

}  // namespace lvae
