#include "lvae/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "lvae/errors.hpp"

namespace lvae {

GaussHermiteRule gauss_hermite(int n) {
  // Newton iteration on the orthonormal Hermite recurrence with the classic
  // asymptotic starting guesses for the largest roots.
  constexpr double kPiM4 = 0.7511255444649425;  // pi^(-1/4)
  GaussHermiteRule rule;
  rule.nodes.assign(static_cast<std::size_t>(n), 0.0);
  rule.weights.assign(static_cast<std::size_t>(n), 0.0);
  const int m = (n + 1) / 2;
  double z = 0.0;
  for (int i = 0; i < m; ++i) {
    if (i == 0) {
      z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -0.16667);
    } else if (i == 1) {
      z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
    } else if (i == 2) {
      z = 1.86 * z - 0.86 * rule.nodes[0];
    } else if (i == 3) {
      z = 1.91 * z - 0.91 * rule.nodes[1];
    } else {
      z = 2.0 * z - rule.nodes[static_cast<std::size_t>(i - 2)];
    }
    double pp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p1 = kPiM4, p2 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = z * std::sqrt(2.0 / (j + 1)) * p2 - std::sqrt(static_cast<double>(j) / (j + 1)) * p3;
      }
      pp = std::sqrt(2.0 * n) * p2;
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) <= 1e-15 * std::max(1.0, std::abs(z))) break;
    }
    rule.nodes[static_cast<std::size_t>(i)] = z;
    rule.nodes[static_cast<std::size_t>(n - 1 - i)] = -z;
    rule.weights[static_cast<std::size_t>(i)] = 2.0 / (pp * pp);
    rule.weights[static_cast<std::size_t>(n - 1 - i)] = 2.0 / (pp * pp);
  }
  // Ascending order.
  std::reverse(rule.nodes.begin(), rule.nodes.end());
  std::reverse(rule.weights.begin(), rule.weights.end());
  return rule;
}

StandardNormalRule standard_normal_rule(int nodes_per_dim, int dim) {
  const auto gh = gauss_hermite(nodes_per_dim);
  StandardNormalRule rule;
  std::vector<std::size_t> idx(static_cast<std::size_t>(dim), 0);
  const double norm = std::pow(std::numbers::pi, -0.5 * dim);
  while (true) {
    std::vector<double> z(static_cast<std::size_t>(dim));
    double w = norm;
    for (std::size_t d = 0; d < idx.size(); ++d) {
      z[d] = std::numbers::sqrt2 * gh.nodes[idx[d]];
      w *= gh.weights[idx[d]];
    }
    rule.points.push_back(std::move(z));
    rule.weights.push_back(w);
    std::size_t d = 0;
    while (d < idx.size() && ++idx[d] == gh.nodes.size()) idx[d++] = 0;
    if (d == idx.size()) break;
  }
  return rule;
}

double log_sum_exp(std::span<const double> xs) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : xs) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - mx);
  return mx + std::log(s);
}

namespace {

void enumerate_from(ad::Tape& tape, const SequenceVae& model, ad::Var state, TokenId prev,
                    TokenSequence& prefix, double logp_prefix, int max_len,
                    ConditionalTable& table, std::vector<double>& unterminated) {
  StepVars s = step(tape, model, state, prev);
  const auto logp = tape.value(next_log_probs(tape, model, s.logits, prefix.size()));
  table.log_prob[prefix] = logp_prefix + logp[Vocabulary::kEos];
  for (std::size_t a = Vocabulary::kFirstContent; a < logp.size(); ++a) {
    const double lp = logp_prefix + logp[a];
    if (lp == -std::numeric_limits<double>::infinity()) continue;
    if (static_cast<int>(prefix.size()) == max_len) {
      unterminated.push_back(lp);
      continue;
    }
    prefix.push_back(static_cast<TokenId>(a));
    enumerate_from(tape, model, s.state, static_cast<TokenId>(a), prefix, lp, max_len, table,
                   unterminated);
    prefix.pop_back();
  }
}

}  // namespace

ConditionalTable enumerate_conditional(const SequenceVae& model, std::span<const double> z,
                                       int max_len) {
  ad::Tape tape(&model.params(), nullptr, false);
  ConditionalTable table;
  TokenSequence prefix;
  std::vector<double> unterminated;
  enumerate_from(tape, model, init_state(tape, model, tape.constant(z)), Vocabulary::kBos, prefix,
                 0.0, max_len, table, unterminated);
  table.log_unterminated = unterminated.empty() ? -std::numeric_limits<double>::infinity()
                                                : log_sum_exp(unterminated);
  return table;
}

MarginalTable quadrature_marginal(const SequenceVae& model, int max_len, int nodes_per_dim) {
  if (model.dims().d_z > 2)
    throw Error(ErrorCode::LatentTooLarge, "quadrature supports latent dimension <= 2");
  const auto rule = standard_normal_rule(nodes_per_dim, model.dims().d_z);
  std::map<TokenSequence, std::vector<double>> terms;
  for (std::size_t i = 0; i < rule.points.size(); ++i) {
    const double lw = std::log(rule.weights[i]);
    auto table = enumerate_conditional(model, rule.points[i], max_len);
    for (auto& [seq, lp] : table.log_prob) terms[seq].push_back(lw + lp);
  }
  MarginalTable out;
  double mass = 0.0;
  for (auto& [seq, ts] : terms) {
    const double lp = log_sum_exp(ts);
    out.log_prob.emplace(seq, lp);
    mass += std::exp(lp);
  }
  out.truncated_mass = 1.0 - mass;
  return out;
}

double quadrature_log_marginal(const SequenceVae& model, std::span<const TokenId> x,
                               int nodes_per_dim) {
  if (model.dims().d_z > 2)
    throw Error(ErrorCode::LatentTooLarge, "quadrature supports latent dimension <= 2");
  const auto rule = standard_normal_rule(nodes_per_dim, model.dims().d_z);
  std::vector<double> terms(rule.points.size());
  for (std::size_t i = 0; i < rule.points.size(); ++i)
    terms[i] = std::log(rule.weights[i]) - sequence_nll(model, x, rule.points[i]);
  return log_sum_exp(terms);
}

}  // namespace lvae
