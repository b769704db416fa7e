#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lvae/model.hpp"
#include "lvae/random.hpp"

namespace lvae {

/// Greedy reconstructions from the posterior mean (z = 0 without an encoder).
std::vector<TokenSequence> reconstruct(const SequenceVae& model,
                                       const std::vector<TokenSequence>& data, int length_cap);

struct LevDistance {
  double normalized = 0.0;  // mean levenshtein(x, x_hat) / |x|
  double raw = 0.0;         // mean levenshtein(x, x_hat)
};
LevDistance reconstruction_lev_d(const std::vector<TokenSequence>& data,
                                 const std::vector<TokenSequence>& reconstructions);

struct IsEstimate {
  double nll = 0.0;
  double std_error = 0.0;  // delta method
};

/// -log (1/n) sum_i p(z_i) p(x|z_i) / q(z_i|x), z_i ~ q(z|x).
IsEstimate importance_sampled_ll(const SequenceVae& model, std::span<const TokenId> x,
                                 std::size_t n_samples, Rng& rng);

struct EvalOptions {
  std::size_t is_samples = 1000;  // 0 skips the importance-sampled likelihood
  int length_cap = 0;             // 0: 2 * max length + 2
  std::uint64_t seed = 1;
};

struct EvalReport {
  double lev_d = 0.0;
  double lev_raw = 0.0;
  double recon_nll = 0.0;
  double kl = 0.0;
  double neg_elbo = 0.0;
  double nll_is = 0.0;
  double nll_is_std_error = 0.0;
  double ppl = 0.0;
  bool has_is = false;
  std::size_t sequences = 0;
  std::size_t tokens = 0;  // including one EOS per sequence
};

/// Per-sequence means; nll_is_std_error is the standard error of the mean.
EvalReport evaluate(const SequenceVae& model, const std::vector<TokenSequence>& data,
                    const EvalOptions& options);

struct PositionAccuracy {
  std::size_t position = 0;
  double accuracy = 0.0;  // x_i occurs anywhere in the reconstruction
  double aligned = 0.0;   // x_i equals the reconstruction's token at i
  std::size_t count = 0;  // sequences longer than i
};
std::vector<PositionAccuracy> positionwise_accuracy(const std::vector<TokenSequence>& data,
                                                    const std::vector<TokenSequence>& reconstructions);

// --- probing ------------------------------------------------------------

using FeatureRows = std::vector<std::vector<double>>;

FeatureRows single_features(const SequenceVae& model, const std::vector<TokenSequence>& data);
/// [mu_a, mu_b, mu_a - mu_b, mu_a * mu_b]
std::vector<double> paired_features(std::span<const double> mu_a, std::span<const double> mu_b);

struct LinearProbe {
  std::vector<int> classes;     // label value of each output row
  std::size_t dim = 0;
  std::vector<double> weights;  // classes x dim, row-major
  std::vector<double> bias;
  int iterations = 0;
  double gradient_norm = 0.0;
};

struct ProbeConfig {
  double l2 = 1e-4;
  double tolerance = 1e-8;
  int max_iterations = 2000;
};

/// Multinomial logistic regression: mean cross-entropy + (l2/2)|W|^2, bias
/// unpenalized, minimized with BFGS. Throws DegenerateLabels.
LinearProbe train_linear_probe(const FeatureRows& rows, const std::vector<int>& labels,
                               const ProbeConfig& cfg = {});
int probe_predict(const LinearProbe& probe, std::span<const double> row);
double probe_accuracy(const LinearProbe& probe, const FeatureRows& rows,
                      const std::vector<int>& labels);

struct CurvePoint {
  double fraction = 0.0;
  double accuracy = 0.0;  // mean over repeats
  std::size_t labeled = 0;
};

/// For each fraction, a stratified subsample (at least one example per class)
/// of the training rows trains a probe; test accuracy averaged over repeats.
std::vector<CurvePoint> semi_supervised_curve(const FeatureRows& train_rows,
                                              const std::vector<int>& train_labels,
                                              const FeatureRows& test_rows,
                                              const std::vector<int>& test_labels,
                                              const std::vector<double>& fractions,
                                              const ProbeConfig& cfg, int repeats,
                                              std::uint64_t seed);

}  // namespace lvae
