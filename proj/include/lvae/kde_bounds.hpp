#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <vector>

#include "lvae/model.hpp"
#include "lvae/quadrature.hpp"
#include "lvae/random.hpp"
#include "lvae/vocabulary.hpp"

namespace lvae {

enum class DistanceKind { Levenshtein, Hamming };

/// Kernel density estimate p(x) = (1/|D|) sum_k exp(-d(x, x_k)/tau) / Z_k over
/// content-token sequences of any length.
struct KdeConfig {
  double tau = 0.5;
  std::vector<TokenSequence> dataset;
  std::size_t content_size = 2;  // content tokens are ids kFirstContent.. kFirstContent+n-1
  int l_max = 12;                // enumeration length for Z_k
  double tail_tolerance = 1e-6;
  std::uint64_t enumeration_budget = 5'000'000;
  DistanceKind distance = DistanceKind::Levenshtein;
};

struct Partition {
  double z = 1.0;          // enumerated sum over |x| <= l_max
  double tail_bound = 0.0; // certified bound on the remaining mass of the sum
};

/// Throws DivergentKernel (tau >= 1/ln V), EnumerationTooLarge, TailTooLarge.
Partition partition_function_exact(std::span<const TokenId> x_k, const KdeConfig& cfg);
/// One enumeration pass for every dataset element.
std::vector<Partition> partition_functions(const KdeConfig& cfg);

/// Geometric bound on sum_{|x| > length} exp(-d(x, x_k)/tau).
double kde_tail_bound(std::size_t reference_length, int length, const KdeConfig& cfg);

double kde_distance(std::span<const TokenId> a, std::span<const TokenId> b, DistanceKind kind);

double kde_log_prob(std::span<const TokenId> x, const KdeConfig& cfg,
                    std::span<const Partition> partitions);

/// Total KDE mass over sequences of length <= eval_length, and the certified
/// mass beyond it.
struct NormalizationReport {
  double mass = 0.0;
  double tail = 0.0;
  std::uint64_t sequences = 0;
};
NormalizationReport kde_normalization(const KdeConfig& cfg, std::span<const Partition> partitions,
                                      int eval_length);

/// A distribution over content-token sequences.
class SequenceDistribution {
 public:
  virtual ~SequenceDistribution() = default;
  virtual TokenSequence sample(Rng& rng) const = 0;
  virtual double log_prob(std::span<const TokenId> x) const = 0;
  virtual std::size_t content_size() const = 0;
  /// log p(x) for every sequence of length <= max_len (probability zero
  /// entries omitted) and the mass left outside.
  virtual MarginalTable enumerate(int max_len) const;
};

/// Latent-variable generator p(x) = E_{p(z)} p(x|z), with log p(x) by
/// Gauss-Hermite quadrature (latent dimension <= 2).
class LatentSequenceModel : public SequenceDistribution {
 public:
  LatentSequenceModel(const SequenceVae& model, int length_cap, int nodes_per_dim = 64);
  TokenSequence sample(Rng& rng) const override;
  TokenSequence sample_given(std::span<const double> z, Rng& rng) const;
  double log_prob(std::span<const TokenId> x) const override;
  std::size_t content_size() const override;
  MarginalTable enumerate(int max_len) const override;
  const SequenceVae& model() const { return model_; }
  int length_cap() const { return length_cap_; }

 private:
  const SequenceVae& model_;
  int length_cap_;
  int nodes_;
  mutable std::map<TokenSequence, double> cache_;
};

/// Fixed-length sequences with independent positions.
class PositionwiseModel : public SequenceDistribution {
 public:
  /// probs[i][v] over vocabulary ids; only content ids may carry mass.
  explicit PositionwiseModel(std::vector<std::vector<double>> probs);
  TokenSequence sample(Rng& rng) const override;
  double log_prob(std::span<const TokenId> x) const override;
  std::size_t content_size() const override;
  const std::vector<std::vector<double>>& probs() const { return probs_; }

 private:
  std::vector<std::vector<double>> probs_;
};

struct ExactKl {
  double value = 0.0;
  double truncated_mass = 0.0;  // model mass not enumerated
};

/// sum_x p(x) [log p(x) - log p_kde(x)] over sequences of length <= support_length.
ExactKl exact_kde_kl(const SequenceDistribution& model, const KdeConfig& cfg,
                     std::span<const Partition> partitions, int support_length);

struct BoundReport {
  double reconstruction = 0.0;      // (1/(tau|D|)) sum_k E[...] D(x, x_k)
  double posterior_term = 0.0;      // tight: E[w log q(z|x_k)]
  double aggregate_term = 0.0;      // tight: -E_{p(z)} log q(z)
  double log_partition_term = 0.0;  // (1/|D|) sum_k [w] log Z_k
  double neg_entropy = 0.0;         // E_p log p(x)
  double total = 0.0;
  double std_error = 0.0;
  bool includes_log_partition = true;
  std::vector<std::pair<std::string, double>> term_std_errors;
};

/// Monte Carlo estimate of the naive bound. Passing empty partitions omits
/// the constant and clears includes_log_partition.
BoundReport naive_bound(const SequenceDistribution& model, const KdeConfig& cfg,
                        std::span<const Partition> partitions, std::size_t n_samples, Rng& rng);

/// Per-position optimum of the naive Hamming bound with its entropy term for
/// an unconstrained autoregressive model over content tokens. Vocabulary-sized
/// rows; reserved ids carry zero mass. Throws UnequalLength.
std::vector<std::vector<double>> naive_bound_marginal_optimum(
    const std::vector<TokenSequence>& dataset, double tau, std::size_t content_size);

/// Unconstrained autoregressive model over fixed-length content sequences:
/// one logit vector per prefix, trained by Adam on the exact naive Hamming
/// objective E_p[(1/(tau|D|)) sum_k hamming(x, x_k)] + E_p log p(x).
struct TabularFit {
  std::map<TokenSequence, std::vector<double>> conditionals;  // prefix -> vocab-sized probs
  double objective = 0.0;
  int steps = 0;
};
TabularFit fit_naive_hamming_model(const std::vector<TokenSequence>& dataset, double tau,
                                   std::size_t content_size, int steps, double learning_rate,
                                   std::uint64_t seed);

struct TightBoundOptions {
  std::size_t n_outer = 32;    // z samples per dataset element
  std::size_t n_agg = 4096;    // prior samples for the aggregate term
  std::size_t n_entropy = 4096;
};

/// Monte Carlo estimate of the tight bound with the aggregated posterior
/// evaluated as the exact mixture over cfg.dataset.
BoundReport tight_bound(const LatentSequenceModel& model, const KdeConfig& cfg,
                        std::span<const Partition> partitions, const TightBoundOptions& options,
                        Rng& rng);

/// log q(z) for the mixture (1/n) sum_i N(z; mu_i, sigma_i^2).
double aggregated_posterior_log_density(std::span<const GaussianPosterior> posteriors,
                                        std::span<const double> z);

/// KL(q(z) || N(0, I)) for the mixture, sampling from the mixture.
McEstimate aggregated_posterior_kl(std::span<const GaussianPosterior> posteriors,
                                   std::size_t n_samples, Rng& rng);

struct GridSpec {
  double x_min = -1.0, x_max = 1.0, y_min = -1.0, y_max = 1.0;
  int resolution = 100;
};

struct RewardGrid {
  struct Cell {
    double x, y, field_a, field_b;
  };
  std::vector<Cell> cells;  // row-major, y outer
  int resolution = 0;
};

/// field_a = log sum_k exp(-|p - p_k|^2 / tau), field_b = -sum_k |p - p_k|^2 / tau.
RewardGrid reward_grid_demo(std::span<const std::array<double, 2>> points, double tau,
                            const GridSpec& grid);

}  // namespace lvae
