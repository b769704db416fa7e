#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "lvae/corpus.hpp"
#include "lvae/model.hpp"
#include "lvae/objectives.hpp"

namespace lvae {

enum class Method { Lm, Vae, BetaVae, CyclicVae, LevVae, LevAe };

std::string to_string(Method m);
Method method_from_string(const std::string& name);

struct TrainConfig {
  Method method = Method::LevVae;
  double lambda = 1.0;
  double alpha = 1.0;
  double tau = 1.0;
  double beta = 1.0;
  int M = 4;
  int d_z = 16;
  int d_h = 64;
  int d_emb = 32;
  double lr = 1e-3;
  int batch_size = 16;
  int epochs = 30;
  std::uint64_t seed = 1;
  ControlPolicy control = ControlPolicy::GreedyArgmax;
  double oracle_temperature = 0.0;
  bool shared_embeddings = false;
  double clip_norm = 5.0;  // global gradient norm clip; 0 disables
  int monitor_size = 256;  // training examples used for the per-epoch lev_d

  bool operator==(const TrainConfig&) const = default;
};

/// Throws ConfigInvalid for out-of-range or method-inconsistent values.
void validate(const TrainConfig& cfg);

/// Effective per-example weights (lambda, alpha, tau) of a method at an epoch.
SurrogateWeights method_weights(const TrainConfig& cfg, long epoch);

struct EpochMetrics {
  int epoch = 0;
  double total = 0.0;
  double distill = 0.0;
  double teacher_nll = 0.0;
  double kl = 0.0;
  bool has_kl = true;  // false for the language-model baseline
  double lev_d = 0.0;
  double seconds = 0.0;
};

struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;
  TrainConfig config;
  Vocabulary vocab;
  SequenceVae model;
  std::string rng_state;
  int epoch = 0;
};

/// Sequences with FNV-1a(content) % 10 == 0 go to validation.
bool in_validation_split(const TokenSequence& x);

struct TrainCallbacks {
  std::function<void(const EpochMetrics&)> on_epoch;
  std::function<void(int epoch, std::size_t index, const LossBreakdown&)> on_example;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochMetrics> metrics;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> valid_indices;
};

/// Minibatch training. Random draws per epoch, in order: shuffle of the
/// training indices, then per example eps followed by its rollout draws.
/// Throws NonFiniteLoss (with the example index), NonFiniteGradient, ConfigInvalid.
TrainResult train(const TrainConfig& cfg, const Corpus& corpus, const TrainCallbacks& callbacks = {});

/// The model's latent code used for deterministic reconstruction: mu, or 0
/// for models without an encoder.
std::vector<double> posterior_mean(const SequenceVae& model, const TokenSequence& x);

/// Mean normalized Levenshtein distance of greedy reconstructions from mu.
double monitor_lev_d(const SequenceVae& model, const std::vector<TokenSequence>& data, int length_cap);

std::string metrics_csv(const std::vector<EpochMetrics>& metrics, bool include_time = true);

struct SearchRange {
  enum class Kind { LogUniform, Uniform, IntUniform } kind = Kind::Uniform;
  double lo = 0.0;
  double hi = 1.0;
};

struct SearchSpace {
  TrainConfig base;
  std::map<std::string, SearchRange> ranges;  // keys are TrainConfig field names
};

struct SearchResult {
  TrainConfig config;
  double score = 0.0;
};

/// Draw i of the search uses its own stream derived from (seed, i), so a
/// larger budget evaluates a superset of a smaller one. Objectives (lower is
/// better): "lev_d", "neg_elbo", "total", all on the validation split.
std::vector<SearchResult> random_search(const SearchSpace& space, std::size_t budget,
                                        const std::string& objective, const Corpus& corpus,
                                        std::uint64_t seed);

/// Applies one sampled value to a named TrainConfig field.
void set_config_field(TrainConfig& cfg, const std::string& name, double value);

}  // namespace lvae
