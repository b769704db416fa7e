#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lvae/autodiff.hpp"
#include "lvae/random.hpp"
#include "lvae/vocabulary.hpp"

namespace lvae {

struct ModelDims {
  int vocab_size = 0;
  int d_emb = 32;
  int d_h = 64;
  int d_z = 16;
  bool shared_embeddings = false;
  bool use_encoder = true;
  /// When > 0, EOS is forced once a prefix reaches this length, so the
  /// generator's support is exactly the sequences of length <= max_len.
  int max_len = 0;
};

/// Parameter indices of one gated recurrent cell.
struct GruWeights {
  int w_update, w_reset, w_cand;  // input -> hidden
  int u_update, u_reset, u_cand;  // hidden -> hidden
  int b_update, b_reset, b_cand;
};

struct GeneratorParameters {
  int embedding = -1;
  GruWeights cell{};
  int latent_w = -1, latent_b = -1;  // z -> initial hidden state
  int out_w = -1, out_b = -1;        // hidden -> logits over the vocabulary
};

struct EncoderParameters {
  int embedding = -1;  // equals the generator's when embeddings are shared
  GruWeights forward{}, backward{};
  int mu_w = -1, mu_b = -1;
  int log_sigma_w = -1, log_sigma_b = -1;
};

/// Recurrent Gaussian encoder q(z|x) and recurrent autoregressive generator
/// p(x_t | x_<t, z) sharing one parameter set.
class SequenceVae {
 public:
  SequenceVae() = default;
  SequenceVae(ModelDims dims, Rng& rng, double init_scale = 1.0);

  /// Re-draws every parameter. Recurrent and projection weights are uniform in
  /// +-init_scale/sqrt(fan_in); embeddings are N(0, init_scale^2 * 0.01).
  void initialize(Rng& rng, double init_scale = 1.0);

  const ModelDims& dims() const { return dims_; }
  ad::ParameterSet& params() { return params_; }
  const ad::ParameterSet& params() const { return params_; }
  const GeneratorParameters& generator() const { return gen_; }
  const EncoderParameters& encoder() const { return enc_; }
  std::span<const std::uint8_t> legal_mask() const { return legal_; }

  static constexpr const char* kCellType = "gru";

 private:
  GruWeights add_gru(const std::string& prefix, int d_in);

  ModelDims dims_;
  ad::ParameterSet params_;
  GeneratorParameters gen_;
  EncoderParameters enc_;
  std::vector<std::uint8_t> legal_;
};

// --- Differentiable (tape-level) interface -------------------------------

struct PosteriorVars {
  ad::Var mu;
  ad::Var log_sigma;
};

struct StepVars {
  ad::Var state;
  ad::Var logits;
};

/// Throws EmptySequence for an empty input.
PosteriorVars encode(ad::Tape& tape, const SequenceVae& model, std::span<const TokenId> x);
/// z = mu + exp(log_sigma) * eps
ad::Var reparameterize(ad::Tape& tape, const PosteriorVars& post, std::span<const double> eps);
/// KL(N(mu, sigma^2) || N(0, I)) summed over dimensions.
ad::Var gaussian_kl(ad::Tape& tape, const PosteriorVars& post);
ad::Var init_state(ad::Tape& tape, const SequenceVae& model, ad::Var z);
/// One recurrent transition consuming `token_in`; logits are unmasked.
StepVars step(ad::Tape& tape, const SequenceVae& model, ad::Var state, TokenId token_in);
/// Log-distribution over the vocabulary for the next token after a prefix of
/// length `prefix_len` (BOS/PAD at -inf; EOS forced at max_len).
ad::Var next_log_probs(ad::Tape& tape, const SequenceVae& model, ad::Var logits,
                       std::size_t prefix_len);
/// -sum_{t=1}^{|x|+1} log p(x_t | x_<t, z), teacher forced, EOS step included.
ad::Var sequence_nll(ad::Tape& tape, const SequenceVae& model, std::span<const TokenId> x,
                     ad::Var z);

// --- Value-level interface ------------------------------------------------

struct GaussianPosterior {
  std::vector<double> mu;
  std::vector<double> log_sigma;
};

GaussianPosterior encode(const SequenceVae& model, std::span<const TokenId> x);
std::vector<double> reparameterize(const GaussianPosterior& post, std::span<const double> eps);
double gaussian_kl(const GaussianPosterior& post);
/// log N(z; mu, diag(sigma^2))
double gaussian_log_density(const GaussianPosterior& post, std::span<const double> z);
double standard_normal_log_density(std::span<const double> z);
double sequence_nll(const SequenceVae& model, std::span<const TokenId> x,
                    std::span<const double> z);

enum class DecodeMode { Greedy, Sample };

struct DecodeResult {
  TokenSequence tokens;
  /// Next-token distribution at every visited prefix, including the final step.
  std::vector<std::vector<double>> step_probs;
  bool terminated = false;  // EOS emitted before the cap
};

/// Greedy picks the argmax (lowest id on ties); Sample draws from each step's
/// distribution. Stops at EOS or after `length_cap` tokens.
DecodeResult decode(const SequenceVae& model, std::span<const double> z, DecodeMode mode,
                    Rng* rng, int length_cap);

struct McEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// E_{x~p(x)} E_{z'~p(z)} [-log p(x|z')], an upper bound on the generator's
/// marginal entropy H(p(x)).
McEstimate entropy_upper_bound(const SequenceVae& model, std::size_t n_samples, Rng& rng,
                               int length_cap);

/// Mean and standard error of a sample.
McEstimate mean_and_stderr(std::span<const double> xs);

}  // namespace lvae
