#pragma once

#include <span>
#include <string>

#include "lvae/autodiff.hpp"
#include "lvae/model.hpp"
#include "lvae/random.hpp"

namespace lvae {

enum class ControlPolicy { Teacher, ModelSample, GreedyArgmax, Mixture };

std::string to_string(ControlPolicy kind);
ControlPolicy control_policy_from_string(const std::string& name);

/// The distribution generating the trajectories along which the oracle is
/// distilled. Mixture rolls out greedily; the teacher half of the mixture is
/// the alpha-weighted likelihood term of the surrogate loss.
struct ControlPolicySpec {
  ControlPolicy kind = ControlPolicy::GreedyArgmax;
};

struct Trajectory {
  TokenSequence tokens;
  bool terminated = false;  // EOS was emitted (its step is part of the sum)
};

/// Per-example loss values. distill, teacher_nll and kl are unweighted; total
/// is lambda*distill + alpha*teacher_nll + tau*kl.
struct LossBreakdown {
  double distill = 0.0;
  double teacher_nll = 0.0;
  double kl = 0.0;
  double total = 0.0;
  Trajectory control_trajectory;
};

struct SurrogateWeights {
  double lambda = 1.0;
  double alpha = 1.0;
  double tau = 1.0;
};

/// Differentiable loss graph on a tape plus its values.
struct LossGraph {
  ad::Var total;
  LossBreakdown values;
};

/// Single-sample reparameterized negative ELBO: nll(x | z) + beta * KL.
LossGraph elbo_loss(ad::Tape& tape, const SequenceVae& model, std::span<const TokenId> x,
                    std::span<const double> eps, double beta);

/// Linear ramp over the first half of each M-epoch cycle, then 1.
double cyclical_beta(long epoch, long period);

struct DistillOptions {
  ControlPolicySpec control{};
  double oracle_temperature = 0.0;
  int length_cap = 0;  // 0: 2 * |reference| + 2
  /// Replays this trajectory instead of rolling one out (gradient checks).
  const Trajectory* fixed_trajectory = nullptr;
};

struct DistillGraph {
  ad::Var value;
  Trajectory trajectory;
};

/// Sum over visited prefixes of KL(pi_OC(.|prefix, reference) || p(.|prefix, z)),
/// restricted to legal actions. The trajectory is not differentiated through.
DistillGraph distillation_term(ad::Tape& tape, const SequenceVae& model, ad::Var z,
                               std::span<const TokenId> reference, const DistillOptions& options,
                               Rng* rng);

/// lambda * distill + alpha * teacher NLL + tau * KL, with one reparameterized z
/// shared by both reconstruction terms. The distillation rollout is skipped
/// entirely when lambda == 0.
LossGraph surrogate_loss(ad::Tape& tape, const SequenceVae& model, std::span<const TokenId> x,
                         std::span<const double> eps, const SurrogateWeights& weights,
                         const DistillOptions& options, Rng* rng);

/// Same as above for a non-variational autoencoder: z = mu, no KL term.
LossGraph autoencoder_surrogate_loss(ad::Tape& tape, const SequenceVae& model,
                                     std::span<const TokenId> x, const SurrogateWeights& weights,
                                     const DistillOptions& options, Rng* rng);

// Value-level conveniences.
LossBreakdown elbo_loss(const SequenceVae& model, std::span<const TokenId> x,
                        std::span<const double> eps, double beta);
LossBreakdown surrogate_loss(const SequenceVae& model, std::span<const TokenId> x,
                             std::span<const double> eps, const SurrogateWeights& weights,
                             const DistillOptions& options, Rng* rng);

/// Monitoring estimate of the approximate bound's per-example terms:
/// E_{x~p(x|z)}[D_edit(x, x_k)] / tau (n_inner samples) and KL(q(z|x_k) || p(z)).
struct ApproxBoundTerms {
  double reconstruction = 0.0;
  double reconstruction_std_error = 0.0;
  double kl = 0.0;
  double total = 0.0;
};

ApproxBoundTerms approx_bound_loss(const SequenceVae& model, std::span<const TokenId> x_k,
                                   std::span<const double> eps, double tau, int n_inner,
                                   Rng& rng, int length_cap = 0);

}  // namespace lvae
