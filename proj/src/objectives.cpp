#include "lvae/objectives.hpp"

#include <algorithm>
#include <cmath>

#include "lvae/edit_distance.hpp"
#include "lvae/errors.hpp"
#include "lvae/oc_oracle.hpp"

namespace lvae {

std::string to_string(ControlPolicy kind) {
  switch (kind) {
    case ControlPolicy::Teacher: return "teacher";
    case ControlPolicy::ModelSample: return "model_sample";
    case ControlPolicy::GreedyArgmax: return "greedy_argmax";
    case ControlPolicy::Mixture: return "mixture";
  }
  return "greedy_argmax";
}

ControlPolicy control_policy_from_string(const std::string& name) {
  if (name == "teacher") return ControlPolicy::Teacher;
  if (name == "model_sample") return ControlPolicy::ModelSample;
  if (name == "greedy_argmax") return ControlPolicy::GreedyArgmax;
  if (name == "mixture") return ControlPolicy::Mixture;
  throw Error(ErrorCode::ConfigInvalid, "unknown control policy '" + name + "'");
}

LossGraph elbo_loss(ad::Tape& tape, const SequenceVae& model, std::span<const TokenId> x,
                    std::span<const double> eps, double beta) {
  const PosteriorVars post = encode(tape, model, x);
  const ad::Var z = reparameterize(tape, post, eps);
  const ad::Var nll = sequence_nll(tape, model, x, z);
  const ad::Var kl = gaussian_kl(tape, post);
  LossGraph g;
  g.total = tape.add(nll, tape.scale(kl, beta));
  g.values.teacher_nll = tape.scalar_value(nll);
  g.values.kl = tape.scalar_value(kl);
  g.values.total = tape.scalar_value(g.total);
  return g;
}

double cyclical_beta(long epoch, long period) {
  if (period <= 0) throw Error(ErrorCode::ConfigInvalid, "cycle period must be positive");
  const double phase = static_cast<double>(epoch % period) / static_cast<double>(period);
  return std::min(1.0, 2.0 * phase);
}

DistillGraph distillation_term(ad::Tape& tape, const SequenceVae& model, ad::Var z,
                               std::span<const TokenId> reference, const DistillOptions& options,
                               Rng* rng) {
  const std::size_t V = static_cast<std::size_t>(model.dims().vocab_size);
  const int cap = options.length_cap > 0 ? options.length_cap
                                         : 2 * static_cast<int>(reference.size()) + 2;
  DistillGraph out;
  ad::Var total = tape.scalar(0.0);
  ad::Var h = init_state(tape, model, z);
  TokenId prev = Vocabulary::kBos;
  std::vector<int> row = levenshtein_row({}, reference);

  const Trajectory* replay = options.fixed_trajectory;
  Trajectory teacher;
  if (!replay && options.control.kind == ControlPolicy::Teacher) {
    teacher.tokens.assign(reference.begin(), reference.end());
    teacher.terminated = true;
    replay = &teacher;
  }

  for (std::size_t t = 0;; ++t) {
    if (replay && t == replay->tokens.size() && !replay->terminated) break;
    const StepVars s = step(tape, model, h, prev);
    const ad::Var logp = next_log_probs(tape, model, s.logits, t);
    const auto& lp = tape.value(logp);

    const OCQueryResult oracle = oc_policy_from_row(row, reference, V, options.oracle_temperature);
    double neg_entropy = 0.0;
    for (double p : oracle.pi)
      if (p > 0.0) neg_entropy += p * std::log(p);
    // KL(pi || p) = sum pi log pi - sum pi log p
    total = tape.add(total, tape.add_const(tape.scale(tape.dot_const(logp, oracle.pi), -1.0),
                                           neg_entropy));

    TokenId next;
    if (replay) {
      next = t < replay->tokens.size() ? replay->tokens[t] : Vocabulary::kEos;
    } else if (options.control.kind == ControlPolicy::ModelSample) {
      std::vector<double> probs(lp.size());
      for (std::size_t i = 0; i < lp.size(); ++i) probs[i] = std::exp(lp[i]);
      next = static_cast<TokenId>(rng->categorical(probs));
    } else {
      next = static_cast<TokenId>(std::max_element(lp.begin(), lp.end()) - lp.begin());
    }
    if (next == Vocabulary::kEos) {
      out.trajectory.terminated = true;
      break;
    }
    out.trajectory.tokens.push_back(next);
    if (!replay && static_cast<int>(out.trajectory.tokens.size()) >= cap) break;
    row = levenshtein_row_extend(row, next, reference);
    h = s.state;
    prev = next;
  }
  out.value = total;
  return out;
}

namespace {

LossGraph combine(ad::Tape& tape, const SequenceVae& model, std::span<const TokenId> x, ad::Var z,
                  const ad::Var* kl, const SurrogateWeights& w, const DistillOptions& options,
                  Rng* rng) {
  LossGraph g;
  ad::Var total;
  bool have_total = false;
  auto accumulate = [&](ad::Var term, double weight) {
    const ad::Var scaled = tape.scale(term, weight);
    total = have_total ? tape.add(total, scaled) : scaled;
    have_total = true;
  };
  if (w.lambda != 0.0) {
    DistillGraph d = distillation_term(tape, model, z, x, options, rng);
    g.values.distill = tape.scalar_value(d.value);
    g.values.control_trajectory = std::move(d.trajectory);
    accumulate(d.value, w.lambda);
  }
  const ad::Var nll = sequence_nll(tape, model, x, z);
  g.values.teacher_nll = tape.scalar_value(nll);
  if (w.alpha != 0.0 || !have_total) accumulate(nll, w.alpha);
  if (kl) {
    g.values.kl = tape.scalar_value(*kl);
    accumulate(*kl, w.tau);
  }
  g.total = total;
  g.values.total = tape.scalar_value(total);
  return g;
}

void check_weights(const SurrogateWeights& w) {
  if (w.lambda < 0.0 || w.alpha < 0.0 || w.tau < 0.0)
    throw Error(ErrorCode::ConfigInvalid, "surrogate weights must be nonnegative");
  if (w.lambda == 0.0 && w.alpha == 0.0 && w.tau == 0.0)
    throw Error(ErrorCode::ConfigInvalid, "surrogate weights cannot all be zero");
}

}  // namespace

LossGraph surrogate_loss(ad::Tape& tape, const SequenceVae& model, std::span<const TokenId> x,
                         std::span<const double> eps, const SurrogateWeights& weights,
                         const DistillOptions& options, Rng* rng) {
  check_weights(weights);
  const PosteriorVars post = encode(tape, model, x);
  const ad::Var z = reparameterize(tape, post, eps);
  // Node order and arithmetic match elbo_loss when lambda == 0 and alpha == 1,
  // so the two agree bitwise in values and gradients.
  LossGraph g;
  ad::Var total;
  bool have_total = false;
  auto accumulate = [&](ad::Var term) {
    total = have_total ? tape.add(total, term) : term;
    have_total = true;
  };
  if (weights.lambda != 0.0) {
    DistillGraph d = distillation_term(tape, model, z, x, options, rng);
    g.values.distill = tape.scalar_value(d.value);
    g.values.control_trajectory = std::move(d.trajectory);
    accumulate(tape.scale(d.value, weights.lambda));
  }
  const ad::Var nll = sequence_nll(tape, model, x, z);
  g.values.teacher_nll = tape.scalar_value(nll);
  if (weights.alpha != 0.0) accumulate(weights.alpha == 1.0 ? nll : tape.scale(nll, weights.alpha));
  const ad::Var kl = gaussian_kl(tape, post);
  g.values.kl = tape.scalar_value(kl);
  if (weights.tau != 0.0 || !have_total) accumulate(tape.scale(kl, weights.tau));
  g.total = total;
  g.values.total = tape.scalar_value(total);
  return g;
}

LossGraph autoencoder_surrogate_loss(ad::Tape& tape, const SequenceVae& model,
                                     std::span<const TokenId> x, const SurrogateWeights& weights,
                                     const DistillOptions& options, Rng* rng) {
  if (weights.lambda <= 0.0 && weights.alpha <= 0.0)
    throw Error(ErrorCode::ConfigInvalid, "autoencoder needs lambda > 0 or alpha > 0");
  const PosteriorVars post = encode(tape, model, x);
  return combine(tape, model, x, post.mu, nullptr, weights, options, rng);
}

LossBreakdown elbo_loss(const SequenceVae& model, std::span<const TokenId> x,
                        std::span<const double> eps, double beta) {
  ad::Tape tape(&model.params(), nullptr, false);
  return elbo_loss(tape, model, x, eps, beta).values;
}

LossBreakdown surrogate_loss(const SequenceVae& model, std::span<const TokenId> x,
                             std::span<const double> eps, const SurrogateWeights& weights,
                             const DistillOptions& options, Rng* rng) {
  ad::Tape tape(&model.params(), nullptr, false);
  return surrogate_loss(tape, model, x, eps, weights, options, rng).values;
}

ApproxBoundTerms approx_bound_loss(const SequenceVae& model, std::span<const TokenId> x_k,
                                   std::span<const double> eps, double tau, int n_inner,
                                   Rng& rng, int length_cap) {
  if (!(tau > 0.0)) throw Error(ErrorCode::ConfigInvalid, "approximate bound needs tau > 0");
  if (n_inner < 1) throw Error(ErrorCode::ConfigInvalid, "n_inner must be >= 1");
  const GaussianPosterior post = encode(model, x_k);
  const auto z = reparameterize(post, eps);
  const int cap = length_cap > 0 ? length_cap : 2 * static_cast<int>(x_k.size()) + 2;
  std::vector<double> dists;
  for (int i = 0; i < n_inner; ++i) {
    const auto x = decode(model, z, DecodeMode::Sample, &rng, cap).tokens;
    dists.push_back(static_cast<double>(levenshtein(x, x_k)) / tau);
  }
  const auto recon = mean_and_stderr(dists);
  ApproxBoundTerms out;
  out.reconstruction = recon.value;
  out.reconstruction_std_error = recon.std_error;
  out.kl = gaussian_kl(post);
  out.total = out.reconstruction + out.kl;
  return out;
}

}  // namespace lvae
