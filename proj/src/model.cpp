#include "lvae/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "lvae/errors.hpp"

namespace lvae {

SequenceVae::SequenceVae(ModelDims dims, Rng& rng, double init_scale) : dims_(dims) {
  if (dims_.vocab_size < 4 || dims_.d_emb < 1 || dims_.d_h < 1 || dims_.d_z < 1)
    throw Error(ErrorCode::ConfigInvalid, "model dimensions must be positive and V >= 4");
  const int V = dims_.vocab_size, E = dims_.d_emb, H = dims_.d_h, Z = dims_.d_z;

  gen_.embedding = params_.add("gen.embedding", V, E);
  gen_.cell = add_gru("gen.gru", E);
  gen_.latent_w = params_.add("gen.latent.w", H, Z);
  gen_.latent_b = params_.add("gen.latent.b", H, 1);
  gen_.out_w = params_.add("gen.out.w", V, H);
  gen_.out_b = params_.add("gen.out.b", V, 1);

  if (dims_.use_encoder) {
    enc_.embedding = dims_.shared_embeddings ? gen_.embedding : params_.add("enc.embedding", V, E);
    enc_.forward = add_gru("enc.fwd", E);
    enc_.backward = add_gru("enc.bwd", E);
    enc_.mu_w = params_.add("enc.mu.w", Z, 2 * H);
    enc_.mu_b = params_.add("enc.mu.b", Z, 1);
    enc_.log_sigma_w = params_.add("enc.log_sigma.w", Z, 2 * H);
    enc_.log_sigma_b = params_.add("enc.log_sigma.b", Z, 1);
  }

  legal_.assign(static_cast<std::size_t>(V), 1);
  legal_[Vocabulary::kBos] = 0;
  legal_[Vocabulary::kPad] = 0;
  initialize(rng, init_scale);
}

GruWeights SequenceVae::add_gru(const std::string& prefix, int d_in) {
  const int H = dims_.d_h;
  GruWeights g{};
  g.w_update = params_.add(prefix + ".w_update", H, d_in);
  g.w_reset = params_.add(prefix + ".w_reset", H, d_in);
  g.w_cand = params_.add(prefix + ".w_cand", H, d_in);
  g.u_update = params_.add(prefix + ".u_update", H, H);
  g.u_reset = params_.add(prefix + ".u_reset", H, H);
  g.u_cand = params_.add(prefix + ".u_cand", H, H);
  g.b_update = params_.add(prefix + ".b_update", H, 1);
  g.b_reset = params_.add(prefix + ".b_reset", H, 1);
  g.b_cand = params_.add(prefix + ".b_cand", H, 1);
  return g;
}

void SequenceVae::initialize(Rng& rng, double init_scale) {
  for (auto& p : params_) {
    const bool embedding = p.name.ends_with("embedding");
    if (embedding) {
      for (double& v : p.value) v = init_scale * rng.normal();
    } else {
      const double fan_in = p.cols > 1 ? p.cols : dims_.d_h;
      const double bound = init_scale / std::sqrt(fan_in);
      for (double& v : p.value) v = bound * (2.0 * rng.uniform() - 1.0);
    }
  }
}

namespace {

ad::Var gru_cell(ad::Tape& tape, const GruWeights& w, ad::Var x, ad::Var h) {
  auto gate = [&](int wi, int ui, int bi) {
    return tape.add(tape.affine(tape.parameter(wi), x, tape.parameter(bi)),
                    tape.matvec(tape.parameter(ui), h));
  };
  ad::Var update = tape.sigmoid(gate(w.w_update, w.u_update, w.b_update));
  ad::Var reset = tape.sigmoid(gate(w.w_reset, w.u_reset, w.b_reset));
  ad::Var cand = tape.tanh(
      tape.add(tape.affine(tape.parameter(w.w_cand), x, tape.parameter(w.b_cand)),
               tape.mul(reset, tape.matvec(tape.parameter(w.u_cand), h))));
  // h' = (1 - u) * n + u * h
  return tape.add(cand, tape.mul(update, tape.sub(h, cand)));
}

ad::Var zeros(ad::Tape& tape, int n) {
  return tape.constant(std::vector<double>(static_cast<std::size_t>(n), 0.0), n);
}

}  // namespace

PosteriorVars encode(ad::Tape& tape, const SequenceVae& model, std::span<const TokenId> x) {
  if (x.empty()) throw Error(ErrorCode::EmptySequence, "cannot encode an empty sequence");
  const auto& enc = model.encoder();
  if (enc.embedding < 0) throw Error(ErrorCode::ConfigInvalid, "model has no encoder");
  const int H = model.dims().d_h;
  ad::Var emb = tape.parameter(enc.embedding);
  ad::Var fwd = zeros(tape, H);
  for (TokenId t : x) fwd = gru_cell(tape, enc.forward, tape.row(emb, t), fwd);
  ad::Var bwd = zeros(tape, H);
  for (auto it = x.rbegin(); it != x.rend(); ++it)
    bwd = gru_cell(tape, enc.backward, tape.row(emb, *it), bwd);
  ad::Var features = tape.concat(fwd, bwd);
  return {tape.affine(tape.parameter(enc.mu_w), features, tape.parameter(enc.mu_b)),
          tape.affine(tape.parameter(enc.log_sigma_w), features, tape.parameter(enc.log_sigma_b))};
}

ad::Var reparameterize(ad::Tape& tape, const PosteriorVars& post, std::span<const double> eps) {
  return tape.add(post.mu, tape.mul_const(tape.exp(post.log_sigma), eps));
}

ad::Var gaussian_kl(ad::Tape& tape, const PosteriorVars& post) {
  // 0.5 * sum(sigma^2 + mu^2 - 1 - 2 log sigma)
  const int d = tape.rows(post.mu);
  ad::Var var = tape.exp(tape.scale(post.log_sigma, 2.0));
  ad::Var inner = tape.sub(tape.add(var, tape.mul(post.mu, post.mu)), tape.scale(post.log_sigma, 2.0));
  return tape.scale(tape.add_const(tape.sum(inner), -static_cast<double>(d)), 0.5);
}

ad::Var init_state(ad::Tape& tape, const SequenceVae& model, ad::Var z) {
  const auto& gen = model.generator();
  return tape.tanh(tape.affine(tape.parameter(gen.latent_w), z, tape.parameter(gen.latent_b)));
}

StepVars step(ad::Tape& tape, const SequenceVae& model, ad::Var state, TokenId token_in) {
  const auto& gen = model.generator();
  ad::Var x = tape.row(tape.parameter(gen.embedding), token_in);
  ad::Var h = gru_cell(tape, gen.cell, x, state);
  return {h, tape.affine(tape.parameter(gen.out_w), h, tape.parameter(gen.out_b))};
}

ad::Var next_log_probs(ad::Tape& tape, const SequenceVae& model, ad::Var logits,
                       std::size_t prefix_len) {
  const int max_len = model.dims().max_len;
  if (max_len > 0 && prefix_len >= static_cast<std::size_t>(max_len)) {
    std::vector<double> forced(static_cast<std::size_t>(model.dims().vocab_size),
                               -std::numeric_limits<double>::infinity());
    forced[Vocabulary::kEos] = 0.0;
    return tape.constant(std::move(forced), model.dims().vocab_size);
  }
  return tape.log_softmax(logits, model.legal_mask());
}

ad::Var sequence_nll(ad::Tape& tape, const SequenceVae& model, std::span<const TokenId> x,
                     ad::Var z) {
  ad::Var h = init_state(tape, model, z);
  TokenId prev = Vocabulary::kBos;
  ad::Var total = tape.scalar(0.0);
  for (std::size_t t = 0; t <= x.size(); ++t) {
    const TokenId target = t < x.size() ? x[t] : Vocabulary::kEos;
    StepVars s = step(tape, model, h, prev);
    ad::Var logp = next_log_probs(tape, model, s.logits, t);
    total = tape.sub(total, tape.pick(logp, target));
    h = s.state;
    prev = target;
  }
  return total;
}

GaussianPosterior encode(const SequenceVae& model, std::span<const TokenId> x) {
  ad::Tape tape(&model.params(), nullptr, false);
  auto post = encode(tape, model, x);
  return {tape.value(post.mu), tape.value(post.log_sigma)};
}

std::vector<double> reparameterize(const GaussianPosterior& post, std::span<const double> eps) {
  std::vector<double> z(post.mu.size());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = post.mu[i] + std::exp(post.log_sigma[i]) * eps[i];
  return z;
}

double gaussian_kl(const GaussianPosterior& post) {
  double s = 0.0;
  for (std::size_t i = 0; i < post.mu.size(); ++i) {
    const double ls = post.log_sigma[i];
    s += std::exp(2.0 * ls) + post.mu[i] * post.mu[i] - 1.0 - 2.0 * ls;
  }
  return 0.5 * s;
}

double gaussian_log_density(const GaussianPosterior& post, std::span<const double> z) {
  constexpr double kLog2Pi = 1.8378770664093454836;
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double d = (z[i] - post.mu[i]) * std::exp(-post.log_sigma[i]);
    s += -0.5 * (kLog2Pi + d * d) - post.log_sigma[i];
  }
  return s;
}

double standard_normal_log_density(std::span<const double> z) {
  constexpr double kLog2Pi = 1.8378770664093454836;
  double s = 0.0;
  for (double v : z) s += -0.5 * (kLog2Pi + v * v);
  return s;
}

double sequence_nll(const SequenceVae& model, std::span<const TokenId> x,
                    std::span<const double> z) {
  ad::Tape tape(&model.params(), nullptr, false);
  return tape.scalar_value(sequence_nll(tape, model, x, tape.constant(z)));
}

DecodeResult decode(const SequenceVae& model, std::span<const double> z, DecodeMode mode,
                    Rng* rng, int length_cap) {
  if (length_cap < 1) throw Error(ErrorCode::ConfigInvalid, "length cap must be >= 1");
  ad::Tape tape(&model.params(), nullptr, false);
  DecodeResult out;
  ad::Var h = init_state(tape, model, tape.constant(z));
  TokenId prev = Vocabulary::kBos;
  while (true) {
    StepVars s = step(tape, model, h, prev);
    const auto& logp = tape.value(next_log_probs(tape, model, s.logits, out.tokens.size()));
    std::vector<double> probs(logp.size());
    for (std::size_t i = 0; i < logp.size(); ++i) probs[i] = std::exp(logp[i]);
    TokenId next;
    if (mode == DecodeMode::Greedy) {
      next = static_cast<TokenId>(std::max_element(logp.begin(), logp.end()) - logp.begin());
    } else {
      next = static_cast<TokenId>(rng->categorical(probs));
    }
    out.step_probs.push_back(std::move(probs));
    if (next == Vocabulary::kEos) {
      out.terminated = true;
      break;
    }
    out.tokens.push_back(next);
    if (static_cast<int>(out.tokens.size()) >= length_cap) break;
    h = s.state;
    prev = next;
  }
  return out;
}

McEstimate mean_and_stderr(std::span<const double> xs) {
  McEstimate e;
  if (xs.empty()) return e;
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  e.value = mean;
  if (xs.size() > 1) e.std_error = std::sqrt(var / static_cast<double>(xs.size() - 1) /
                                           static_cast<double>(xs.size()));
  return e;
}

McEstimate entropy_upper_bound(const SequenceVae& model, std::size_t n_samples, Rng& rng,
                               int length_cap) {
  const auto dz = static_cast<std::size_t>(model.dims().d_z);
  std::vector<double> values;
  values.reserve(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    const auto z = rng.normals(dz);
    const auto x = decode(model, z, DecodeMode::Sample, &rng, length_cap).tokens;
    const auto z_prime = rng.normals(dz);
    values.push_back(sequence_nll(model, x, z_prime));
  }
  return mean_and_stderr(values);
}

}  // namespace lvae
