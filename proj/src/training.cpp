#include "lvae/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "lvae/edit_distance.hpp"
#include "lvae/errors.hpp"
#include "lvae/evaluation.hpp"

namespace lvae {

std::string to_string(Method m) {
  switch (m) {
    case Method::Lm: return "lm";
    case Method::Vae: return "vae";
    case Method::BetaVae: return "beta_vae";
    case Method::CyclicVae: return "cyclic_vae";
    case Method::LevVae: return "lev_vae";
    case Method::LevAe: return "lev_ae";
  }
  return "lev_vae";
}

Method method_from_string(const std::string& name) {
  for (Method m : {Method::Lm, Method::Vae, Method::BetaVae, Method::CyclicVae, Method::LevVae,
                   Method::LevAe})
    if (to_string(m) == name) return m;
  throw Error(ErrorCode::ConfigInvalid, "unknown method '" + name + "'");
}

void validate(const TrainConfig& cfg) {
  auto fail = [](const std::string& msg) { return Error(ErrorCode::ConfigInvalid, msg); };
  for (double w : {cfg.lambda, cfg.alpha, cfg.tau, cfg.beta, cfg.oracle_temperature, cfg.clip_norm})
    if (!(w >= 0.0) || !std::isfinite(w)) throw fail("weights, temperature and clip norm must be finite and >= 0");
  if (cfg.M < 1) throw fail("cycle period M must be >= 1");
  if (cfg.d_z < 1 || cfg.d_h < 1 || cfg.d_emb < 1) throw fail("model dimensions must be >= 1");
  if (!(cfg.lr > 0.0)) throw fail("learning rate must be positive");
  if (cfg.batch_size < 1) throw fail("batch size must be >= 1");
  if (cfg.epochs < 0) throw fail("epochs must be >= 0");
  if (cfg.monitor_size < 1) throw fail("monitor size must be >= 1");
  switch (cfg.method) {
    case Method::LevVae:
      if (cfg.lambda == 0.0 && cfg.alpha == 0.0 && cfg.tau == 0.0) throw fail("lev_vae weights cannot all be zero");
      break;
    case Method::LevAe:
      if (cfg.tau != 0.0) throw fail("lev_ae requires tau = 0");
      if (!(cfg.lambda > 0.0)) throw fail("lev_ae requires lambda > 0");
      break;
    default:
      break;
  }
  if (cfg.control == ControlPolicy::Mixture && (cfg.method == Method::LevVae || cfg.method == Method::LevAe) &&
      !(cfg.lambda > 0.0 && cfg.alpha > 0.0))
    throw fail("mixture control needs lambda > 0 and alpha > 0");
}

SurrogateWeights method_weights(const TrainConfig& cfg, long epoch) {
  switch (cfg.method) {
    case Method::Lm: return {0.0, 1.0, 0.0};
    case Method::Vae: return {0.0, 1.0, 1.0};
    case Method::BetaVae: return {0.0, 1.0, cfg.beta};
    case Method::CyclicVae: return {0.0, 1.0, cyclical_beta(epoch, cfg.M)};
    case Method::LevVae: return {cfg.lambda, cfg.alpha, cfg.tau};
    case Method::LevAe: return {cfg.lambda, cfg.alpha, 0.0};
  }
  return {};
}

bool in_validation_split(const TokenSequence& x) {
  std::uint64_t h = 1469598103934665603ULL;
  for (TokenId t : x) {
    for (int b = 0; b < 4; ++b) {
      h ^= static_cast<std::uint64_t>((static_cast<std::uint32_t>(t) >> (8 * b)) & 0xFF);
      h *= 1099511628211ULL;
    }
  }
  return h % 10 == 0;
}

std::vector<double> posterior_mean(const SequenceVae& model, const TokenSequence& x) {
  if (!model.dims().use_encoder) return std::vector<double>(static_cast<std::size_t>(model.dims().d_z), 0.0);
  return encode(model, x).mu;
}

double monitor_lev_d(const SequenceVae& model, const std::vector<TokenSequence>& data, int length_cap) {
  return reconstruction_lev_d(data, reconstruct(model, data, length_cap)).normalized;
}

namespace {

LossGraph example_loss(ad::Tape& tape, const SequenceVae& model, const TokenSequence& x,
                       Method method, const SurrogateWeights& w, const DistillOptions& opts,
                       Rng& rng) {
  const auto dz = static_cast<std::size_t>(model.dims().d_z);
  switch (method) {
    case Method::Lm: {
      LossGraph g;
      const ad::Var nll = sequence_nll(tape, model, x, tape.constant(std::vector<double>(dz, 0.0)));
      g.total = nll;
      g.values.teacher_nll = g.values.total = tape.scalar_value(nll);
      return g;
    }
    case Method::Vae:
    case Method::BetaVae:
    case Method::CyclicVae: {
      const auto eps = rng.normals(dz);
      return elbo_loss(tape, model, x, eps, w.tau);
    }
    case Method::LevVae: {
      const auto eps = rng.normals(dz);
      return surrogate_loss(tape, model, x, eps, w, opts, &rng);
    }
    case Method::LevAe:
      return autoencoder_surrogate_loss(tape, model, x, w, opts, &rng);
  }
  throw Error(ErrorCode::ConfigInvalid, "unknown method");
}

void clip_gradients(ad::GradientStore& grads, double max_norm) {
  if (max_norm <= 0.0) return;
  double sq = 0.0;
  for (std::size_t i = 0; i < grads.size(); ++i)
    for (double g : grads[static_cast<int>(i)]) sq += g * g;
  const double norm = std::sqrt(sq);
  if (std::isfinite(norm) && norm > max_norm) grads.scale(max_norm / norm);
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const Corpus& corpus, const TrainCallbacks& callbacks) {
  validate(cfg);
  if (corpus.sequences.empty()) throw Error(ErrorCode::EmptyCorpus, "cannot train on an empty corpus");
  for (const auto& x : corpus.sequences)
    if (x.empty()) throw Error(ErrorCode::EmptySequence, "corpus contains an empty sequence");

  TrainResult result;
  for (std::size_t i = 0; i < corpus.sequences.size(); ++i)
    (in_validation_split(corpus.sequences[i]) ? result.valid_indices : result.train_indices).push_back(i);
  if (result.train_indices.empty()) std::swap(result.train_indices, result.valid_indices);

  std::size_t longest = 0;
  for (std::size_t i : result.train_indices) longest = std::max(longest, corpus.sequences[i].size());
  const int length_cap = 2 * static_cast<int>(longest) + 2;

  Rng rng(cfg.seed);
  ModelDims dims;
  dims.vocab_size = static_cast<int>(corpus.vocab.size());
  dims.d_emb = cfg.d_emb;
  dims.d_h = cfg.d_h;
  dims.d_z = cfg.d_z;
  dims.shared_embeddings = cfg.shared_embeddings;
  dims.use_encoder = cfg.method != Method::Lm;
  Checkpoint& ckpt = result.checkpoint;
  ckpt.config = cfg;
  ckpt.vocab = corpus.vocab;
  ckpt.model = SequenceVae(dims, rng);
  SequenceVae& model = ckpt.model;

  ad::AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  ad::Adam adam(model.params(), adam_cfg);
  ad::GradientStore grads(model.params());

  DistillOptions opts;
  opts.control.kind = cfg.control;
  opts.oracle_temperature = cfg.oracle_temperature;
  opts.length_cap = length_cap;

  std::vector<TokenSequence> monitor;
  for (std::size_t i = 0; i < result.train_indices.size() && monitor.size() < static_cast<std::size_t>(cfg.monitor_size); ++i)
    monitor.push_back(corpus.sequences[result.train_indices[i]]);

  std::vector<std::size_t> order = result.train_indices;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const SurrogateWeights w = method_weights(cfg, epoch);
    rng.shuffle(order);
    EpochMetrics m;
    m.epoch = epoch + 1;
    m.has_kl = dims.use_encoder;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t b1 = std::min(order.size(), b0 + static_cast<std::size_t>(cfg.batch_size));
      const double inv = 1.0 / static_cast<double>(b1 - b0);
      grads.zero();
      for (std::size_t k = b0; k < b1; ++k) {
        const std::size_t index = order[k];
        ad::Tape tape(&model.params(), &grads);
        LossGraph g = example_loss(tape, model, corpus.sequences[index], cfg.method, w, opts, rng);
        if (!std::isfinite(g.values.total))
          throw Error(ErrorCode::NonFiniteLoss, "non-finite loss at example " + std::to_string(index) +
                                                    " in epoch " + std::to_string(epoch + 1));
        tape.backward(tape.scale(g.total, inv));
        m.total += g.values.total;
        m.distill += g.values.distill;
        m.teacher_nll += g.values.teacher_nll;
        m.kl += g.values.kl;
        if (callbacks.on_example) callbacks.on_example(epoch + 1, index, g.values);
      }
      clip_gradients(grads, cfg.clip_norm);
      adam.step(model.params(), grads);
    }
    const double n = static_cast<double>(std::max<std::size_t>(1, order.size()));
    m.total /= n;
    m.distill /= n;
    m.teacher_nll /= n;
    m.kl /= n;
    m.lev_d = monitor_lev_d(model, monitor, length_cap);
    m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.metrics.push_back(m);
    ckpt.epoch = epoch + 1;
    if (callbacks.on_epoch) callbacks.on_epoch(m);
  }
  ckpt.rng_state = rng.state();
  return result;
}

std::string metrics_csv(const std::vector<EpochMetrics>& metrics, bool include_time) {
  std::ostringstream os;
  os << "epoch,total,distill,teacher_nll,kl,lev_d,seconds\n";
  os << std::setprecision(17);
  for (const auto& m : metrics) {
    os << m.epoch << ',' << m.total << ',' << m.distill << ',' << m.teacher_nll << ',';
    if (m.has_kl) os << m.kl;
    os << ',' << m.lev_d << ',' << (include_time ? m.seconds : 0.0) << '\n';
  }
  return os.str();
}

void set_config_field(TrainConfig& cfg, const std::string& name, double value) {
  auto as_int = [&] { return static_cast<int>(std::lround(value)); };
  if (name == "lambda") cfg.lambda = value;
  else if (name == "alpha") cfg.alpha = value;
  else if (name == "tau") cfg.tau = value;
  else if (name == "beta") cfg.beta = value;
  else if (name == "lr") cfg.lr = value;
  else if (name == "oracle_temperature") cfg.oracle_temperature = value;
  else if (name == "clip_norm") cfg.clip_norm = value;
  else if (name == "M") cfg.M = as_int();
  else if (name == "d_z") cfg.d_z = as_int();
  else if (name == "d_h") cfg.d_h = as_int();
  else if (name == "d_emb") cfg.d_emb = as_int();
  else if (name == "batch_size") cfg.batch_size = as_int();
  else if (name == "epochs") cfg.epochs = as_int();
  else throw Error(ErrorCode::ConfigInvalid, "'" + name + "' is not a searchable field");
}

namespace {

double validation_score(const TrainResult& r, const Corpus& corpus, const std::string& objective) {
  const auto& idx = r.valid_indices.empty() ? r.train_indices : r.valid_indices;
  std::vector<TokenSequence> data;
  for (std::size_t i : idx) data.push_back(corpus.sequences[i]);
  const SequenceVae& model = r.checkpoint.model;
  std::size_t longest = 0;
  for (const auto& x : data) longest = std::max(longest, x.size());
  const int cap = 2 * static_cast<int>(longest) + 2;
  if (objective == "lev_d") return monitor_lev_d(model, data, cap);
  EvalOptions eo;
  eo.is_samples = 0;
  eo.seed = r.checkpoint.config.seed;
  if (objective == "neg_elbo") return evaluate(model, data, eo).neg_elbo;
  if (objective == "total") {
    const auto& cfg = r.checkpoint.config;
    const SurrogateWeights w = method_weights(cfg, std::max(0, cfg.epochs - 1));
    DistillOptions opts;
    opts.control.kind = cfg.control;
    opts.oracle_temperature = cfg.oracle_temperature;
    opts.length_cap = cap;
    Rng rng(cfg.seed);
    double total = 0.0;
    for (const auto& x : data) {
      ad::Tape tape(&model.params(), nullptr, false);
      total += example_loss(tape, model, x, cfg.method, w, opts, rng).values.total;
    }
    return total / static_cast<double>(data.size());
  }
  throw Error(ErrorCode::ConfigInvalid, "unknown search objective '" + objective + "'");
}

}  // namespace

std::vector<SearchResult> random_search(const SearchSpace& space, std::size_t budget,
                                        const std::string& objective, const Corpus& corpus,
                                        std::uint64_t seed) {
  if (budget < 1) throw Error(ErrorCode::ConfigInvalid, "search budget must be >= 1");
  if (objective != "lev_d" && objective != "neg_elbo" && objective != "total")
    throw Error(ErrorCode::ConfigInvalid, "unknown search objective '" + objective + "'");
  std::vector<SearchResult> results;
  for (std::size_t i = 0; i < budget; ++i) {
    Rng rng(seed + 0x9E3779B97F4A7C15ULL * (i + 1));
    TrainConfig cfg = space.base;
    for (const auto& [name, range] : space.ranges) {
      double v = 0.0;
      switch (range.kind) {
        case SearchRange::Kind::LogUniform:
          v = std::exp(std::log(range.lo) + rng.uniform() * (std::log(range.hi) - std::log(range.lo)));
          break;
        case SearchRange::Kind::Uniform:
          v = range.lo + rng.uniform() * (range.hi - range.lo);
          break;
        case SearchRange::Kind::IntUniform: {
          const auto lo = static_cast<long>(std::ceil(range.lo));
          const auto hi = static_cast<long>(std::floor(range.hi));
          v = static_cast<double>(lo + static_cast<long>(rng.uniform_index(static_cast<std::size_t>(hi - lo + 1))));
          break;
        }
      }
      set_config_field(cfg, name, v);
    }
    const auto run = train(cfg, corpus);
    results.push_back({cfg, validation_score(run, corpus, objective)});
  }
  std::stable_sort(results.begin(), results.end(),
                   [](const SearchResult& a, const SearchResult& b) { return a.score < b.score; });
  return results;
}

}  // namespace lvae
