#include "lvae/kde_bounds.hpp"

#include <cmath>
#include <limits>

#include "lvae/autodiff.hpp"
#include "lvae/edit_distance.hpp"
#include "lvae/errors.hpp"

namespace lvae {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void validate(const KdeConfig& cfg) {
  if (!(cfg.tau > 0.0)) throw Error(ErrorCode::ConfigInvalid, "kernel bandwidth must be positive");
  if (cfg.dataset.empty()) throw Error(ErrorCode::EmptyCorpus, "KDE needs a nonempty dataset");
  if (cfg.content_size < 1) throw Error(ErrorCode::ConfigInvalid, "empty content alphabet");
  if (cfg.distance == DistanceKind::Levenshtein && cfg.content_size >= 2 &&
      cfg.tau >= 1.0 / std::log(static_cast<double>(cfg.content_size)))
    throw Error(ErrorCode::DivergentKernel,
                "partition function diverges for tau >= 1/ln(V) = " +
                    std::to_string(1.0 / std::log(static_cast<double>(cfg.content_size))));
}

std::uint64_t count_sequences(std::size_t V, int length, std::uint64_t budget) {
  std::uint64_t total = 0, layer = 1;
  for (int l = 0; l <= length; ++l) {
    total += layer;
    if (total > budget)
      throw Error(ErrorCode::EnumerationTooLarge,
                  "more than " + std::to_string(budget) + " sequences to enumerate");
    layer *= V;
  }
  return total;
}

// Depth-first walk over all content sequences of length <= max_len, keeping
// one Levenshtein row per reference.
class RowWalker {
 public:
  RowWalker(const std::vector<TokenSequence>& refs, std::size_t content, int max_len)
      : refs_(refs), content_(content), max_len_(max_len) {}

  template <class Visit>
  void run(Visit&& visit) {
    std::vector<std::vector<int>> rows;
    for (const auto& r : refs_) rows.push_back(levenshtein_row({}, r));
    TokenSequence prefix;
    walk(prefix, rows, visit);
  }

 private:
  template <class Visit>
  void walk(TokenSequence& prefix, const std::vector<std::vector<int>>& rows, Visit& visit) {
    visit(prefix, rows);
    if (static_cast<int>(prefix.size()) == max_len_) return;
    std::vector<std::vector<int>> next(rows.size());
    for (std::size_t a = 0; a < content_; ++a) {
      const TokenId t = Vocabulary::kFirstContent + static_cast<TokenId>(a);
      for (std::size_t k = 0; k < rows.size(); ++k)
        next[k] = levenshtein_row_extend(rows[k], t, refs_[k]);
      prefix.push_back(t);
      walk(prefix, next, visit);
      prefix.pop_back();
    }
  }

  const std::vector<TokenSequence>& refs_;
  std::size_t content_;
  int max_len_;
};

// sum_{|x| <= length} exp(-d(x, x_k)/tau) for every dataset element.
std::vector<double> enumerated_sums(const KdeConfig& cfg, int length) {
  const std::size_t n = cfg.dataset.size();
  std::vector<double> sums(n, 0.0);
  if (cfg.distance == DistanceKind::Hamming) {
    // Only equal-length sequences are at finite distance.
    const double per = 1.0 + static_cast<double>(cfg.content_size - 1) * std::exp(-1.0 / cfg.tau);
    for (std::size_t k = 0; k < n; ++k)
      if (static_cast<int>(cfg.dataset[k].size()) <= length)
        sums[k] = std::pow(per, static_cast<double>(cfg.dataset[k].size()));
    return sums;
  }
  count_sequences(cfg.content_size, length, cfg.enumeration_budget);
  RowWalker walker(cfg.dataset, cfg.content_size, length);
  walker.run([&](const TokenSequence&, const std::vector<std::vector<int>>& rows) {
    for (std::size_t k = 0; k < n; ++k) sums[k] += std::exp(-rows[k].back() / cfg.tau);
  });
  return sums;
}

}  // namespace

double kde_distance(std::span<const TokenId> a, std::span<const TokenId> b, DistanceKind kind) {
  if (kind == DistanceKind::Hamming) {
    if (a.size() != b.size()) return kInf;
    return hamming(a, b);
  }
  return levenshtein(a, b);
}

double kde_tail_bound(std::size_t reference_length, int length, const KdeConfig& cfg) {
  if (cfg.distance == DistanceKind::Hamming)
    return static_cast<int>(reference_length) <= length ? 0.0 : kInf;
  // d(x, x_k) >= |x| - |x_k|, and there are V^L sequences of length L.
  const double log_r = std::log(static_cast<double>(cfg.content_size)) - 1.0 / cfg.tau;
  if (log_r >= 0.0) return kInf;
  return std::exp(static_cast<double>(reference_length) / cfg.tau + (length + 1) * log_r -
                  std::log1p(-std::exp(log_r)));
}

std::vector<Partition> partition_functions(const KdeConfig& cfg) {
  validate(cfg);
  const auto sums = enumerated_sums(cfg, cfg.l_max);
  std::vector<Partition> out(cfg.dataset.size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k].z = sums[k];
    out[k].tail_bound = kde_tail_bound(cfg.dataset[k].size(), cfg.l_max, cfg);
    if (out[k].tail_bound > cfg.tail_tolerance)
      throw Error(ErrorCode::TailTooLarge,
                  "partition tail bound " + std::to_string(out[k].tail_bound) +
                      " exceeds tolerance; increase the enumeration length");
  }
  return out;
}

Partition partition_function_exact(std::span<const TokenId> x_k, const KdeConfig& cfg) {
  KdeConfig single = cfg;
  single.dataset = {TokenSequence(x_k.begin(), x_k.end())};
  return partition_functions(single).front();
}

double kde_log_prob(std::span<const TokenId> x, const KdeConfig& cfg,
                    std::span<const Partition> partitions) {
  std::vector<double> terms;
  terms.reserve(cfg.dataset.size());
  for (std::size_t k = 0; k < cfg.dataset.size(); ++k) {
    const double d = kde_distance(x, cfg.dataset[k], cfg.distance);
    if (d == kInf) continue;
    terms.push_back(-d / cfg.tau - std::log(partitions[k].z));
  }
  if (terms.empty()) return -kInf;
  return log_sum_exp(terms) - std::log(static_cast<double>(cfg.dataset.size()));
}

NormalizationReport kde_normalization(const KdeConfig& cfg, std::span<const Partition> partitions,
                                      int eval_length) {
  validate(cfg);
  const auto sums = enumerated_sums(cfg, eval_length);
  NormalizationReport r;
  const double n = static_cast<double>(cfg.dataset.size());
  for (std::size_t k = 0; k < sums.size(); ++k) {
    r.mass += sums[k] / partitions[k].z / n;
    r.tail += kde_tail_bound(cfg.dataset[k].size(), eval_length, cfg) / partitions[k].z / n;
  }
  r.sequences = cfg.distance == DistanceKind::Hamming
                    ? 0
                    : count_sequences(cfg.content_size, eval_length,
                                      std::numeric_limits<std::uint64_t>::max());
  return r;
}

// --- sequence distributions -----------------------------------------------

MarginalTable SequenceDistribution::enumerate(int max_len) const {
  MarginalTable table;
  double mass = 0.0;
  TokenSequence prefix;
  const std::size_t V = content_size();
  auto visit = [&](auto&& self) -> void {
    const double lp = log_prob(prefix);
    if (lp > -kInf) {
      table.log_prob.emplace(prefix, lp);
      mass += std::exp(lp);
    }
    if (static_cast<int>(prefix.size()) == max_len) return;
    for (std::size_t a = 0; a < V; ++a) {
      prefix.push_back(Vocabulary::kFirstContent + static_cast<TokenId>(a));
      self(self);
      prefix.pop_back();
    }
  };
  visit(visit);
  table.truncated_mass = 1.0 - mass;
  return table;
}

LatentSequenceModel::LatentSequenceModel(const SequenceVae& model, int length_cap,
                                         int nodes_per_dim)
    : model_(model), length_cap_(length_cap), nodes_(nodes_per_dim) {
  if (length_cap < 1) throw Error(ErrorCode::ConfigInvalid, "length cap must be >= 1");
}

TokenSequence LatentSequenceModel::sample(Rng& rng) const {
  const auto z = rng.normals(static_cast<std::size_t>(model_.dims().d_z));
  return sample_given(z, rng);
}

TokenSequence LatentSequenceModel::sample_given(std::span<const double> z, Rng& rng) const {
  return decode(model_, z, DecodeMode::Sample, &rng, length_cap_).tokens;
}

double LatentSequenceModel::log_prob(std::span<const TokenId> x) const {
  TokenSequence key(x.begin(), x.end());
  if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  const double lp = quadrature_log_marginal(model_, x, nodes_);
  cache_.emplace(std::move(key), lp);
  return lp;
}

std::size_t LatentSequenceModel::content_size() const {
  return static_cast<std::size_t>(model_.dims().vocab_size) - Vocabulary::kFirstContent;
}

MarginalTable LatentSequenceModel::enumerate(int max_len) const {
  auto table = quadrature_marginal(model_, max_len, nodes_);
  for (const auto& [x, lp] : table.log_prob) cache_.emplace(x, lp);
  return table;
}

PositionwiseModel::PositionwiseModel(std::vector<std::vector<double>> probs)
    : probs_(std::move(probs)) {
  if (probs_.empty()) throw Error(ErrorCode::ConfigInvalid, "positionwise model needs a length");
  for (const auto& p : probs_)
    if (p.size() != probs_.front().size())
      throw Error(ErrorCode::ShapeMismatch, "positionwise rows must share the vocabulary size");
}

TokenSequence PositionwiseModel::sample(Rng& rng) const {
  TokenSequence x;
  for (const auto& p : probs_) x.push_back(static_cast<TokenId>(rng.categorical(p)));
  return x;
}

double PositionwiseModel::log_prob(std::span<const TokenId> x) const {
  if (x.size() != probs_.size()) return -kInf;
  double lp = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) lp += std::log(probs_[i][static_cast<std::size_t>(x[i])]);
  return lp;
}

std::size_t PositionwiseModel::content_size() const {
  return probs_.front().size() - Vocabulary::kFirstContent;
}

// --- bounds ----------------------------------------------------------------

ExactKl exact_kde_kl(const SequenceDistribution& model, const KdeConfig& cfg,
                     std::span<const Partition> partitions, int support_length) {
  const auto table = model.enumerate(support_length);
  ExactKl out;
  for (const auto& [x, lp] : table.log_prob)
    out.value += std::exp(lp) * (lp - kde_log_prob(x, cfg, partitions));
  out.truncated_mass = table.truncated_mass;
  return out;
}

namespace {

double mean_log_partition(std::span<const Partition> partitions) {
  double s = 0.0;
  for (const auto& p : partitions) s += std::log(p.z);
  return s / static_cast<double>(partitions.size());
}

}  // namespace

BoundReport naive_bound(const SequenceDistribution& model, const KdeConfig& cfg,
                        std::span<const Partition> partitions, std::size_t n_samples, Rng& rng) {
  if (n_samples < 1) throw Error(ErrorCode::ConfigInvalid, "need at least one sample");
  const double n_data = static_cast<double>(cfg.dataset.size());
  std::vector<double> recon(n_samples), negent(n_samples), combined(n_samples);
  for (std::size_t s = 0; s < n_samples; ++s) {
    const auto x = model.sample(rng);
    double d = 0.0;
    for (const auto& xk : cfg.dataset) d += kde_distance(x, xk, cfg.distance);
    recon[s] = d / (cfg.tau * n_data);
    negent[s] = model.log_prob(x);
    combined[s] = recon[s] + negent[s];
  }
  BoundReport r;
  const auto rc = mean_and_stderr(recon), ne = mean_and_stderr(negent), cb = mean_and_stderr(combined);
  r.reconstruction = rc.value;
  r.neg_entropy = ne.value;
  r.includes_log_partition = !partitions.empty();
  r.log_partition_term = partitions.empty() ? 0.0 : mean_log_partition(partitions);
  r.total = r.reconstruction + r.neg_entropy + r.log_partition_term;
  r.std_error = cb.std_error;
  r.term_std_errors = {{"reconstruction", rc.std_error}, {"neg_entropy", ne.std_error}};
  return r;
}

std::vector<std::vector<double>> naive_bound_marginal_optimum(
    const std::vector<TokenSequence>& dataset, double tau, std::size_t content_size) {
  if (dataset.empty()) throw Error(ErrorCode::EmptyCorpus, "empty dataset");
  if (!(tau > 0.0)) throw Error(ErrorCode::ConfigInvalid, "tau must be positive");
  const std::size_t n = dataset.front().size();
  for (const auto& x : dataset)
    if (x.size() != n) throw Error(ErrorCode::UnequalLength, "dataset lengths differ");
  const double scale = tau * static_cast<double>(dataset.size());
  std::vector<std::vector<double>> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> count(content_size, 0.0);
    for (const auto& x : dataset) count[static_cast<std::size_t>(x[i] - Vocabulary::kFirstContent)] += 1.0;
    // c_i(v) = |D| - count; exp(-c/scale) up to a constant is exp(count/scale)
    const double top = *std::max_element(count.begin(), count.end());
    std::vector<double> row(content_size + Vocabulary::kFirstContent, 0.0);
    double total = 0.0;
    for (std::size_t v = 0; v < content_size; ++v) {
      row[v + Vocabulary::kFirstContent] = std::exp((count[v] - top) / scale);
      total += row[v + Vocabulary::kFirstContent];
    }
    for (double& p : row) p /= total;
    out[i] = std::move(row);
  }
  return out;
}

TabularFit fit_naive_hamming_model(const std::vector<TokenSequence>& dataset, double tau,
                                   std::size_t content_size, int steps, double learning_rate,
                                   std::uint64_t seed) {
  naive_bound_marginal_optimum(dataset, tau, content_size);  // validates the dataset
  const std::size_t n = dataset.front().size();
  const std::size_t V = content_size;
  const double scale = tau * static_cast<double>(dataset.size());

  // Every prefix shorter than n gets its own logit vector.
  ad::ParameterSet params;
  std::map<TokenSequence, int> index;
  std::vector<TokenSequence> frontier{{}};
  for (std::size_t len = 0; len < n; ++len) {
    std::vector<TokenSequence> next;
    for (const auto& p : frontier) {
      index[p] = params.add("logits", static_cast<int>(V), 1);
      for (std::size_t a = 0; a < V; ++a) {
        auto q = p;
        q.push_back(Vocabulary::kFirstContent + static_cast<TokenId>(a));
        next.push_back(std::move(q));
      }
    }
    frontier = std::move(next);
  }
  // frontier now holds every full-length sequence
  std::vector<double> reward(frontier.size());
  for (std::size_t s = 0; s < frontier.size(); ++s) {
    double d = 0.0;
    for (const auto& xk : dataset) d += hamming(frontier[s], xk);
    reward[s] = d / scale;
  }

  Rng rng(seed);
  for (auto& p : params)
    for (double& v : p.value) v = rng.normal();
  const std::vector<std::uint8_t> legal(V, 1);
  ad::Adam adam(params, ad::AdamConfig{learning_rate});
  ad::GradientStore grads(params);

  TabularFit fit;
  for (int it = 0; it < steps; ++it) {
    grads.zero();
    ad::Tape tape(&params, &grads);
    std::map<int, ad::Var> log_probs;
    auto conditional = [&](int p) {
      auto found = log_probs.find(p);
      if (found != log_probs.end()) return found->second;
      return log_probs[p] = tape.log_softmax(tape.parameter(p), legal);
    };
    ad::Var objective = tape.scalar(0.0);
    for (std::size_t s = 0; s < frontier.size(); ++s) {
      const auto& x = frontier[s];
      ad::Var lp = tape.scalar(0.0);
      TokenSequence prefix;
      for (std::size_t i = 0; i < n; ++i) {
        lp = tape.add(lp, tape.pick(conditional(index.at(prefix)), x[i] - Vocabulary::kFirstContent));
        prefix.push_back(x[i]);
      }
      // p(x) * (reward(x) + log p(x))
      objective = tape.add(objective, tape.mul(tape.exp(lp), tape.add_const(lp, reward[s])));
    }
    fit.objective = tape.scalar_value(objective);
    tape.backward(objective);
    adam.step(params, grads);
    fit.steps = it + 1;
  }

  for (const auto& [prefix, p] : index) {
    const auto& logits = params[p].value;
    const double top = *std::max_element(logits.begin(), logits.end());
    std::vector<double> row(V + Vocabulary::kFirstContent, 0.0);
    double total = 0.0;
    for (std::size_t a = 0; a < V; ++a) total += row[a + Vocabulary::kFirstContent] = std::exp(logits[a] - top);
    for (double& v : row) v /= total;
    fit.conditionals[prefix] = std::move(row);
  }
  return fit;
}

double aggregated_posterior_log_density(std::span<const GaussianPosterior> posteriors,
                                        std::span<const double> z) {
  std::vector<double> terms(posteriors.size());
  for (std::size_t i = 0; i < posteriors.size(); ++i)
    terms[i] = gaussian_log_density(posteriors[i], z);
  return log_sum_exp(terms) - std::log(static_cast<double>(posteriors.size()));
}

McEstimate aggregated_posterior_kl(std::span<const GaussianPosterior> posteriors,
                                   std::size_t n_samples, Rng& rng) {
  if (posteriors.empty()) throw Error(ErrorCode::EmptyCorpus, "no posteriors");
  std::vector<double> values(n_samples);
  for (auto& v : values) {
    const auto& post = posteriors[rng.uniform_index(posteriors.size())];
    const auto z = reparameterize(post, rng.normals(post.mu.size()));
    v = aggregated_posterior_log_density(posteriors, z) - standard_normal_log_density(z);
  }
  return mean_and_stderr(values);
}

BoundReport tight_bound(const LatentSequenceModel& model, const KdeConfig& cfg,
                        std::span<const Partition> partitions, const TightBoundOptions& options,
                        Rng& rng) {
  if (options.n_outer < 2 || options.n_agg < 2 || options.n_entropy < 2)
    throw Error(ErrorCode::ConfigInvalid, "tight bound needs at least two samples per estimator");
  const SequenceVae& vae = model.model();
  const std::size_t n_data = cfg.dataset.size();
  const auto dz = static_cast<std::size_t>(vae.dims().d_z);
  std::vector<GaussianPosterior> posteriors;
  posteriors.reserve(n_data);
  for (const auto& x : cfg.dataset) posteriors.push_back(encode(vae, x));

  BoundReport r;
  double var_inner = 0.0;
  std::vector<double> rec_all, post_all, part_all;
  for (std::size_t k = 0; k < n_data; ++k) {
    const double log_z = std::log(partitions[k].z);
    std::vector<double> combined(options.n_outer);
    for (std::size_t s = 0; s < options.n_outer; ++s) {
      const auto z = reparameterize(posteriors[k], rng.normals(dz));
      const double log_q_k = gaussian_log_density(posteriors[k], z);
      const double w = std::exp(standard_normal_log_density(z) -
                                aggregated_posterior_log_density(posteriors, z));
      const auto x = model.sample_given(z, rng);
      const double rec = w * kde_distance(x, cfg.dataset[k], cfg.distance) / cfg.tau;
      rec_all.push_back(rec);
      post_all.push_back(w * log_q_k);
      part_all.push_back(w * log_z);
      combined[s] = rec + w * log_q_k + w * log_z;
    }
    const auto e = mean_and_stderr(combined);
    var_inner += e.std_error * e.std_error;
  }
  r.reconstruction = mean_and_stderr(rec_all).value;
  r.posterior_term = mean_and_stderr(post_all).value;
  r.log_partition_term = mean_and_stderr(part_all).value;
  const double se_inner = std::sqrt(var_inner) / static_cast<double>(n_data);

  std::vector<double> agg(options.n_agg);
  for (auto& v : agg) v = -aggregated_posterior_log_density(posteriors, rng.normals(dz));
  const auto ae = mean_and_stderr(agg);
  r.aggregate_term = ae.value;

  std::vector<double> ent(options.n_entropy);
  for (auto& v : ent) v = model.log_prob(model.sample(rng));
  const auto ee = mean_and_stderr(ent);
  r.neg_entropy = ee.value;

  r.total = r.reconstruction + r.posterior_term + r.aggregate_term + r.log_partition_term +
            r.neg_entropy;
  r.std_error = std::sqrt(se_inner * se_inner + ae.std_error * ae.std_error +
                          ee.std_error * ee.std_error);
  r.term_std_errors = {{"per_example", se_inner}, {"aggregate", ae.std_error},
                       {"neg_entropy", ee.std_error}};
  return r;
}

RewardGrid reward_grid_demo(std::span<const std::array<double, 2>> points, double tau,
                            const GridSpec& grid) {
  if (points.empty()) throw Error(ErrorCode::EmptyCorpus, "no points");
  if (!(tau > 0.0)) throw Error(ErrorCode::ConfigInvalid, "tau must be positive");
  if (grid.resolution < 2) throw Error(ErrorCode::ConfigInvalid, "grid resolution must be >= 2");
  RewardGrid out;
  out.resolution = grid.resolution;
  const double dx = (grid.x_max - grid.x_min) / (grid.resolution - 1);
  const double dy = (grid.y_max - grid.y_min) / (grid.resolution - 1);
  std::vector<double> terms(points.size());
  for (int j = 0; j < grid.resolution; ++j) {
    for (int i = 0; i < grid.resolution; ++i) {
      const double x = grid.x_min + i * dx, y = grid.y_min + j * dy;
      double b = 0.0;
      for (std::size_t k = 0; k < points.size(); ++k) {
        const double d = (x - points[k][0]) * (x - points[k][0]) + (y - points[k][1]) * (y - points[k][1]);
        terms[k] = -d / tau;
        b -= d / tau;
      }
      out.cells.push_back({x, y, log_sum_exp(terms), b});
    }
  }
  return out;
}

}  // namespace lvae
