#include "lvae/evaluation.hpp"

#include <gsl/gsl_blas.h>
#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>

#include "lvae/edit_distance.hpp"
#include "lvae/errors.hpp"
#include "lvae/quadrature.hpp"

namespace lvae {

namespace {

std::vector<double> mean_code(const SequenceVae& model, const TokenSequence& x) {
  if (!model.dims().use_encoder) return std::vector<double>(static_cast<std::size_t>(model.dims().d_z), 0.0);
  return encode(model, x).mu;
}

int default_cap(const std::vector<TokenSequence>& data) {
  std::size_t longest = 0;
  for (const auto& x : data) longest = std::max(longest, x.size());
  return 2 * static_cast<int>(longest) + 2;
}

}  // namespace

std::vector<TokenSequence> reconstruct(const SequenceVae& model,
                                       const std::vector<TokenSequence>& data, int length_cap) {
  std::vector<TokenSequence> out;
  out.reserve(data.size());
  for (const auto& x : data)
    out.push_back(decode(model, mean_code(model, x), DecodeMode::Greedy, nullptr, length_cap).tokens);
  return out;
}

LevDistance reconstruction_lev_d(const std::vector<TokenSequence>& data,
                                 const std::vector<TokenSequence>& reconstructions) {
  if (data.size() != reconstructions.size())
    throw Error(ErrorCode::ShapeMismatch, "one reconstruction per sequence expected");
  LevDistance r;
  if (data.empty()) return r;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double d = levenshtein(data[i], reconstructions[i]);
    r.raw += d;
    r.normalized += d / static_cast<double>(std::max<std::size_t>(1, data[i].size()));
  }
  r.raw /= static_cast<double>(data.size());
  r.normalized /= static_cast<double>(data.size());
  return r;
}

IsEstimate importance_sampled_ll(const SequenceVae& model, std::span<const TokenId> x,
                                 std::size_t n_samples, Rng& rng) {
  if (n_samples < 1) throw Error(ErrorCode::ConfigInvalid, "need at least one importance sample");
  const auto dz = static_cast<std::size_t>(model.dims().d_z);
  if (!model.dims().use_encoder)
    return {sequence_nll(model, x, std::vector<double>(dz, 0.0)), 0.0};
  const auto post = encode(model, x);
  std::vector<double> log_w(n_samples);
  for (auto& lw : log_w) {
    const auto z = reparameterize(post, rng.normals(dz));
    lw = standard_normal_log_density(z) - sequence_nll(model, x, z) - gaussian_log_density(post, z);
  }
  IsEstimate e;
  const double n = static_cast<double>(n_samples);
  e.nll = -(log_sum_exp(log_w) - std::log(n));
  if (n_samples > 1) {
    const double top = *std::max_element(log_w.begin(), log_w.end());
    double mean = 0.0, sq = 0.0;
    for (double lw : log_w) mean += std::exp(lw - top);
    mean /= n;
    for (double lw : log_w) sq += std::pow(std::exp(lw - top) - mean, 2);
    const double sd = std::sqrt(sq / (n - 1.0));
    e.std_error = sd / (std::sqrt(n) * mean);
  }
  return e;
}

EvalReport evaluate(const SequenceVae& model, const std::vector<TokenSequence>& data,
                    const EvalOptions& options) {
  EvalReport r;
  r.sequences = data.size();
  if (data.empty()) return r;
  Rng rng(options.seed);
  const int cap = options.length_cap > 0 ? options.length_cap : default_cap(data);
  const auto dz = static_cast<std::size_t>(model.dims().d_z);
  double is_var = 0.0;
  for (const auto& x : data) {
    r.tokens += x.size() + 1;
    if (model.dims().use_encoder) {
      const auto post = encode(model, x);
      r.recon_nll += sequence_nll(model, x, reparameterize(post, rng.normals(dz)));
      r.kl += gaussian_kl(post);
    } else {
      r.recon_nll += sequence_nll(model, x, std::vector<double>(dz, 0.0));
    }
    if (options.is_samples > 0) {
      const auto is = importance_sampled_ll(model, x, options.is_samples, rng);
      r.nll_is += is.nll;
      is_var += is.std_error * is.std_error;
    }
  }
  const double n = static_cast<double>(data.size());
  const double total_nll = options.is_samples > 0 ? r.nll_is : r.recon_nll + r.kl;
  r.ppl = std::exp(total_nll / static_cast<double>(r.tokens));
  r.recon_nll /= n;
  r.kl /= n;
  r.neg_elbo = r.recon_nll + r.kl;
  r.has_is = options.is_samples > 0;
  r.nll_is /= n;
  r.nll_is_std_error = std::sqrt(is_var) / n;
  const auto lev = reconstruction_lev_d(data, reconstruct(model, data, cap));
  r.lev_d = lev.normalized;
  r.lev_raw = lev.raw;
  return r;
}

std::vector<PositionAccuracy> positionwise_accuracy(const std::vector<TokenSequence>& data,
                                                    const std::vector<TokenSequence>& reconstructions) {
  if (data.size() != reconstructions.size())
    throw Error(ErrorCode::ShapeMismatch, "one reconstruction per sequence expected");
  std::size_t longest = 0;
  for (const auto& x : data) longest = std::max(longest, x.size());
  std::vector<PositionAccuracy> out(longest);
  for (std::size_t i = 0; i < longest; ++i) out[i].position = i;
  for (std::size_t k = 0; k < data.size(); ++k) {
    const auto& x = data[k];
    const auto& r = reconstructions[k];
    for (std::size_t i = 0; i < x.size(); ++i) {
      out[i].count++;
      if (std::find(r.begin(), r.end(), x[i]) != r.end()) out[i].accuracy += 1.0;
      if (i < r.size() && r[i] == x[i]) out[i].aligned += 1.0;
    }
  }
  for (auto& p : out) {
    if (p.count == 0) continue;
    p.accuracy /= static_cast<double>(p.count);
    p.aligned /= static_cast<double>(p.count);
  }
  return out;
}

FeatureRows single_features(const SequenceVae& model, const std::vector<TokenSequence>& data) {
  FeatureRows rows;
  rows.reserve(data.size());
  for (const auto& x : data) rows.push_back(mean_code(model, x));
  return rows;
}

std::vector<double> paired_features(std::span<const double> mu_a, std::span<const double> mu_b) {
  if (mu_a.size() != mu_b.size()) throw Error(ErrorCode::ShapeMismatch, "paired codes differ in size");
  const std::size_t d = mu_a.size();
  std::vector<double> f(4 * d);
  for (std::size_t i = 0; i < d; ++i) {
    f[i] = mu_a[i];
    f[d + i] = mu_b[i];
    f[2 * d + i] = mu_a[i] - mu_b[i];
    f[3 * d + i] = mu_a[i] * mu_b[i];
  }
  return f;
}

namespace {

struct ProbeProblem {
  const FeatureRows* rows;
  std::vector<std::size_t> target;  // class index per row
  std::size_t classes, dim;
  double l2;
};

// Mean cross-entropy plus the weight penalty; gradient optional.
double probe_objective(const ProbeProblem& p, const double* theta, double* grad) {
  const std::size_t C = p.classes, D = p.dim;
  const double* W = theta;
  const double* b = theta + C * D;
  const double n = static_cast<double>(p.rows->size());
  if (grad) std::fill(grad, grad + C * D + C, 0.0);
  double f = 0.0;
  std::vector<double> logits(C);
  for (std::size_t r = 0; r < p.rows->size(); ++r) {
    const auto& x = (*p.rows)[r];
    for (std::size_t c = 0; c < C; ++c) {
      double s = b[c];
      for (std::size_t j = 0; j < D; ++j) s += W[c * D + j] * x[j];
      logits[c] = s;
    }
    const double lse = log_sum_exp(logits);
    f += (lse - logits[p.target[r]]) / n;
    if (!grad) continue;
    for (std::size_t c = 0; c < C; ++c) {
      const double g = (std::exp(logits[c] - lse) - (c == p.target[r] ? 1.0 : 0.0)) / n;
      for (std::size_t j = 0; j < D; ++j) grad[c * D + j] += g * x[j];
      grad[C * D + c] += g;
    }
  }
  for (std::size_t i = 0; i < C * D; ++i) {
    f += 0.5 * p.l2 * W[i] * W[i];
    if (grad) grad[i] += p.l2 * W[i];
  }
  return f;
}

double gsl_f(const gsl_vector* v, void* params) {
  return probe_objective(*static_cast<ProbeProblem*>(params), v->data, nullptr);
}
void gsl_df(const gsl_vector* v, void* params, gsl_vector* g) {
  probe_objective(*static_cast<ProbeProblem*>(params), v->data, g->data);
}
void gsl_fdf(const gsl_vector* v, void* params, double* f, gsl_vector* g) {
  *f = probe_objective(*static_cast<ProbeProblem*>(params), v->data, g->data);
}

}  // namespace

LinearProbe train_linear_probe(const FeatureRows& rows, const std::vector<int>& labels,
                               const ProbeConfig& cfg) {
  if (rows.size() != labels.size() || rows.empty())
    throw Error(ErrorCode::ShapeMismatch, "probe needs one label per nonempty feature row");
  LinearProbe probe;
  probe.classes = labels;
  std::sort(probe.classes.begin(), probe.classes.end());
  probe.classes.erase(std::unique(probe.classes.begin(), probe.classes.end()), probe.classes.end());
  if (probe.classes.size() < 2)
    throw Error(ErrorCode::DegenerateLabels, "probe needs at least two classes");
  probe.dim = rows.front().size();
  for (const auto& r : rows)
    if (r.size() != probe.dim) throw Error(ErrorCode::ShapeMismatch, "ragged feature rows");

  ProbeProblem problem{&rows, {}, probe.classes.size(), probe.dim, cfg.l2};
  for (int l : labels)
    problem.target.push_back(static_cast<std::size_t>(
        std::lower_bound(probe.classes.begin(), probe.classes.end(), l) - probe.classes.begin()));

  const std::size_t n_params = problem.classes * problem.dim + problem.classes;
  gsl_set_error_handler_off();
  gsl_multimin_function_fdf fn{&gsl_f, &gsl_df, &gsl_fdf, n_params, &problem};
  std::unique_ptr<gsl_vector, decltype(&gsl_vector_free)> x0(gsl_vector_calloc(n_params), &gsl_vector_free);
  std::unique_ptr<gsl_multimin_fdfminimizer, decltype(&gsl_multimin_fdfminimizer_free)> solver(
      gsl_multimin_fdfminimizer_alloc(gsl_multimin_fdfminimizer_vector_bfgs2, n_params),
      &gsl_multimin_fdfminimizer_free);
  gsl_multimin_fdfminimizer_set(solver.get(), &fn, x0.get(), 0.1, 0.1);
  int it = 0;
  for (; it < cfg.max_iterations; ++it) {
    if (gsl_multimin_test_gradient(solver->gradient, cfg.tolerance) == GSL_SUCCESS) break;
    // GSL_ENOPROG: no further decrease is representable; the point is a minimum to precision.
    if (gsl_multimin_fdfminimizer_iterate(solver.get()) != GSL_SUCCESS) break;
  }
  probe.iterations = it;
  probe.gradient_norm = gsl_blas_dnrm2(solver->gradient);
  const double* theta = solver->x->data;
  probe.weights.assign(theta, theta + problem.classes * problem.dim);
  probe.bias.assign(theta + problem.classes * problem.dim, theta + n_params);
  return probe;
}

int probe_predict(const LinearProbe& probe, std::span<const double> row) {
  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < probe.classes.size(); ++c) {
    double s = probe.bias[c];
    for (std::size_t j = 0; j < probe.dim; ++j) s += probe.weights[c * probe.dim + j] * row[j];
    if (s > best_score) {
      best_score = s;
      best = c;
    }
  }
  return probe.classes[best];
}

double probe_accuracy(const LinearProbe& probe, const FeatureRows& rows,
                      const std::vector<int>& labels) {
  if (rows.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) hits += probe_predict(probe, rows[i]) == labels[i];
  return static_cast<double>(hits) / static_cast<double>(rows.size());
}

std::vector<CurvePoint> semi_supervised_curve(const FeatureRows& train_rows,
                                              const std::vector<int>& train_labels,
                                              const FeatureRows& test_rows,
                                              const std::vector<int>& test_labels,
                                              const std::vector<double>& fractions,
                                              const ProbeConfig& cfg, int repeats,
                                              std::uint64_t seed) {
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < train_labels.size(); ++i) by_class[train_labels[i]].push_back(i);
  std::vector<CurvePoint> out;
  for (std::size_t f = 0; f < fractions.size(); ++f) {
    const double frac = fractions[f];
    if (!(frac > 0.0 && frac <= 1.0)) throw Error(ErrorCode::ConfigInvalid, "fractions must lie in (0, 1]");
    CurvePoint point;
    point.fraction = frac;
    const int reps = frac == 1.0 ? 1 : std::max(1, repeats);
    for (int r = 0; r < reps; ++r) {
      Rng rng(seed + 1000003ULL * static_cast<std::uint64_t>(r));
      FeatureRows rows;
      std::vector<int> labels;
      for (const auto& [label, idx] : by_class) {
        auto shuffled = idx;
        rng.shuffle(shuffled);
        const auto take = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround(frac * static_cast<double>(idx.size()))));
        for (std::size_t k = 0; k < std::min(take, shuffled.size()); ++k) {
          rows.push_back(train_rows[shuffled[k]]);
          labels.push_back(label);
        }
      }
      point.labeled = rows.size();
      point.accuracy += probe_accuracy(train_linear_probe(rows, labels, cfg), test_rows, test_labels);
    }
    point.accuracy /= reps;
    out.push_back(point);
  }
  return out;
}

}  // namespace lvae
