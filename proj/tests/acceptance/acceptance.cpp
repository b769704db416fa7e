// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers as
// arguments to run a subset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <sstream>

#include "lvae/checkpoint.hpp"
#include "lvae/corpus.hpp"
#include "lvae/errors.hpp"
#include "lvae/evaluation.hpp"
#include "lvae/kde_bounds.hpp"
#include "lvae/oc_oracle.hpp"
#include "lvae/quadrature.hpp"
#include "lvae/training.hpp"
#include "support.hpp"

using namespace lvae;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<TokenSequence> all_sequences(int content, int max_len, int min_len = 0) {
  std::vector<TokenSequence> out;
  TokenSequence x;
  auto rec = [&](auto&& self) -> void {
    if (static_cast<int>(x.size()) >= min_len) out.push_back(x);
    if (static_cast<int>(x.size()) == max_len) return;
    for (int a = 0; a < content; ++a) {
      x.push_back(Vocabulary::kFirstContent + a);
      self(self);
      x.pop_back();
    }
  };
  rec(rec);
  return out;
}

// 1 -------------------------------------------------------------------------
Outcome oracle_equivalence() {
  const auto t0 = std::chrono::steady_clock::now();
  const Vocabulary vocab = testing::letters(3);
  const auto prefixes = all_sequences(3, 4);
  const auto references = all_sequences(3, 4, 1);
  std::size_t queries = 0, mismatches = 0;
  for (const auto& ref : references)
    for (const auto& prefix : prefixes) {
      const auto fast = oc_q_values(prefix, ref, vocab);
      const auto slow = brute_force_oc(prefix, ref, vocab, static_cast<int>(ref.size()));
      queries += fast.size();
      if (fast != slow) ++mismatches;
    }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < 60.0,
          fmt("%zu (prefix, reference) pairs, %zu token queries, %zu mismatches, %.1fs",
              prefixes.size() * references.size(), queries, mismatches, secs)};
}

// 2 -------------------------------------------------------------------------
Outcome figure_reproduction() {
  const auto sets = oracle_target_sets(split_whitespace("this pizza is very good"),
                                       split_whitespace("the risotto is very good"));
  const std::vector<std::vector<std::string>> expected{
      {"this"}, {"this", "pizza"}, {"this", "pizza", "is"}, {"very"}, {"good"}, {"</s>"}};
  auto sorted = [](std::vector<std::vector<std::string>> v) {
    for (auto& s : v) std::sort(s.begin(), s.end());
    return v;
  };
  std::string shown;
  for (const auto& s : sets) {
    shown += "{";
    for (std::size_t i = 0; i < s.size(); ++i) shown += (i ? "," : "") + s[i];
    shown += "} ";
  }
  return {sorted(sets) == sorted(expected), shown};
}

// 3 -------------------------------------------------------------------------
Outcome gradient_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(2024);
  double worst = 0.0;
  std::string where;
  for (int m = 0; m < 20; ++m) {
    const int content = 2 + m % 3;
    auto model = testing::tiny_model(500 + m, content, 1 + m % 3, 3, 3);
    TokenSequence x;
    const std::size_t len = 1 + rng.uniform_index(4);
    for (std::size_t i = 0; i < len; ++i)
      x.push_back(Vocabulary::kFirstContent + static_cast<TokenId>(rng.uniform_index(static_cast<std::size_t>(content))));
    const auto eps = rng.normals(static_cast<std::size_t>(model.dims().d_z));
    const SurrogateWeights w{0.2 + rng.uniform(), 0.2 + rng.uniform(), 0.2 + rng.uniform()};
    DistillOptions opt;
    opt.control.kind = m % 2 ? ControlPolicy::ModelSample : ControlPolicy::GreedyArgmax;
    opt.oracle_temperature = m % 3 == 0 ? 0.0 : 0.5;
    Rng roll(m);
    ad::Tape probe(&model.params(), nullptr, false);
    const auto traj = surrogate_loss(probe, model, x, eps, w, opt, &roll).values.control_trajectory;
    opt.fixed_trajectory = &traj;
    const auto check = testing::check_gradients(model, [&](ad::Tape& tape) {
      return surrogate_loss(tape, model, x, eps, w, opt, nullptr).total;
    });
    if (check.max_relative_error > worst) {
      worst = check.max_relative_error;
      where = fmt("model %d %s", m, check.worst.c_str());
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 120.0,
          fmt("max relative error %.2e over 20 models (%s), %.1fs", worst, where.c_str(), secs)};
}

// 4 -------------------------------------------------------------------------
Outcome bound_validity() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng gen(77);
  int failures = 0;
  double min_tight_gap = 1e300, min_naive_gap = 1e300;
  for (int inst = 0; inst < 10; ++inst) {
    KdeConfig cfg;
    cfg.tau = 0.5;
    cfg.content_size = 2;
    cfg.l_max = 18;
    const std::size_t n_data = 2 + gen.uniform_index(3);
    for (std::size_t k = 0; k < n_data; ++k) {
      TokenSequence x;
      const std::size_t len = 1 + gen.uniform_index(4);
      for (std::size_t i = 0; i < len; ++i) x.push_back(Vocabulary::kFirstContent + static_cast<TokenId>(gen.uniform_index(2)));
      cfg.dataset.push_back(x);
    }
    const auto parts = partition_functions(cfg);
    auto model = testing::tiny_model(900 + inst, 2, 1, 3, 3, 4, 2.0);
    LatentSequenceModel dist(model, 4);
    const double exact = exact_kde_kl(dist, cfg, parts, 4).value;
    Rng rng(inst);
    TightBoundOptions opt;
    opt.n_outer = 64;
    opt.n_agg = 2000;
    opt.n_entropy = 2000;
    const auto tight = tight_bound(dist, cfg, parts, opt, rng);
    const auto naive = naive_bound(dist, cfg, parts, 4000, rng);
    const double tight_gap = tight.total + 3.0 * tight.std_error - exact;
    const double naive_gap = naive.total + 3.0 * naive.std_error - exact;
    min_tight_gap = std::min(min_tight_gap, tight_gap);
    min_naive_gap = std::min(min_naive_gap, naive_gap);
    if (tight_gap < 0.0 || naive_gap < 0.0) ++failures;
  }
  const double secs = seconds_since(t0);
  return {failures == 0 && secs < 600.0,
          fmt("10 instances, %d violations, min slack tight %.3f naive %.3f, %.1fs", failures,
              min_tight_gap, min_naive_gap, secs)};
}

// 5 -------------------------------------------------------------------------
bool same_parameters(const SequenceVae& a, const SequenceVae& b) {
  if (a.params().size() != b.params().size()) return false;
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    const auto& x = a.params()[static_cast<int>(i)].value;
    const auto& y = b.params()[static_cast<int>(i)].value;
    if (x.size() != y.size() || std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) != 0) return false;
  }
  return true;
}

Outcome reduction_identity() {
  const auto corpus = generate_synthetic_corpus(SyntheticSpec{}).corpus;
  TrainConfig base;
  base.d_z = 4;
  base.d_h = 16;
  base.d_emb = 8;
  base.epochs = 1;
  base.seed = 5;
  TrainConfig vae = base, lev = base;
  vae.method = Method::Vae;
  lev.method = Method::LevVae;
  lev.lambda = 0.0;
  lev.alpha = 1.0;
  lev.tau = 1.0;
  std::vector<LossBreakdown> a, b;
  TrainCallbacks ca, cb;
  ca.on_example = [&](int, std::size_t, const LossBreakdown& l) { a.push_back(l); };
  cb.on_example = [&](int, std::size_t, const LossBreakdown& l) { b.push_back(l); };
  const auto ra = train(vae, corpus, ca);
  const auto rb = train(lev, corpus, cb);
  double worst = a.size() == b.size() ? 0.0 : 1e300;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) worst = std::max(worst, std::abs(a[i].total - b[i].total));
  const bool params = same_parameters(ra.checkpoint.model, rb.checkpoint.model);
  return {worst <= 1e-12 && params,
          fmt("%zu examples, max |difference| %.1e, parameters bitwise %s", a.size(), worst,
              params ? "identical" : "different")};
}

// 6-8 -----------------------------------------------------------------------
struct Experiment {
  Corpus corpus;
  TrainResult lev, vae, beta;
  double beta_value = 0.0;
  double collapse_seconds = 0.0;
};

TrainConfig experiment_config(Method m, double beta = 1.0) {
  TrainConfig c;
  c.method = m;
  c.beta = beta;
  c.lambda = 1.0;
  c.alpha = 1.0;
  c.tau = 1.0;
  c.d_z = 16;
  c.d_h = 128;
  c.d_emb = 32;
  c.lr = 1e-2;
  c.batch_size = 16;
  c.epochs = 30;
  c.seed = 1;
  return c;
}

Experiment& experiment() {
  static std::optional<Experiment> e;
  if (e) return *e;
  e.emplace();
  SyntheticSpec spec;
  spec.classes = 4;
  spec.n = 2000;
  e->corpus = generate_synthetic_corpus(spec).corpus;
  const auto t0 = std::chrono::steady_clock::now();
  e->vae = train(experiment_config(Method::Vae), e->corpus);
  e->lev = train(experiment_config(Method::LevVae), e->corpus);
  e->collapse_seconds = seconds_since(t0);
  // KL-matched beta-VAE: the grid value whose final KL is closest to Lev-VAE's.
  const double target = e->lev.metrics.back().kl;
  double best = 1e300;
  for (double beta : {0.3, 0.4}) {
    auto r = train(experiment_config(Method::BetaVae, beta), e->corpus);
    const double gap = std::abs(r.metrics.back().kl - target);
    std::printf("  beta-VAE beta=%.2f final KL %.3f\n", beta, r.metrics.back().kl);
    if (gap < best) {
      best = gap;
      e->beta = std::move(r);
      e->beta_value = beta;
    }
  }
  return *e;
}

Outcome posterior_collapse() {
  const auto& e = experiment();
  const auto& v = e.vae.metrics.back();
  const auto& l = e.lev.metrics.back();
  const bool pass = v.kl < 0.5 && v.lev_d > 0.5 && l.kl > 5.0 && l.lev_d < 0.3 && e.collapse_seconds < 1800.0;
  return {pass, fmt("VAE KL %.3f lev_d %.3f; Lev-VAE KL %.3f lev_d %.3f; %.0fs", v.kl, v.lev_d, l.kl, l.lev_d,
                    e.collapse_seconds)};
}

struct ProbeData {
  FeatureRows train, test;
  std::vector<int> ytrain, ytest;
  std::vector<TokenSequence> test_x;
};

ProbeData probe_data(const Experiment& e, const TrainResult& r) {
  ProbeData d;
  const auto& m = r.checkpoint.model;
  for (std::size_t i : r.train_indices) {
    d.train.push_back(posterior_mean(m, e.corpus.sequences[i]));
    d.ytrain.push_back(e.corpus.labels[i]);
  }
  for (std::size_t i : r.valid_indices) {
    d.test.push_back(posterior_mean(m, e.corpus.sequences[i]));
    d.ytest.push_back(e.corpus.labels[i]);
    d.test_x.push_back(e.corpus.sequences[i]);
  }
  return d;
}

Outcome probing_gap() {
  const auto& e = experiment();
  const auto lev = probe_data(e, e.lev);
  const auto vae = probe_data(e, e.vae);
  const auto beta = probe_data(e, e.beta);
  const double acc_lev = probe_accuracy(train_linear_probe(lev.train, lev.ytrain), lev.test, lev.ytest);
  const double acc_vae = probe_accuracy(train_linear_probe(vae.train, vae.ytrain), vae.test, vae.ytest);
  const std::vector<double> fractions{0.01, 0.1, 0.5, 1.0};
  const auto c_lev = semi_supervised_curve(lev.train, lev.ytrain, lev.test, lev.ytest, fractions, {}, 5, 3);
  const auto c_beta = semi_supervised_curve(beta.train, beta.ytrain, beta.test, beta.ytest, fractions, {}, 5, 3);
  bool dominates = true;
  std::string curve;
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    dominates = dominates && c_lev[i].accuracy >= c_beta[i].accuracy;
    curve += fmt(" %.2f:%.3f/%.3f", fractions[i], c_lev[i].accuracy, c_beta[i].accuracy);
  }
  return {acc_lev - acc_vae >= 0.10 && dominates,
          fmt("probe Lev-VAE %.3f vs VAE %.3f; curve Lev/beta(%.1f)", acc_lev, acc_vae, e.beta_value) + curve};
}

Outcome positional_decay() {
  const auto& e = experiment();
  const auto lev = probe_data(e, e.lev);
  int cap = 0;
  for (const auto& x : lev.test_x) cap = std::max(cap, static_cast<int>(x.size()));
  cap = 2 * cap + 2;
  const auto a = positionwise_accuracy(lev.test_x, reconstruct(e.lev.checkpoint.model, lev.test_x, cap));
  const auto b = positionwise_accuracy(lev.test_x, reconstruct(e.beta.checkpoint.model, lev.test_x, cap));
  double gap = 0.0, mean_a = 0.0, mean_b = 0.0;
  int n = 0;
  for (std::size_t i = 5; i < std::min(a.size(), b.size()); ++i) {
    gap += a[i].accuracy - b[i].accuracy;
    mean_a += a[i].accuracy;
    mean_b += b[i].accuracy;
    ++n;
  }
  if (n == 0) return {false, "no positions >= 5"};
  return {gap / n > 0.0, fmt("mean gap %.3f over %d positions (Lev-VAE %.3f, beta-VAE(%.1f) %.3f)", gap / n, n,
                             mean_a / n, e.beta_value, mean_b / n)};
}

// 9 -------------------------------------------------------------------------
Outcome naive_pathology() {
  const std::vector<TokenSequence> data{{3, 4, 5}, {3, 3, 5}, {4, 4, 3}, {3, 4, 4}, {5, 4, 3}};
  const double tau = 0.5;
  const auto opt = naive_bound_marginal_optimum(data, tau, 3);
  const auto fit = fit_naive_hamming_model(data, tau, 3, 1500, 0.05, 11);
  double worst = 0.0, spread = 0.0;
  std::map<std::size_t, std::vector<std::vector<double>>> by_position;
  for (const auto& [prefix, probs] : fit.conditionals) {
    double tv = 0.0;
    for (std::size_t v = 0; v < probs.size(); ++v) tv += 0.5 * std::abs(probs[v] - opt[prefix.size()][v]);
    worst = std::max(worst, tv);
    by_position[prefix.size()].push_back(probs);
  }
  for (const auto& [pos, rows] : by_position)
    for (const auto& r : rows) {
      double tv = 0.0;
      for (std::size_t v = 0; v < r.size(); ++v) tv += 0.5 * std::abs(r[v] - rows.front()[v]);
      spread = std::max(spread, tv);
    }
  return {worst < 0.05 && spread < 0.05,
          fmt("%zu prefixes, max TV to optimum %.4f, max TV between prefixes %.4f", fit.conditionals.size(), worst,
              spread)};
}

// 10 ------------------------------------------------------------------------
Outcome is_likelihood() {
  const std::vector<TokenSequence> data{{3, 4, 5}, {4, 4}, {5}, {3, 5, 3, 4}};
  double worst = 0.0;
  int cases = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto model = testing::trained_tiny_vae(seed, 3, 1, data);
    Rng rng(seed);
    for (const auto& x : data) {
      const double exact = -quadrature_log_marginal(model, x);
      worst = std::max(worst, std::abs(importance_sampled_ll(model, x, 1000, rng).nll - exact));
      ++cases;
    }
  }
  return {worst < 0.05, fmt("%d cases, max |IS - quadrature| %.4f nats", cases, worst)};
}

// 11 ------------------------------------------------------------------------
Outcome kde_limits() {
  KdeConfig narrow;
  narrow.tau = 0.05;
  narrow.content_size = 3;
  narrow.l_max = 8;
  narrow.dataset = {{3}, {4, 5}, {3, 3, 4}, {5, 4, 3, 5}};
  double worst_z = 0.0;
  for (const auto& p : partition_functions(narrow)) worst_z = std::max(worst_z, std::abs(p.z - 1.0));

  KdeConfig wide;
  wide.tau = 0.5;
  wide.content_size = 2;
  wide.l_max = 18;
  wide.dataset = {{3}, {4, 3, 4}, {3, 3, 4, 4}};
  const auto parts = partition_functions(wide);
  bool mass_ok = true;
  std::string masses;
  for (int len : {6, 10, 14}) {
    const auto r = kde_normalization(wide, parts, len);
    mass_ok = mass_ok && r.mass <= 1.0 + 1e-12 && r.mass >= 1.0 - r.tail - 1e-12;
    masses += fmt(" L=%d mass %.6f tail %.2e;", len, r.mass, r.tail);
  }

  int raised = 0, tried = 0;
  for (std::size_t V : {2, 3, 5}) {
    const double critical = 1.0 / std::log(static_cast<double>(V));
    for (double tau : {critical, critical * 1.5}) {
      ++tried;
      KdeConfig bad = narrow;
      bad.content_size = V;
      bad.dataset = {{3}};
      bad.tau = tau;
      try {
        partition_functions(bad);
      } catch (const Error& e) {
        raised += e.code() == ErrorCode::DivergentKernel;
      }
    }
  }
  return {worst_z <= 1e-6 && mass_ok && raised == tried,
          fmt("max |Z-1| at tau 0.05: %.1e;", worst_z) + masses + fmt(" DivergentKernel %d/%d", raised, tried)};
}

// 12 ------------------------------------------------------------------------
std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Outcome determinism() {
  SyntheticSpec spec;
  spec.n = 300;
  const auto corpus = generate_synthetic_corpus(spec).corpus;
  TrainConfig cfg;
  cfg.d_z = 4;
  cfg.d_h = 16;
  cfg.d_emb = 8;
  cfg.epochs = 3;
  cfg.seed = 99;
  cfg.control = ControlPolicy::ModelSample;
  const auto dir = std::filesystem::temp_directory_path();
  std::vector<std::string> csv, ckpt;
  for (int run = 0; run < 2; ++run) {
    const auto r = train(cfg, corpus);
    const auto path = (dir / ("lvae_accept_det_" + std::to_string(run) + ".ckpt")).string();
    const auto metrics_path = path + ".csv";
    save_checkpoint(r.checkpoint, path);
    write_file_atomic(metrics_path, metrics_csv(r.metrics, false));
    ckpt.push_back(file_bytes(path));
    csv.push_back(file_bytes(metrics_path));
    std::filesystem::remove(path);
    std::filesystem::remove(metrics_path);
  }
  const bool same = csv[0] == csv[1] && ckpt[0] == ckpt[1] && !ckpt[0].empty();
  return {same, fmt("metrics CSV %s, checkpoints %s (%zu bytes)", csv[0] == csv[1] ? "identical" : "differ",
                    ckpt[0] == ckpt[1] ? "identical" : "differ", ckpt[0].size())};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"oracle equivalence", oracle_equivalence},
      {"figure reproduction", figure_reproduction},
      {"gradient correctness", gradient_correctness},
      {"bound validity", bound_validity},
      {"reduction identity", reduction_identity},
      {"posterior-collapse contrast", posterior_collapse},
      {"probing gap", probing_gap},
      {"position-wise decay", positional_decay},
      {"naive-bound pathology", naive_pathology},
      {"importance-sampled likelihood", is_likelihood},
      {"KDE limits", kde_limits},
      {"determinism", determinism},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %2d %-30s %s  %s\n", id, criteria[i].first, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
