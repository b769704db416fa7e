#include <cmath>
#include <cstring>

#include "doctest.h"
#include "lvae/checkpoint.hpp"
#include "lvae/corpus.hpp"
#include "lvae/errors.hpp"
#include "lvae/training.hpp"

using namespace lvae;

namespace {

Corpus small_corpus(std::size_t n = 60) {
  SyntheticSpec spec;
  spec.n = n;
  spec.templates_per_class = 2;
  spec.body_min = 3;
  spec.body_max = 5;
  spec.prefix_length = 2;
  spec.words_per_class = 4;
  return generate_synthetic_corpus(spec).corpus;
}

TrainConfig small_config(Method m) {
  TrainConfig c;
  c.method = m;
  c.d_z = 3;
  c.d_h = 8;
  c.d_emb = 6;
  c.epochs = 3;
  c.batch_size = 4;
  c.lr = 5e-3;
  c.seed = 17;
  return c;
}

bool same_parameters(const SequenceVae& a, const SequenceVae& b) {
  if (a.params().size() != b.params().size()) return false;
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    const auto& x = a.params()[static_cast<int>(i)].value;
    const auto& y = b.params()[static_cast<int>(i)].value;
    if (x.size() != y.size() || std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) != 0) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("method weights") {
  TrainConfig c;
  c.lambda = 0.3;
  c.alpha = 0.6;
  c.tau = 0.9;
  c.beta = 0.25;
  c.M = 4;
  auto w = [&](Method m, long epoch = 0) {
    c.method = m;
    const auto s = method_weights(c, epoch);
    return std::vector<double>{s.lambda, s.alpha, s.tau};
  };
  CHECK(w(Method::Lm) == std::vector<double>{0, 1, 0});
  CHECK(w(Method::Vae) == std::vector<double>{0, 1, 1});
  CHECK(w(Method::BetaVae) == std::vector<double>{0, 1, 0.25});
  CHECK(w(Method::CyclicVae, 1) == std::vector<double>{0, 1, 0.5});
  CHECK(w(Method::CyclicVae, 3) == std::vector<double>{0, 1, 1});
  CHECK(w(Method::LevVae) == std::vector<double>{0.3, 0.6, 0.9});
  CHECK(w(Method::LevAe) == std::vector<double>{0.3, 0.6, 0});
  for (Method m : {Method::Lm, Method::Vae, Method::BetaVae, Method::CyclicVae, Method::LevVae, Method::LevAe})
    CHECK(method_from_string(to_string(m)) == m);
  CHECK_THROWS_AS(method_from_string("ae"), Error);
}

TEST_CASE("validation split is a content hash") {
  const auto c = small_corpus(2000);
  std::size_t valid = 0;
  for (const auto& x : c.sequences) {
    CHECK(in_validation_split(x) == in_validation_split(TokenSequence(x)));
    valid += in_validation_split(x);
  }
  const double frac = static_cast<double>(valid) / 2000.0;
  CHECK(frac > 0.0);
  CHECK(frac < 0.3);
}

TEST_CASE("vae and lev_vae without distillation train identically") {
  const auto corpus = small_corpus();
  auto vae = small_config(Method::Vae);
  auto lev = small_config(Method::LevVae);
  lev.lambda = 0.0;
  lev.alpha = 1.0;
  lev.tau = 1.0;
  std::vector<LossBreakdown> a, b;
  TrainCallbacks ca, cb;
  ca.on_example = [&](int, std::size_t, const LossBreakdown& l) { a.push_back(l); };
  cb.on_example = [&](int, std::size_t, const LossBreakdown& l) { b.push_back(l); };
  const auto ra = train(vae, corpus, ca);
  const auto rb = train(lev, corpus, cb);
  REQUIRE(a.size() == b.size());
  REQUIRE(a.size() == 3 * ra.train_indices.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].total == b[i].total);
    CHECK(a[i].kl == b[i].kl);
  }
  CHECK(same_parameters(ra.checkpoint.model, rb.checkpoint.model));
  CHECK(metrics_csv(ra.metrics, false) == metrics_csv(rb.metrics, false));
}

TEST_CASE("training is deterministic") {
  const auto corpus = small_corpus();
  for (Method m : {Method::LevVae, Method::LevAe, Method::CyclicVae}) {
    auto cfg = small_config(m);
    if (m == Method::LevAe) cfg.tau = 0.0;
    cfg.control = m == Method::LevVae ? ControlPolicy::ModelSample : ControlPolicy::GreedyArgmax;
    const auto r1 = train(cfg, corpus);
    const auto r2 = train(cfg, corpus);
    CHECK(metrics_csv(r1.metrics, false) == metrics_csv(r2.metrics, false));
    CHECK(serialize_checkpoint(r1.checkpoint) == serialize_checkpoint(r2.checkpoint));
    cfg.seed += 1;
    CHECK(metrics_csv(train(cfg, corpus).metrics, false) != metrics_csv(r1.metrics, false));
  }
}

TEST_CASE("metrics are finite and the csv has one row per epoch") {
  const auto corpus = small_corpus();
  const auto r = train(small_config(Method::LevVae), corpus);
  REQUIRE(r.metrics.size() == 3);
  for (const auto& m : r.metrics) {
    CHECK(std::isfinite(m.total));
    CHECK(std::isfinite(m.lev_d));
    CHECK(m.total == doctest::Approx(m.distill + m.teacher_nll + m.kl));
  }
  CHECK(r.checkpoint.epoch == 3);
  const auto csv = metrics_csv(r.metrics, true);
  CHECK(csv.rfind("epoch,total,distill,teacher_nll,kl,lev_d,seconds\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
}

TEST_CASE("language model baseline has no encoder and no kl") {
  const auto corpus = small_corpus();
  const auto r = train(small_config(Method::Lm), corpus);
  CHECK(r.checkpoint.model.params().find("enc.mu.w") == -1);
  for (const auto& m : r.metrics) {
    CHECK_FALSE(m.has_kl);
    CHECK(m.kl == 0.0);
    CHECK(m.distill == 0.0);
  }
  const auto csv = metrics_csv(r.metrics, false);
  CHECK(csv.find(",,") != std::string::npos);
  CHECK(posterior_mean(r.checkpoint.model, corpus.sequences[0]) == std::vector<double>(3, 0.0));
}

TEST_CASE("training errors") {
  Corpus empty;
  CHECK_THROWS_AS(train(small_config(Method::Vae), empty), Error);
  auto bad = small_config(Method::LevAe);
  bad.tau = 1.0;
  try {
    train(bad, small_corpus());
    FAIL("invalid config accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ConfigInvalid);
  }
}

TEST_CASE("levenshtein autoencoder reconstruction improves") {
  const auto corpus = small_corpus(120);
  auto cfg = small_config(Method::LevAe);
  cfg.tau = 0.0;
  cfg.alpha = 0.0;
  cfg.d_h = 16;
  cfg.epochs = 15;
  const auto r = train(cfg, corpus);
  auto window = [&](std::size_t begin) {
    double s = 0.0;
    for (std::size_t i = begin; i < begin + 5; ++i) s += r.metrics[i].lev_d;
    return s / 5.0;
  };
  CHECK(window(5) <= window(0) + 0.02);
  CHECK(window(10) <= window(5) + 0.02);
  CHECK(window(10) < window(0));
}

TEST_CASE("random search") {
  const auto corpus = small_corpus();
  SearchSpace space;
  space.base = small_config(Method::LevVae);
  space.base.epochs = 1;
  space.ranges["lr"] = {SearchRange::Kind::LogUniform, 1e-3, 3e-2};
  space.ranges["d_h"] = {SearchRange::Kind::IntUniform, 4, 12};
  const auto one = random_search(space, 1, "lev_d", corpus, 5);
  REQUIRE(one.size() == 1);
  CHECK(one[0].config.d_h >= 4);
  CHECK(one[0].config.d_h <= 12);
  const auto four = random_search(space, 4, "lev_d", corpus, 5);
  REQUIRE(four.size() == 4);
  CHECK(four[0].score <= one[0].score);
  for (std::size_t i = 1; i < four.size(); ++i) CHECK(four[i - 1].score <= four[i].score);
  const auto again = random_search(space, 4, "lev_d", corpus, 5);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(again[i].score == four[i].score);
    CHECK(again[i].config == four[i].config);
  }
  CHECK(std::isfinite(random_search(space, 1, "neg_elbo", corpus, 5)[0].score));
  CHECK(std::isfinite(random_search(space, 1, "total", corpus, 5)[0].score));
  CHECK_THROWS_AS(random_search(space, 1, "bleu", corpus, 5), Error);
  CHECK_THROWS_AS(random_search(space, 0, "lev_d", corpus, 5), Error);
}
