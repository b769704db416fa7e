#include <cmath>
#include <map>

#include "doctest.h"
#include "lvae/errors.hpp"
#include "lvae/model.hpp"
#include "lvae/quadrature.hpp"
#include "support.hpp"

using namespace lvae;

namespace {

double legal_mass(const std::vector<double>& probs) {
  double total = 0.0;
  for (double p : probs) total += p;
  return total;
}

}  // namespace

TEST_CASE("gaussian kl closed forms") {
  CHECK(gaussian_kl(GaussianPosterior{{0.0}, {0.0}}) == 0.0);
  CHECK(gaussian_kl(GaussianPosterior{{1.0, 0.0}, {0.0, 0.0}}) == doctest::Approx(0.5));
  // log sigma^2 = 1
  CHECK(gaussian_kl(GaussianPosterior{{0.0}, {0.5}}) ==
        doctest::Approx((std::exp(1.0) - 2.0) / 2.0).epsilon(1e-12));
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    GaussianPosterior p{rng.normals(3), rng.normals(3)};
    CHECK(gaussian_kl(p) >= 0.0);
  }
}

TEST_CASE("reparameterization") {
  GaussianPosterior p{{0.5, -1.0}, {0.2, -0.3}};
  CHECK(reparameterize(p, std::vector<double>{0.0, 0.0}) == p.mu);
  GaussianPosterior std_normal{{0.0, 0.0}, {0.0, 0.0}};
  CHECK(reparameterize(std_normal, std::vector<double>{0.7, -2.0}) ==
        std::vector<double>{0.7, -2.0});

  Rng rng(9);
  const int n = 100000;
  double mean = 0.0;
  for (int i = 0; i < n; ++i) mean += reparameterize(p, rng.normals(2))[0];
  mean /= n;
  CHECK(std::abs(mean - 0.5) < 3.0 * std::exp(0.2) / std::sqrt(n));
}

TEST_CASE("encoder") {
  auto model = testing::tiny_model(3, 3);
  const TokenSequence x{3, 4, 5};
  const auto a = encode(model, x);
  const auto b = encode(model, x);
  CHECK(a.mu == b.mu);
  CHECK(a.log_sigma == b.log_sigma);
  CHECK(a.mu.size() == 2);
  CHECK_THROWS_AS(encode(model, TokenSequence{}), Error);

  SUBCASE("mu gradients") {
    for (int k = 0; k < 2; ++k) {
      auto check = testing::check_gradients(model, [&](ad::Tape& tape) {
        return tape.pick(encode(tape, model, x).mu, k);
      });
      CHECK(check.max_relative_error < 1e-4);
    }
  }
}

TEST_CASE("generator steps are valid distributions") {
  auto model = testing::tiny_model(4, 4, 2, 5, 4);
  ad::Tape tape(&model.params(), nullptr, false);
  ad::Var h = init_state(tape, model, tape.constant(std::vector<double>{0.3, -0.2}));
  TokenId prev = Vocabulary::kBos;
  for (int t = 0; t < 6; ++t) {
    StepVars s = step(tape, model, h, prev);
    const auto& lp = tape.value(next_log_probs(tape, model, s.logits, static_cast<std::size_t>(t)));
    std::vector<double> p(lp.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::exp(lp[i]);
    CHECK(legal_mass(p) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(p[Vocabulary::kBos] == 0.0);
    CHECK(p[Vocabulary::kPad] == 0.0);
    for (std::size_t i = 0; i < p.size(); ++i)
      if (Vocabulary::is_legal_action(static_cast<TokenId>(i))) CHECK(p[i] > 0.0);
    h = s.state;
    prev = static_cast<TokenId>(3 + t % 4);
  }
}

TEST_CASE("sequence nll") {
  SUBCASE("uniform generator") {
    auto model = testing::tiny_model(5, 3);
    for (int idx : {model.generator().out_w, model.generator().out_b})
      for (double& v : model.params()[idx].value) v = 0.0;
    // 3 content tokens + EOS are legal
    CHECK(sequence_nll(model, TokenSequence{3, 4}, std::vector<double>{0.1, 0.2}) ==
          doctest::Approx(3.0 * std::log(4.0)).epsilon(1e-12));
  }
  SUBCASE("normalizes over all sequences") {
    auto model = testing::tiny_model(6, 2, 1);
    const std::vector<double> z{0.4};
    auto table = enumerate_conditional(model, z, 6);
    double total = std::exp(table.log_unterminated);
    for (const auto& [x, lp] : table.log_prob) {
      total += std::exp(lp);
      CHECK(-lp == doctest::Approx(sequence_nll(model, x, z)).epsilon(1e-12));
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("nonnegative") {
    auto model = testing::tiny_model(7, 3);
    Rng rng(1);
    for (int i = 0; i < 20; ++i) CHECK(sequence_nll(model, TokenSequence{3, 5, 4}, rng.normals(2)) >= 0.0);
  }
  SUBCASE("maximum length forces EOS") {
    auto model = testing::tiny_model(8, 2, 1, 3, 3, 2);
    auto table = enumerate_conditional(model, std::vector<double>{0.0}, 5);
    CHECK(table.log_prob.size() == 7);  // 1 + 2 + 4
    double total = 0.0;
    for (const auto& [x, lp] : table.log_prob) total += std::exp(lp);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("decoding") {
  auto model = testing::tiny_model(9, 3);
  const std::vector<double> z{0.2, -0.4};

  SUBCASE("one dominant token per step") {
    auto& b = model.params()[model.generator().out_b].value;
    std::fill(b.begin(), b.end(), 0.0);
    b[4] = 50.0;
    for (double& v : model.params()[model.generator().out_w].value) v = 0.0;
    const auto r = decode(model, z, DecodeMode::Greedy, nullptr, 5);
    CHECK(r.tokens == TokenSequence{4, 4, 4, 4, 4});
    CHECK_FALSE(r.terminated);
    CHECK(r.step_probs.size() == 5);
  }
  SUBCASE("greedy breaks ties toward the lowest id") {
    for (int idx : {model.generator().out_w, model.generator().out_b})
      for (double& v : model.params()[idx].value) v = 0.0;
    const auto r = decode(model, z, DecodeMode::Greedy, nullptr, 4);
    CHECK(r.terminated);  // EOS has the lowest legal id
    CHECK(r.tokens.empty());
  }
  SUBCASE("sampling is reproducible") {
    Rng a(5), b(5);
    for (int i = 0; i < 20; ++i)
      CHECK(decode(model, z, DecodeMode::Sample, &a, 8).tokens ==
            decode(model, z, DecodeMode::Sample, &b, 8).tokens);
  }
  SUBCASE("first-step frequencies follow the first-step distribution") {
    Rng rng(13);
    const int n = 100000;
    const auto probs = decode(model, z, DecodeMode::Greedy, nullptr, 1).step_probs[0];
    std::vector<int> counts(probs.size(), 0);
    for (int i = 0; i < n; ++i) {
      const auto r = decode(model, z, DecodeMode::Sample, &rng, 1);
      counts[r.tokens.empty() ? Vocabulary::kEos : static_cast<std::size_t>(r.tokens[0])]++;
    }
    for (std::size_t a = 0; a < probs.size(); ++a) {
      const double sd = std::sqrt(probs[a] * (1 - probs[a]) / n);
      CHECK(std::abs(counts[a] / double(n) - probs[a]) <= 3.0 * sd + 1e-12);
    }
  }
}

TEST_CASE("entropy upper bound") {
  SUBCASE("bounds the exact entropy") {
    auto model = testing::tiny_model(10, 2, 1, 3, 3, 4, 2.0);
    const auto table = quadrature_marginal(model, 4, 64);
    double h = 0.0;
    for (const auto& [x, lp] : table.log_prob) h -= std::exp(lp) * lp;
    Rng rng(3);
    const auto ub = entropy_upper_bound(model, 20000, rng, 4);
    CHECK(ub.value + 3.0 * ub.std_error >= h);
  }
  SUBCASE("near-deterministic generator ignoring z") {
    auto model = testing::tiny_model(11, 2, 1, 3, 3, 3);
    for (double& v : model.params()[model.generator().latent_w].value) v = 0.0;
    for (double& v : model.params()[model.generator().out_w].value) v = 0.0;
    auto& b = model.params()[model.generator().out_b].value;
    std::fill(b.begin(), b.end(), 0.0);
    b[3] = 40.0;
    Rng rng(4);
    CHECK(entropy_upper_bound(model, 200, rng, 3).value == doctest::Approx(0.0).epsilon(1e-9));
  }
}

TEST_CASE("checkpoint-relevant parameter layout") {
  auto model = testing::tiny_model(12, 3);
  CHECK(model.params().find("gen.out.w") >= 0);
  CHECK(model.params().find("enc.log_sigma.b") >= 0);
  CHECK(model.params()[model.params().find("gen.embedding")].rows == 6);
  ModelDims dims = model.dims();
  dims.shared_embeddings = true;
  Rng rng(1);
  SequenceVae shared(dims, rng);
  CHECK(shared.params().find("enc.embedding") < 0);
  CHECK(shared.encoder().embedding == shared.generator().embedding);
}
