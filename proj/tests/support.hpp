#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "lvae/autodiff.hpp"
#include "lvae/model.hpp"
#include "lvae/objectives.hpp"

namespace lvae::testing {

inline SequenceVae tiny_model(std::uint64_t seed, int content, int d_z = 2, int d_h = 3,
                              int d_emb = 3, int max_len = 0, double init_scale = 1.0) {
  Rng rng(seed);
  ModelDims dims;
  dims.vocab_size = Vocabulary::kFirstContent + content;
  dims.d_emb = d_emb;
  dims.d_h = d_h;
  dims.d_z = d_z;
  dims.max_len = max_len;
  return SequenceVae(dims, rng, init_scale);
}

inline Vocabulary letters(int n) {
  Vocabulary v;
  for (int i = 0; i < n; ++i) v.add(std::string(1, static_cast<char>('a' + i)));
  return v;
}

struct GradientCheck {
  double max_relative_error = 0.0;
  std::string worst;
};

// Five-point central differences over every parameter entry. The relative
// error uses max(|analytic|, |numeric|, floor) as denominator.
inline GradientCheck check_gradients(SequenceVae& model,
                                     const std::function<ad::Var(ad::Tape&)>& loss,
                                     double h = 1e-3, double floor = 1e-6) {
  ad::GradientStore grads(model.params());
  {
    ad::Tape tape(&model.params(), &grads);
    tape.backward(loss(tape));
  }
  auto value = [&] {
    ad::Tape tape(&model.params(), nullptr, false);
    return tape.scalar_value(loss(tape));
  };
  GradientCheck out;
  auto& params = model.params();
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& param = params[static_cast<int>(p)];
    for (std::size_t i = 0; i < param.value.size(); ++i) {
      const double saved = param.value[i];
      auto at = [&](double offset) {
        param.value[i] = saved + offset;
        return value();
      };
      const double numeric = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
      param.value[i] = saved;
      const double analytic = grads[static_cast<int>(p)][i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
      const double err = std::abs(analytic - numeric) / denom;
      if (err > out.max_relative_error) {
        out.max_relative_error = err;
        out.worst = param.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return out;
}

// A tiny VAE fitted to `data` by single-sample ELBO steps, so that its
// encoder is a usable importance proposal.
inline SequenceVae trained_tiny_vae(std::uint64_t seed, int content, int d_z,
                                    const std::vector<TokenSequence>& data, int steps = 400) {
  SequenceVae model = tiny_model(seed, content, d_z, 3, 3, 0, 1.5);
  ad::AdamConfig cfg;
  cfg.lr = 0.02;
  ad::Adam adam(model.params(), cfg);
  ad::GradientStore grads(model.params());
  Rng rng(seed + 1000);
  for (int s = 0; s < steps; ++s) {
    grads.zero();
    for (const auto& x : data) {
      ad::Tape tape(&model.params(), &grads);
      tape.backward(elbo_loss(tape, model, x, rng.normals(static_cast<std::size_t>(d_z)), 1.0).total);
    }
    adam.step(model.params(), grads);
  }
  return model;
}

}  // namespace lvae::testing
