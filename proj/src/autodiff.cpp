#include "lvae/autodiff.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>

#include "lvae/errors.hpp"

namespace lvae::ad {

int ParameterSet::add(std::string name, int rows, int cols) {
  items_.push_back(Parameter{std::move(name), rows, cols,
                             std::vector<double>(static_cast<std::size_t>(rows * cols), 0.0)});
  return static_cast<int>(items_.size()) - 1;
}

std::size_t ParameterSet::total_size() const {
  std::size_t n = 0;
  for (const auto& p : items_) n += p.size();
  return n;
}

int ParameterSet::find(const std::string& name) const {
  for (std::size_t i = 0; i < items_.size(); ++i)
    if (items_[i].name == name) return static_cast<int>(i);
  return -1;
}

GradientStore::GradientStore(const ParameterSet& params) {
  grads_.reserve(params.size());
  for (const auto& p : params) grads_.emplace_back(p.size(), 0.0);
}

void GradientStore::zero() {
  for (auto& g : grads_) std::fill(g.begin(), g.end(), 0.0);
}

void GradientStore::scale(double factor) {
  for (auto& g : grads_)
    for (double& x : g) x *= factor;
}

void GradientStore::add(const GradientStore& other) {
  for (std::size_t i = 0; i < grads_.size(); ++i)
    for (std::size_t j = 0; j < grads_[i].size(); ++j) grads_[i][j] += other.grads_[i][j];
}

int GradientStore::first_non_finite() const {
  for (std::size_t i = 0; i < grads_.size(); ++i)
    for (double x : grads_[i])
      if (!std::isfinite(x)) return static_cast<int>(i);
  return -1;
}

Tape::Tape(const ParameterSet* params, GradientStore* sink, bool record)
    : params_(params), sink_(sink), record_(record) {
  if (params_) param_nodes_.assign(params_->size(), -1);
  nodes_.reserve(1024);
}

void Tape::clear() {
  nodes_.clear();
  std::fill(param_nodes_.begin(), param_nodes_.end(), -1);
}

Var Tape::push(int rows, int cols, std::vector<double> value) {
  Node n;
  n.rows = rows;
  n.cols = cols;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::on_backward(Var out, std::function<void()> fn) {
  if (record_) nodes_[static_cast<std::size_t>(out.id)].backward = std::move(fn);
}

double* Tape::grad(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.external_grad) return n.external_grad;
  if (n.grad.empty()) n.grad.assign(n.size(), 0.0);
  return n.grad.data();
}

bool Tape::has_grad(int id) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  return n.external_grad != nullptr || !n.grad.empty();
}

const std::vector<double>& Tape::value(Var v) const {
  const Node& n = nodes_[static_cast<std::size_t>(v.id)];
  assert(!n.external);
  return n.value;
}

Var Tape::constant(std::vector<double> values, int rows, int cols) {
  assert(values.size() == static_cast<std::size_t>(rows * cols));
  return push(rows, cols, std::move(values));
}

Var Tape::parameter(int index) {
  auto& slot = param_nodes_.at(static_cast<std::size_t>(index));
  if (slot >= 0) return Var{slot};
  const Parameter& p = (*params_)[index];
  Node n;
  n.rows = p.rows;
  n.cols = p.cols;
  n.external = p.value.data();
  if (sink_) n.external_grad = (*sink_)[index].data();
  nodes_.push_back(std::move(n));
  slot = static_cast<int>(nodes_.size()) - 1;
  return Var{slot};
}

std::vector<double> Tape::parameter_grad(int index) const {
  const int id = param_nodes_.at(static_cast<std::size_t>(index));
  if (id < 0) return {};
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.external_grad) return {n.external_grad, n.external_grad + n.size()};
  return n.grad;
}

Var Tape::matvec(Var w, Var x) {
  const int m = nodes_[w.id].rows, k = nodes_[w.id].cols;
  assert(nodes_[x.id].size() == static_cast<std::size_t>(k));
  std::vector<double> y(static_cast<std::size_t>(m), 0.0);
  const double* W = val(w.id);
  const double* X = val(x.id);
  for (int i = 0; i < m; ++i) {
    const double* wr = W + static_cast<std::ptrdiff_t>(i) * k;
    double s = 0.0;
    for (int j = 0; j < k; ++j) s += wr[j] * X[j];
    y[static_cast<std::size_t>(i)] = s;
  }
  Var out = push(m, 1, std::move(y));
  on_backward(out, [this, w, x, out, m, k] {
    const double* gy = grad(out.id);
    const double* W = val(w.id);
    const double* X = val(x.id);
    double* gW = grad(w.id);
    double* gx = grad(x.id);
    for (int i = 0; i < m; ++i) {
      const double g = gy[i];
      if (g == 0.0) continue;
      const double* wr = W + static_cast<std::ptrdiff_t>(i) * k;
      double* gwr = gW + static_cast<std::ptrdiff_t>(i) * k;
      for (int j = 0; j < k; ++j) {
        gwr[j] += g * X[j];
        gx[j] += g * wr[j];
      }
    }
  });
  return out;
}

Var Tape::affine(Var w, Var x, Var b) {
  Var y = matvec(w, x);
  // Fold the bias into the same node.
  const double* B = val(b.id);
  auto& yv = nodes_[y.id].value;
  for (std::size_t i = 0; i < yv.size(); ++i) yv[i] += B[i];
  if (record_) {
    auto inner = std::move(nodes_[y.id].backward);
    nodes_[y.id].backward = [this, inner = std::move(inner), b, y] {
      const double* gy = grad(y.id);
      double* gb = grad(b.id);
      const std::size_t n = nodes_[y.id].size();
      for (std::size_t i = 0; i < n; ++i) gb[i] += gy[i];
      inner();
    };
  }
  return y;
}

Var Tape::row(Var matrix, int r) {
  const int cols = nodes_[matrix.id].cols;
  const double* M = val(matrix.id) + static_cast<std::ptrdiff_t>(r) * cols;
  Var out = push(cols, 1, std::vector<double>(M, M + cols));
  on_backward(out, [this, matrix, out, r, cols] {
    const double* g = grad(out.id);
    double* gm = grad(matrix.id) + static_cast<std::ptrdiff_t>(r) * cols;
    for (int j = 0; j < cols; ++j) gm[j] += g[j];
  });
  return out;
}

Var Tape::concat(Var a, Var b) {
  const std::size_t na = nodes_[a.id].size(), nb = nodes_[b.id].size();
  std::vector<double> v(val(a.id), val(a.id) + na);
  v.insert(v.end(), val(b.id), val(b.id) + nb);
  Var out = push(static_cast<int>(na + nb), 1, std::move(v));
  on_backward(out, [this, a, b, out, na, nb] {
    const double* g = grad(out.id);
    double* ga = grad(a.id);
    for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
    double* gb = grad(b.id);
    for (std::size_t i = 0; i < nb; ++i) gb[i] += g[na + i];
  });
  return out;
}

Var Tape::add(Var a, Var b) {
  const std::size_t n = nodes_[a.id].size();
  assert(n == nodes_[b.id].size());
  std::vector<double> v(n);
  const double *A = val(a.id), *B = val(b.id);
  for (std::size_t i = 0; i < n; ++i) v[i] = A[i] + B[i];
  Var out = push(nodes_[a.id].rows, nodes_[a.id].cols, std::move(v));
  on_backward(out, [this, a, b, out, n] {
    const double* g = grad(out.id);
    double* ga = grad(a.id);
    for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
    double* gb = grad(b.id);
    for (std::size_t i = 0; i < n; ++i) gb[i] += g[i];
  });
  return out;
}

Var Tape::sub(Var a, Var b) {
  const std::size_t n = nodes_[a.id].size();
  assert(n == nodes_[b.id].size());
  std::vector<double> v(n);
  const double *A = val(a.id), *B = val(b.id);
  for (std::size_t i = 0; i < n; ++i) v[i] = A[i] - B[i];
  Var out = push(nodes_[a.id].rows, nodes_[a.id].cols, std::move(v));
  on_backward(out, [this, a, b, out, n] {
    const double* g = grad(out.id);
    double* ga = grad(a.id);
    for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
    double* gb = grad(b.id);
    for (std::size_t i = 0; i < n; ++i) gb[i] -= g[i];
  });
  return out;
}

Var Tape::mul(Var a, Var b) {
  const std::size_t n = nodes_[a.id].size();
  assert(n == nodes_[b.id].size());
  std::vector<double> v(n);
  const double *A = val(a.id), *B = val(b.id);
  for (std::size_t i = 0; i < n; ++i) v[i] = A[i] * B[i];
  Var out = push(nodes_[a.id].rows, nodes_[a.id].cols, std::move(v));
  on_backward(out, [this, a, b, out, n] {
    const double* g = grad(out.id);
    const double *A = val(a.id), *B = val(b.id);
    double* ga = grad(a.id);
    for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * B[i];
    double* gb = grad(b.id);
    for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * A[i];
  });
  return out;
}

Var Tape::mul_const(Var a, std::span<const double> c) {
  const std::size_t n = nodes_[a.id].size();
  assert(n == c.size());
  std::vector<double> v(n);
  const double* A = val(a.id);
  for (std::size_t i = 0; i < n; ++i) v[i] = A[i] * c[i];
  Var out = push(nodes_[a.id].rows, nodes_[a.id].cols, std::move(v));
  on_backward(out, [this, a, out, n, cc = std::vector<double>(c.begin(), c.end())] {
    const double* g = grad(out.id);
    double* ga = grad(a.id);
    for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * cc[i];
  });
  return out;
}

Var Tape::scale(Var a, double c) {
  const std::size_t n = nodes_[a.id].size();
  std::vector<double> v(n);
  const double* A = val(a.id);
  for (std::size_t i = 0; i < n; ++i) v[i] = A[i] * c;
  Var out = push(nodes_[a.id].rows, nodes_[a.id].cols, std::move(v));
  on_backward(out, [this, a, out, n, c] {
    const double* g = grad(out.id);
    double* ga = grad(a.id);
    for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * c;
  });
  return out;
}

Var Tape::add_const(Var a, double c) {
  const std::size_t n = nodes_[a.id].size();
  std::vector<double> v(n);
  const double* A = val(a.id);
  for (std::size_t i = 0; i < n; ++i) v[i] = A[i] + c;
  Var out = push(nodes_[a.id].rows, nodes_[a.id].cols, std::move(v));
  on_backward(out, [this, a, out, n] {
    const double* g = grad(out.id);
    double* ga = grad(a.id);
    for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
  });
  return out;
}

Var Tape::one_minus(Var a) {
  const std::size_t n = nodes_[a.id].size();
  std::vector<double> v(n);
  const double* A = val(a.id);
  for (std::size_t i = 0; i < n; ++i) v[i] = 1.0 - A[i];
  Var out = push(nodes_[a.id].rows, nodes_[a.id].cols, std::move(v));
  on_backward(out, [this, a, out, n] {
    const double* g = grad(out.id);
    double* ga = grad(a.id);
    for (std::size_t i = 0; i < n; ++i) ga[i] -= g[i];
  });
  return out;
}

Var Tape::sigmoid(Var a) {
  const std::size_t n = nodes_[a.id].size();
  std::vector<double> v(n);
  const double* A = val(a.id);
  for (std::size_t i = 0; i < n; ++i) v[i] = 1.0 / (1.0 + std::exp(-A[i]));
  Var out = push(nodes_[a.id].rows, nodes_[a.id].cols, std::move(v));
  on_backward(out, [this, a, out, n] {
    const double* g = grad(out.id);
    const double* y = val(out.id);
    double* ga = grad(a.id);
    for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
  });
  return out;
}

Var Tape::tanh(Var a) {
  const std::size_t n = nodes_[a.id].size();
  std::vector<double> v(n);
  const double* A = val(a.id);
  for (std::size_t i = 0; i < n; ++i) v[i] = std::tanh(A[i]);
  Var out = push(nodes_[a.id].rows, nodes_[a.id].cols, std::move(v));
  on_backward(out, [this, a, out, n] {
    const double* g = grad(out.id);
    const double* y = val(out.id);
    double* ga = grad(a.id);
    for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
  });
  return out;
}

Var Tape::exp(Var a) {
  const std::size_t n = nodes_[a.id].size();
  std::vector<double> v(n);
  const double* A = val(a.id);
  for (std::size_t i = 0; i < n; ++i) v[i] = std::exp(A[i]);
  Var out = push(nodes_[a.id].rows, nodes_[a.id].cols, std::move(v));
  on_backward(out, [this, a, out, n] {
    const double* g = grad(out.id);
    const double* y = val(out.id);
    double* ga = grad(a.id);
    for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * y[i];
  });
  return out;
}

Var Tape::sum(Var a) {
  const std::size_t n = nodes_[a.id].size();
  const double* A = val(a.id);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += A[i];
  Var out = push(1, 1, {s});
  on_backward(out, [this, a, out, n] {
    const double g = grad(out.id)[0];
    double* ga = grad(a.id);
    for (std::size_t i = 0; i < n; ++i) ga[i] += g;
  });
  return out;
}

Var Tape::pick(Var a, int i) {
  Var out = push(1, 1, {val(a.id)[i]});
  on_backward(out, [this, a, out, i] { grad(a.id)[i] += grad(out.id)[0]; });
  return out;
}

Var Tape::dot_const(Var a, std::span<const double> w) {
  const std::size_t n = nodes_[a.id].size();
  assert(n == w.size());
  const double* A = val(a.id);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (w[i] != 0.0) s += w[i] * A[i];
  Var out = push(1, 1, {s});
  on_backward(out, [this, a, out, n, ww = std::vector<double>(w.begin(), w.end())] {
    const double g = grad(out.id)[0];
    double* ga = grad(a.id);
    for (std::size_t i = 0; i < n; ++i)
      if (ww[i] != 0.0) ga[i] += g * ww[i];
  });
  return out;
}

Var Tape::log_softmax(Var a, std::span<const std::uint8_t> legal) {
  const std::size_t n = nodes_[a.id].size();
  assert(n == legal.size());
  const double* A = val(a.id);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i)
    if (legal[i]) mx = std::max(mx, A[i]);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (legal[i]) z += std::exp(A[i] - mx);
  const double lse = mx + std::log(z);
  std::vector<double> v(n, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < n; ++i)
    if (legal[i]) v[i] = A[i] - lse;
  Var out = push(nodes_[a.id].rows, nodes_[a.id].cols, std::move(v));
  on_backward(out, [this, a, out, n, mask = std::vector<std::uint8_t>(legal.begin(), legal.end())] {
    const double* g = grad(out.id);
    const double* y = val(out.id);
    double gsum = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (mask[i]) gsum += g[i];
    double* ga = grad(a.id);
    for (std::size_t i = 0; i < n; ++i)
      if (mask[i]) ga[i] += g[i] - std::exp(y[i]) * gsum;
  });
  return out;
}

void Tape::backward(Var loss) {
  if (!record_) throw Error(ErrorCode::ConfigInvalid, "backward() on a non-recording tape");
  grad(loss.id)[0] += 1.0;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.backward && has_grad(id)) n.backward();
  }
}

Adam::Adam(const ParameterSet& params, AdamConfig config) : config_(config) {
  for (const auto& p : params) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void Adam::step(ParameterSet& params, const GradientStore& grads) {
  if (int bad = grads.first_non_finite(); bad >= 0)
    throw Error(ErrorCode::NonFiniteGradient, "non-finite gradient in parameter group '" +
                                                  params[bad].name + "'");
  ++t_;
  if (config_.plain_sgd) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& w = params[static_cast<int>(i)].value;
      const auto& g = grads[static_cast<int>(i)];
      for (std::size_t j = 0; j < w.size(); ++j) w[j] -= config_.lr * g[j];
    }
    return;
  }
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& w = params[static_cast<int>(i)].value;
    const auto& g = grads[static_cast<int>(i)];
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g[j];
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      w[j] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
}

}  // namespace lvae::ad
