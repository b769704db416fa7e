#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace lvae::ad {

/// A trainable row-major array. Vectors are stored as (n x 1).
struct Parameter {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::vector<double> value;

  std::size_t size() const { return value.size(); }
};

class ParameterSet {
 public:
  int add(std::string name, int rows, int cols);
  Parameter& operator[](int i) { return items_[static_cast<std::size_t>(i)]; }
  const Parameter& operator[](int i) const { return items_[static_cast<std::size_t>(i)]; }
  std::size_t size() const { return items_.size(); }
  std::size_t total_size() const;
  int find(const std::string& name) const;  // -1 if absent

  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

 private:
  std::vector<Parameter> items_;
};

/// Gradient buffers laid out like a ParameterSet.
class GradientStore {
 public:
  GradientStore() = default;
  explicit GradientStore(const ParameterSet& params);

  std::vector<double>& operator[](int i) { return grads_[static_cast<std::size_t>(i)]; }
  const std::vector<double>& operator[](int i) const { return grads_[static_cast<std::size_t>(i)]; }
  std::size_t size() const { return grads_.size(); }

  void zero();
  void scale(double factor);
  void add(const GradientStore& other);
  /// Index of the first parameter group containing a non-finite entry, or -1.
  int first_non_finite() const;

 private:
  std::vector<std::vector<double>> grads_;
};

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Reverse-mode tape over dense vectors/matrices of doubles. Nodes are
/// recorded in creation order, which is a valid topological order.
/// Parameter leaves read the ParameterSet in place and, when a sink is
/// given, write their gradients straight into it.
class Tape {
 public:
  explicit Tape(const ParameterSet* params = nullptr, GradientStore* sink = nullptr,
                bool record = true);

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaves.
  Var constant(std::vector<double> values, int rows, int cols = 1);
  Var constant(std::span<const double> values) {
    return constant(std::vector<double>(values.begin(), values.end()),
                    static_cast<int>(values.size()));
  }
  Var scalar(double v) { return constant(std::vector<double>{v}, 1, 1); }
  Var parameter(int index);

  // Linear algebra.
  Var matvec(Var w, Var x);
  Var affine(Var w, Var x, Var b);
  Var row(Var matrix, int r);
  Var concat(Var a, Var b);

  // Elementwise (same shape), scalars are 1x1.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var mul_const(Var a, std::span<const double> c);
  Var scale(Var a, double c);
  Var add_const(Var a, double c);
  Var one_minus(Var a);
  Var sigmoid(Var a);
  Var tanh(Var a);
  Var exp(Var a);

  // Reductions / softmax.
  Var sum(Var a);
  Var pick(Var a, int i);
  /// sum_i w_i * a_i skipping entries with w_i == 0 (so -inf entries of `a` are safe).
  Var dot_const(Var a, std::span<const double> w);
  /// Log-softmax restricted to entries with legal[i] != 0; others become -inf.
  Var log_softmax(Var a, std::span<const std::uint8_t> legal);

  const std::vector<double>& value(Var v) const;
  double scalar_value(Var v) const { return value(v)[0]; }
  int rows(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].rows; }

  /// Seeds d(loss)/d(loss) = 1 and propagates to every leaf.
  void backward(Var loss);
  /// Gradient of a parameter leaf after backward(); empty if untouched.
  std::vector<double> parameter_grad(int index) const;

  bool recording() const { return record_; }
  std::size_t node_count() const { return nodes_.size(); }
  void clear();

 private:
  struct Node {
    int rows = 0;
    int cols = 0;
    std::vector<double> value;
    const double* external = nullptr;
    std::vector<double> grad;
    double* external_grad = nullptr;
    std::function<void()> backward;

    std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
    const double* data() const { return external ? external : value.data(); }
  };

  Var push(int rows, int cols, std::vector<double> value);
  const double* val(int id) const { return nodes_[static_cast<std::size_t>(id)].data(); }
  double* grad(int id);
  bool has_grad(int id) const;
  void on_backward(Var out, std::function<void()> fn);

  const ParameterSet* params_;
  GradientStore* sink_;
  bool record_;
  std::vector<Node> nodes_;
  std::vector<int> param_nodes_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool plain_sgd = false;
};

/// Adam with bias correction; plain SGD when config.plain_sgd is set.
class Adam {
 public:
  Adam(const ParameterSet& params, AdamConfig config);
  /// Throws NonFiniteGradient naming the offending group; parameters are left untouched.
  void step(ParameterSet& params, const GradientStore& grads);
  long steps() const { return t_; }

 private:
  AdamConfig config_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace lvae::ad
