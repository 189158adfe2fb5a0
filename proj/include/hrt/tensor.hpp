#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <unordered_map>
#include <vector>

namespace hrt::num {

using Shape = std::vector<std::size_t>;

class Tape;

// Dense row-major tensor of 64-bit floats. A Tensor is either a plain value
// (tape == nullptr) or tracked: its values live at node `node` of `tape` and
// it participates in reverse-mode differentiation.
struct Tensor {
  Shape shape;
  std::vector<double> values;
  Tape* tape = nullptr;
  int node = -1;

  Tensor() = default;
  Tensor(Shape s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {}

  bool tracked() const { return tape != nullptr; }
  std::size_t size() const { return values.size(); }
  std::size_t ndim() const { return shape.size(); }

  // 2-D accessors; rows()/cols() treat a 1-D tensor as a single row.
  std::size_t rows() const { return shape.size() == 2 ? shape[0] : 1; }
  std::size_t cols() const { return shape.size() == 2 ? shape[1] : (shape.empty() ? 1 : shape[0]); }
  double& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }

  double scalar() const {
    if (size() != 1) throw std::invalid_argument("Tensor::scalar: size != 1");
    return values[0];
  }
};

std::size_t shape_product(const Shape& s);

// Checked constructor: product(shape) must equal values length.
Tensor tensor_new(Shape shape, std::vector<double> values);
Tensor zeros(Shape shape);
Tensor full(Shape shape, double v);

// Gradient of backward(): leaf node id -> gradient tensor.
using GradientMap = std::unordered_map<int, Tensor>;

// Record of primitive operations in execution order. Execution order is a
// topological order by construction (an op's inputs are recorded before it),
// so one reverse sweep propagates all adjoints. A tape is consumed by its
// single backward() call.
class Tape {
 public:
  // grads is indexed by node id; an empty vector means "no adjoint yet".
  using BackwardFn = std::function<void(const std::vector<double>& gout,
                                        std::vector<std::vector<double>>& grads)>;

  // Register a differentiable leaf (parameter). Returns a tracked copy.
  Tensor leaf(const Tensor& t);

  // Record an interior op. `back` receives the output adjoint and scatters
  // into the adjoints of its inputs. Returns the new node id.
  int record(std::size_t out_size, BackwardFn back);

  Tensor make_tracked(Shape shape, std::vector<double> values, BackwardFn back);

  // Reverse sweep from a scalar tracked loss. Returns one gradient per leaf
  // reachable from the loss. The tape is cleared and may not be used again.
  GradientMap backward(const Tensor& loss);

  bool consumed() const { return consumed_; }
  std::size_t num_nodes() const { return nodes_.size(); }

  // Adjoint accumulation helper for backward lambdas.
  static std::vector<double>& acc(std::vector<std::vector<double>>& grads, int id,
                                  std::size_t n) {
    auto& g = grads[static_cast<std::size_t>(id)];
    if (g.empty()) g.assign(n, 0.0);
    return g;
  }

 private:
  struct Node {
    BackwardFn back;       // empty for leaves
    std::size_t out_size;
    bool is_leaf = false;
    Shape leaf_shape;
  };
  std::vector<Node> nodes_;
  bool consumed_ = false;
};

// Convenience wrapper: loss.tape->backward(loss).
GradientMap backward(const Tensor& loss);

}  // namespace hrt::num
