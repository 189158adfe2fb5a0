#include "hrt/tensor.hpp"

namespace hrt::num {

std::size_t shape_product(const Shape& s) {
  std::size_t p = 1;
  for (std::size_t e : s) p *= e;
  return p;
}

Tensor tensor_new(Shape shape, std::vector<double> values) {
  for (std::size_t e : shape) {
    if (e == 0) throw std::invalid_argument("tensor_new: zero extent");
  }
  if (shape_product(shape) != values.size()) {
    throw std::invalid_argument("tensor_new: shape/value length mismatch");
  }
  return Tensor(std::move(shape), std::move(values));
}

Tensor zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor full(Shape shape, double v) {
  std::vector<double> vals(shape_product(shape), v);
  return Tensor(std::move(shape), std::move(vals));
}

Tensor Tape::leaf(const Tensor& t) {
  if (consumed_) throw std::logic_error("Tape: use after backward");
  Node n;
  n.out_size = t.size();
  n.is_leaf = true;
  n.leaf_shape = t.shape;
  nodes_.push_back(std::move(n));
  Tensor out = t;
  out.tape = this;
  out.node = static_cast<int>(nodes_.size()) - 1;
  return out;
}

int Tape::record(std::size_t out_size, BackwardFn back) {
  if (consumed_) throw std::logic_error("Tape: use after backward");
  Node n;
  n.out_size = out_size;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Tensor Tape::make_tracked(Shape shape, std::vector<double> values, BackwardFn back) {
  Tensor out = tensor_new(std::move(shape), std::move(values));
  out.tape = this;
  out.node = record(out.size(), std::move(back));
  return out;
}

GradientMap Tape::backward(const Tensor& loss) {
  if (consumed_) throw std::logic_error("Tape::backward: tape already consumed");
  if (!loss.tracked() || loss.tape != this) {
    throw std::invalid_argument("Tape::backward: loss is not tracked on this tape");
  }
  if (loss.size() != 1) throw std::invalid_argument("Tape::backward: loss is not scalar");

  std::vector<std::vector<double>> grads(nodes_.size());
  grads[static_cast<std::size_t>(loss.node)] = {1.0};

  for (int id = loss.node; id >= 0; --id) {
    auto& g = grads[static_cast<std::size_t>(id)];
    if (g.empty()) continue;
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.back) n.back(g, grads);
  }

  GradientMap out;
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    const Node& n = nodes_[id];
    if (!n.is_leaf || grads[id].empty()) continue;
    out.emplace(static_cast<int>(id), Tensor(n.leaf_shape, std::move(grads[id])));
  }

  nodes_.clear();
  consumed_ = true;
  return out;
}

GradientMap backward(const Tensor& loss) {
  if (!loss.tracked()) throw std::invalid_argument("backward: loss is untracked");
  return loss.tape->backward(loss);
}

}  // namespace hrt::num
