#pragma once

#include <vector>

#include "hrt/tensor.hpp"

namespace hrt::num {

// All operations record themselves on a tape when any input is tracked.
// Mixing tensors from two different tapes is an error. Binary elementwise
// ops require exactly equal shapes; there is no broadcasting (scale is the
// scalar exception).

// Matrix product of 2-D tensors; a 1-D left operand is treated as one row
// and yields a 1-D result.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// x.W + b applied rowwise: x is [m,k] or [k], w is [k,n], b is [n].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor scale(const Tensor& x, double s);

// Max-subtracted softmax along `axis` of a 1-D or 2-D tensor.
Tensor softmax(const Tensor& x, std::size_t axis);

// Per-row standardization over the last axis (population variance, eps
// inside the square root), then elementwise gain/bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);

Tensor sum(const Tensor& x);  // scalar [1]

Tensor reshape(const Tensor& x, Shape shape);

// Column-wise concatenation: all 2-D with equal rows, or all 1-D.
Tensor hcat(const std::vector<Tensor>& xs);
// Row-wise concatenation of 2-D tensors with equal column counts.
Tensor vcat(const std::vector<Tensor>& xs);
// Gather rows of a 2-D tensor.
Tensor take_rows(const Tensor& x, const std::vector<std::size_t>& idx);
// Gather columns of a 2-D tensor.
Tensor take_cols(const Tensor& x, const std::vector<std::size_t>& idx);

// Tape shared by a set of operands (nullptr if none tracked); throws when
// two distinct tapes are mixed.
Tape* common_tape(std::initializer_list<const Tensor*> ts);

}  // namespace hrt::num
