#include "hrt/ops.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstring>

namespace hrt::num {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const RowMat>;
using MMap = Eigen::Map<RowMat>;

CMap map2(const std::vector<double>& v, std::size_t r, std::size_t c) {
  return CMap(v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

Tensor finish(Tape* tp, Shape shape, std::vector<double> vals, Tape::BackwardFn back) {
  if (!tp) return tensor_new(std::move(shape), std::move(vals));
  return tp->make_tracked(std::move(shape), std::move(vals), std::move(back));
}

void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

Tape* common_tape(std::initializer_list<const Tensor*> ts) {
  Tape* tp = nullptr;
  for (const Tensor* t : ts) {
    if (!t->tracked()) continue;
    if (tp && tp != t->tape) throw std::invalid_argument("operands from two different tapes");
    tp = t->tape;
  }
  return tp;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.ndim() == 1 || a.ndim() == 2, "matmul: a must be 1-D or 2-D");
  require(b.ndim() == 2, "matmul: b must be 2-D");
  const std::size_t m = a.rows(), k = a.cols(), k2 = b.shape[0], n = b.shape[1];
  require(k == k2, "matmul: inner extents disagree");

  std::vector<double> out(m * n);
  MMap(out.data(), m, n).noalias() = map2(a.values, m, k) * map2(b.values, k, n);
  Shape oshape = a.ndim() == 1 ? Shape{n} : Shape{m, n};

  Tape* tp = common_tape({&a, &b});
  if (!tp) return tensor_new(std::move(oshape), std::move(out));

  int ia = a.node, ib = b.node;
  std::vector<double> av = a.values, bv = b.values;
  return tp->make_tracked(
      std::move(oshape), std::move(out),
      [ia, ib, av = std::move(av), bv = std::move(bv), m, k, n](
          const std::vector<double>& g, std::vector<std::vector<double>>& grads) {
        CMap G(g.data(), m, n);
        if (ia >= 0) {
          auto& ga = Tape::acc(grads, ia, m * k);
          MMap(ga.data(), m, k).noalias() += G * map2(bv, k, n).transpose();
        }
        if (ib >= 0) {
          auto& gb = Tape::acc(grads, ib, k * n);
          MMap(gb.data(), k, n).noalias() += map2(av, m, k).transpose() * G;
        }
      });
}

Tensor transpose(const Tensor& a) {
  require(a.ndim() == 2, "transpose: 2-D required");
  const std::size_t m = a.shape[0], n = a.shape[1];
  std::vector<double> out(m * n);
  MMap(out.data(), n, m) = map2(a.values, m, n).transpose();

  Tape* tp = common_tape({&a});
  if (!tp) return tensor_new({n, m}, std::move(out));
  int ia = a.node;
  return tp->make_tracked(
      {n, m}, std::move(out),
      [ia, m, n](const std::vector<double>& g, std::vector<std::vector<double>>& grads) {
        if (ia < 0) return;
        auto& ga = Tape::acc(grads, ia, m * n);
        MMap(ga.data(), m, n).noalias() += CMap(g.data(), n, m).transpose();
      });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require(x.ndim() == 1 || x.ndim() == 2, "linear: x must be 1-D or 2-D");
  require(w.ndim() == 2, "linear: w must be 2-D");
  require(b.ndim() == 1, "linear: b must be 1-D");
  const std::size_t m = x.rows(), k = x.cols(), n = w.shape[1];
  require(w.shape[0] == k, "linear: x/w extents disagree");
  require(b.shape[0] == n, "linear: w/b extents disagree");

  std::vector<double> out(m * n);
  {
    MMap O(out.data(), m, n);
    O.noalias() = map2(x.values, m, k) * map2(w.values, k, n);
    O.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.values.data(), n);
  }
  Shape oshape = x.ndim() == 1 ? Shape{n} : Shape{m, n};

  Tape* tp = common_tape({&x, &w, &b});
  if (!tp) return tensor_new(std::move(oshape), std::move(out));

  int ix = x.node, iw = w.node, ib = b.node;
  std::vector<double> xv = x.values, wv = w.values;
  return tp->make_tracked(
      std::move(oshape), std::move(out),
      [ix, iw, ib, xv = std::move(xv), wv = std::move(wv), m, k, n](
          const std::vector<double>& g, std::vector<std::vector<double>>& grads) {
        CMap G(g.data(), m, n);
        if (ix >= 0) {
          auto& gx = Tape::acc(grads, ix, m * k);
          MMap(gx.data(), m, k).noalias() += G * map2(wv, k, n).transpose();
        }
        if (iw >= 0) {
          auto& gw = Tape::acc(grads, iw, k * n);
          MMap(gw.data(), k, n).noalias() += map2(xv, m, k).transpose() * G;
        }
        if (ib >= 0) {
          auto& gb = Tape::acc(grads, ib, n);
          Eigen::Map<Eigen::RowVectorXd>(gb.data(), n) += G.colwise().sum();
        }
      });
}

namespace {

Tensor binary_op(const Tensor& a, const Tensor& b, const char* name,
                 double (*fwd)(double, double),
                 void (*bwd)(double g, double av, double bv, double& ga, double& gb)) {
  if (a.shape != b.shape) throw std::invalid_argument(std::string(name) + ": shape mismatch");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(a.values[i], b.values[i]);

  Tape* tp = common_tape({&a, &b});
  if (!tp) return tensor_new(a.shape, std::move(out));
  int ia = a.node, ib = b.node;
  std::vector<double> av = a.values, bv = b.values;
  std::size_t n = a.size();
  return tp->make_tracked(
      a.shape, std::move(out),
      [ia, ib, av = std::move(av), bv = std::move(bv), n, bwd](
          const std::vector<double>& g, std::vector<std::vector<double>>& grads) {
        std::vector<double> dummy_a(ia >= 0 ? 0 : 1), dummy_b(ib >= 0 ? 0 : 1);
        auto& ga = ia >= 0 ? Tape::acc(grads, ia, n) : dummy_a;
        auto& gb = ib >= 0 ? Tape::acc(grads, ib, n) : dummy_b;
        if (ia >= 0 || ib >= 0) {
          double sink = 0.0;
          for (std::size_t i = 0; i < n; ++i) {
            bwd(g[i], av[i], bv[i], ia >= 0 ? ga[i] : sink, ib >= 0 ? gb[i] : sink);
          }
        }
      });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(a, b, "add", [](double x, double y) { return x + y; },
                   [](double g, double, double, double& ga, double& gb) {
                     ga += g;
                     gb += g;
                   });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(a, b, "sub", [](double x, double y) { return x - y; },
                   [](double g, double, double, double& ga, double& gb) {
                     ga += g;
                     gb -= g;
                   });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(a, b, "mul", [](double x, double y) { return x * y; },
                   [](double g, double av, double bv, double& ga, double& gb) {
                     ga += g * bv;
                     gb += g * av;
                   });
}

Tensor tanh(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x.values[i]);
  Tape* tp = common_tape({&x});
  if (!tp) return tensor_new(x.shape, std::move(out));
  int ix = x.node;
  std::vector<double> y = out;
  std::size_t n = x.size();
  return tp->make_tracked(x.shape, std::move(out),
                          [ix, y = std::move(y), n](const std::vector<double>& g,
                                                    std::vector<std::vector<double>>& grads) {
                            if (ix < 0) return;
                            auto& gx = Tape::acc(grads, ix, n);
                            for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
                          });
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.values[i] > 0.0 ? x.values[i] : 0.0;
  Tape* tp = common_tape({&x});
  if (!tp) return tensor_new(x.shape, std::move(out));
  int ix = x.node;
  std::vector<double> xv = x.values;
  std::size_t n = x.size();
  return tp->make_tracked(x.shape, std::move(out),
                          [ix, xv = std::move(xv), n](const std::vector<double>& g,
                                                      std::vector<std::vector<double>>& grads) {
                            if (ix < 0) return;
                            auto& gx = Tape::acc(grads, ix, n);
                            for (std::size_t i = 0; i < n; ++i) {
                              if (xv[i] > 0.0) gx[i] += g[i];
                            }
                          });
}

Tensor exp(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(x.values[i]);
  Tape* tp = common_tape({&x});
  if (!tp) return tensor_new(x.shape, std::move(out));
  int ix = x.node;
  std::vector<double> y = out;
  std::size_t n = x.size();
  return tp->make_tracked(x.shape, std::move(out),
                          [ix, y = std::move(y), n](const std::vector<double>& g,
                                                    std::vector<std::vector<double>>& grads) {
                            if (ix < 0) return;
                            auto& gx = Tape::acc(grads, ix, n);
                            for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * y[i];
                          });
}

Tensor scale(const Tensor& x, double s) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.values[i] * s;
  Tape* tp = common_tape({&x});
  if (!tp) return tensor_new(x.shape, std::move(out));
  int ix = x.node;
  std::size_t n = x.size();
  return tp->make_tracked(x.shape, std::move(out),
                          [ix, s, n](const std::vector<double>& g,
                                     std::vector<std::vector<double>>& grads) {
                            if (ix < 0) return;
                            auto& gx = Tape::acc(grads, ix, n);
                            for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * s;
                          });
}

namespace {

// Lane decomposition of a 1-D/2-D tensor along `axis`: `count` lanes of
// length `len`, lane l starting at start(l) with stride `stride`.
struct Lanes {
  std::size_t count, len, stride, lane_step;
};

Lanes lanes_for(const Tensor& x, std::size_t axis) {
  if (x.ndim() == 1) {
    if (axis != 0) throw std::invalid_argument("softmax: axis out of bounds");
    return {1, x.shape[0], 1, 0};
  }
  if (x.ndim() == 2) {
    if (axis >= 2) throw std::invalid_argument("softmax: axis out of bounds");
    std::size_t m = x.shape[0], n = x.shape[1];
    if (axis == 1) return {m, n, 1, n};  // rows
    return {n, m, n, 1};                 // columns
  }
  throw std::invalid_argument("softmax: 1-D or 2-D required");
}

}  // namespace

Tensor softmax(const Tensor& x, std::size_t axis) {
  Lanes L = lanes_for(x, axis);
  std::vector<double> out(x.size());
  for (std::size_t l = 0; l < L.count; ++l) {
    std::size_t base = l * L.lane_step;
    double mx = x.values[base];
    for (std::size_t i = 1; i < L.len; ++i) mx = std::max(mx, x.values[base + i * L.stride]);
    double denom = 0.0;
    for (std::size_t i = 0; i < L.len; ++i) {
      double e = std::exp(x.values[base + i * L.stride] - mx);
      out[base + i * L.stride] = e;
      denom += e;
    }
    for (std::size_t i = 0; i < L.len; ++i) out[base + i * L.stride] /= denom;
  }

  Tape* tp = common_tape({&x});
  if (!tp) return tensor_new(x.shape, std::move(out));
  int ix = x.node;
  std::vector<double> y = out;
  std::size_t n = x.size();
  return tp->make_tracked(
      x.shape, std::move(out),
      [ix, y = std::move(y), L, n](const std::vector<double>& g,
                                   std::vector<std::vector<double>>& grads) {
        if (ix < 0) return;
        auto& gx = Tape::acc(grads, ix, n);
        for (std::size_t l = 0; l < L.count; ++l) {
          std::size_t base = l * L.lane_step;
          double dot = 0.0;
          for (std::size_t i = 0; i < L.len; ++i) {
            std::size_t k = base + i * L.stride;
            dot += g[k] * y[k];
          }
          for (std::size_t i = 0; i < L.len; ++i) {
            std::size_t k = base + i * L.stride;
            gx[k] += y[k] * (g[k] - dot);
          }
        }
      });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require(x.ndim() == 1 || x.ndim() == 2, "layer_norm: 1-D or 2-D required");
  const std::size_t m = x.rows(), n = x.cols();
  require(gain.shape == Shape{n} && bias.shape == Shape{n},
          "layer_norm: gain/bias must match last extent");

  std::vector<double> out(x.size()), xhat(x.size()), inv_std(m);
  for (std::size_t r = 0; r < m; ++r) {
    const double* row = x.values.data() + r * n;
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += row[i];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (row[i] - mean) * (row[i] - mean);
    var /= static_cast<double>(n);
    double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t i = 0; i < n; ++i) {
      double xh = (row[i] - mean) * is;
      xhat[r * n + i] = xh;
      out[r * n + i] = gain.values[i] * xh + bias.values[i];
    }
  }

  Tape* tp = common_tape({&x, &gain, &bias});
  if (!tp) return tensor_new(x.shape, std::move(out));
  int ix = x.node, ig = gain.node, ib = bias.node;
  std::vector<double> gv = gain.values;
  return tp->make_tracked(
      x.shape, std::move(out),
      [ix, ig, ib, xhat = std::move(xhat), inv_std = std::move(inv_std),
       gv = std::move(gv), m, n](const std::vector<double>& g,
                                 std::vector<std::vector<double>>& grads) {
        if (ig >= 0) {
          auto& gg = Tape::acc(grads, ig, n);
          for (std::size_t r = 0; r < m; ++r)
            for (std::size_t i = 0; i < n; ++i) gg[i] += g[r * n + i] * xhat[r * n + i];
        }
        if (ib >= 0) {
          auto& gb = Tape::acc(grads, ib, n);
          for (std::size_t r = 0; r < m; ++r)
            for (std::size_t i = 0; i < n; ++i) gb[i] += g[r * n + i];
        }
        if (ix >= 0) {
          auto& gx = Tape::acc(grads, ix, m * n);
          for (std::size_t r = 0; r < m; ++r) {
            double mean_dxh = 0.0, mean_dxh_xh = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
              double dxh = g[r * n + i] * gv[i];
              mean_dxh += dxh;
              mean_dxh_xh += dxh * xhat[r * n + i];
            }
            mean_dxh /= static_cast<double>(n);
            mean_dxh_xh /= static_cast<double>(n);
            for (std::size_t i = 0; i < n; ++i) {
              double dxh = g[r * n + i] * gv[i];
              gx[r * n + i] +=
                  inv_std[r] * (dxh - mean_dxh - xhat[r * n + i] * mean_dxh_xh);
            }
          }
        }
      });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values) s += v;
  Tape* tp = common_tape({&x});
  if (!tp) return tensor_new({1}, {s});
  int ix = x.node;
  std::size_t n = x.size();
  return tp->make_tracked({1}, {s},
                          [ix, n](const std::vector<double>& g,
                                  std::vector<std::vector<double>>& grads) {
                            if (ix < 0) return;
                            auto& gx = Tape::acc(grads, ix, n);
                            for (std::size_t i = 0; i < n; ++i) gx[i] += g[0];
                          });
}

Tensor reshape(const Tensor& x, Shape shape) {
  require(shape_product(shape) == x.size(), "reshape: size mismatch");
  Tape* tp = common_tape({&x});
  if (!tp) return tensor_new(std::move(shape), x.values);
  int ix = x.node;
  std::size_t n = x.size();
  std::vector<double> vals = x.values;
  return tp->make_tracked(std::move(shape), std::move(vals),
                          [ix, n](const std::vector<double>& g,
                                  std::vector<std::vector<double>>& grads) {
                            if (ix < 0) return;
                            auto& gx = Tape::acc(grads, ix, n);
                            for (std::size_t i = 0; i < n; ++i) gx[i] += g[i];
                          });
}

Tensor hcat(const std::vector<Tensor>& xs) {
  require(!xs.empty(), "hcat: empty input");
  bool vec = xs[0].ndim() == 1;
  std::size_t m = vec ? 1 : xs[0].shape[0];
  std::size_t total = 0;
  for (const Tensor& t : xs) {
    require(t.ndim() == (vec ? 1u : 2u), "hcat: mixed ranks");
    require(t.rows() == m || vec, "hcat: row counts disagree");
    if (!vec) require(t.shape[0] == m, "hcat: row counts disagree");
    total += t.cols();
  }

  std::vector<double> out(m * total);
  std::size_t off = 0;
  for (const Tensor& t : xs) {
    std::size_t c = t.cols();
    for (std::size_t r = 0; r < m; ++r)
      std::memcpy(out.data() + r * total + off, t.values.data() + r * c, c * sizeof(double));
    off += c;
  }

  Tape* tp = nullptr;
  for (const Tensor& t : xs) {
    Tape* q = common_tape({&t});
    if (q) {
      if (tp && tp != q) throw std::invalid_argument("hcat: operands from two different tapes");
      tp = q;
    }
  }
  Shape oshape = vec ? Shape{total} : Shape{m, total};
  if (!tp) return tensor_new(std::move(oshape), std::move(out));

  struct Piece {
    int node;
    std::size_t off, cols;
  };
  std::vector<Piece> pieces;
  off = 0;
  for (const Tensor& t : xs) {
    pieces.push_back({t.node, off, t.cols()});
    off += t.cols();
  }
  return tp->make_tracked(
      std::move(oshape), std::move(out),
      [pieces = std::move(pieces), m, total](const std::vector<double>& g,
                                             std::vector<std::vector<double>>& grads) {
        for (const auto& p : pieces) {
          if (p.node < 0) continue;
          auto& gp = Tape::acc(grads, p.node, m * p.cols);
          for (std::size_t r = 0; r < m; ++r)
            for (std::size_t i = 0; i < p.cols; ++i)
              gp[r * p.cols + i] += g[r * total + p.off + i];
        }
      });
}

Tensor vcat(const std::vector<Tensor>& xs) {
  require(!xs.empty(), "vcat: empty input");
  std::size_t n = xs[0].cols(), m = 0;
  for (const Tensor& t : xs) {
    require(t.ndim() == 2, "vcat: 2-D required");
    require(t.shape[1] == n, "vcat: column counts disagree");
    m += t.shape[0];
  }
  std::vector<double> out;
  out.reserve(m * n);
  for (const Tensor& t : xs) out.insert(out.end(), t.values.begin(), t.values.end());

  Tape* tp = nullptr;
  for (const Tensor& t : xs) {
    Tape* q = common_tape({&t});
    if (q) {
      if (tp && tp != q) throw std::invalid_argument("vcat: operands from two different tapes");
      tp = q;
    }
  }
  if (!tp) return tensor_new({m, n}, std::move(out));

  struct Piece {
    int node;
    std::size_t off, size;
  };
  std::vector<Piece> pieces;
  std::size_t off = 0;
  for (const Tensor& t : xs) {
    pieces.push_back({t.node, off, t.size()});
    off += t.size();
  }
  return tp->make_tracked(
      {m, n}, std::move(out),
      [pieces = std::move(pieces)](const std::vector<double>& g,
                                   std::vector<std::vector<double>>& grads) {
        for (const auto& p : pieces) {
          if (p.node < 0) continue;
          auto& gp = Tape::acc(grads, p.node, p.size);
          for (std::size_t i = 0; i < p.size; ++i) gp[i] += g[p.off + i];
        }
      });
}

Tensor take_rows(const Tensor& x, const std::vector<std::size_t>& idx) {
  require(x.ndim() == 2, "take_rows: 2-D required");
  const std::size_t m = x.shape[0], n = x.shape[1];
  std::vector<double> out(idx.size() * n);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    require(idx[r] < m, "take_rows: index out of range");
    std::memcpy(out.data() + r * n, x.values.data() + idx[r] * n, n * sizeof(double));
  }
  Tape* tp = common_tape({&x});
  if (!tp) return tensor_new({idx.size(), n}, std::move(out));
  int ix = x.node;
  std::vector<std::size_t> ii = idx;
  return tp->make_tracked(
      {idx.size(), n}, std::move(out),
      [ix, ii = std::move(ii), m, n](const std::vector<double>& g,
                                     std::vector<std::vector<double>>& grads) {
        if (ix < 0) return;
        auto& gx = Tape::acc(grads, ix, m * n);
        for (std::size_t r = 0; r < ii.size(); ++r)
          for (std::size_t i = 0; i < n; ++i) gx[ii[r] * n + i] += g[r * n + i];
      });
}

Tensor take_cols(const Tensor& x, const std::vector<std::size_t>& idx) {
  require(x.ndim() == 2, "take_cols: 2-D required");
  const std::size_t m = x.shape[0], n = x.shape[1];
  std::vector<double> out(m * idx.size());
  for (std::size_t c = 0; c < idx.size(); ++c) {
    require(idx[c] < n, "take_cols: index out of range");
    for (std::size_t r = 0; r < m; ++r) out[r * idx.size() + c] = x.values[r * n + idx[c]];
  }
  Tape* tp = common_tape({&x});
  if (!tp) return tensor_new({m, idx.size()}, std::move(out));
  int ix = x.node;
  std::vector<std::size_t> ii = idx;
  return tp->make_tracked(
      {m, idx.size()}, std::move(out),
      [ix, ii = std::move(ii), m, n](const std::vector<double>& g,
                                     std::vector<std::vector<double>>& grads) {
        if (ix < 0) return;
        auto& gx = Tape::acc(grads, ix, m * n);
        for (std::size_t c = 0; c < ii.size(); ++c)
          for (std::size_t r = 0; r < m; ++r) gx[r * n + ii[c]] += g[r * ii.size() + c];
      });
}

}  // namespace hrt::num
