#include "hrt/nets.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace hrt::nets {

namespace {

using num::Shape;
using num::Tape;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const RowMat>;
using MMap = Eigen::Map<RowMat>;

constexpr double kLayerNormEps = 1e-5;

Tensor xavier(Rng& rng, std::size_t in, std::size_t out) {
  double s = std::sqrt(6.0 / static_cast<double>(in + out));
  std::vector<double> v(in * out);
  for (double& x : v) x = rng.uniform(-s, s);
  return num::tensor_new({in, out}, std::move(v));
}

Tensor apply_act(const Tensor& x, Activation a) {
  switch (a) {
    case Activation::relu:
      return num::relu(x);
    case Activation::tanh:
      return num::tanh(x);
    case Activation::none:
      return x;
  }
  throw std::logic_error("unknown activation");
}

}  // namespace

Tensor mlp_forward(const MlpParams& p, const Tensor& x) {
  Tensor h = x;
  for (const MlpLayer& l : p.layers) {
    h = apply_act(num::linear(h, l.w, l.b), l.act);
  }
  return h;
}

Tensor rnn_step(const RnnParams& p, const Tensor& h_prev, const Tensor& x) {
  return num::tanh(num::add(num::linear(x, p.u, p.b), num::matmul(h_prev, p.w)));
}

std::vector<Tensor> rnn_position_encode(const RnnParams& p, const std::vector<Tensor>& window) {
  if (window.empty()) throw std::invalid_argument("rnn_position_encode: empty window");
  std::vector<Tensor> codes;
  codes.reserve(window.size());
  Shape hshape = window[0].ndim() == 2 ? Shape{window[0].shape[0], p.hidden()}
                                       : Shape{p.hidden()};
  Tensor prev = num::zeros(hshape);
  for (const Tensor& h : window) {
    prev = rnn_step(p, prev, h);
    codes.push_back(prev);
  }
  return codes;
}

Tensor sinusoidal_pe(std::size_t pos, std::size_t d) {
  if (d % 2 != 0) throw std::invalid_argument("sinusoidal_pe: width must be even");
  std::vector<double> v(d);
  for (std::size_t i = 0; 2 * i < d; ++i) {
    double angle = static_cast<double>(pos) /
                   std::pow(10000.0, 2.0 * static_cast<double>(i) / static_cast<double>(d));
    v[2 * i] = std::sin(angle);
    v[2 * i + 1] = std::cos(angle);
  }
  return num::tensor_new({d}, std::move(v));
}

Tensor attention_blocks(const Tensor& q, const Tensor& k, const Tensor& v,
                        std::size_t batch, double scale, double logit_shift,
                        Tensor* weights_out) {
  if (q.ndim() != 2 || k.shape != q.shape || v.shape != q.shape)
    throw std::invalid_argument("attention_blocks: q/k/v must be 2-D with equal shapes");
  const std::size_t rows = q.shape[0], dh = q.shape[1];
  if (batch == 0 || rows % batch != 0)
    throw std::invalid_argument("attention_blocks: batch must divide rows");
  const std::size_t seq = rows / batch;

  std::vector<double> attn(rows * seq), out(rows * dh);
  for (std::size_t b = 0; b < batch; ++b) {
    CMap Qb(q.values.data() + b * seq * dh, seq, dh);
    CMap Kb(k.values.data() + b * seq * dh, seq, dh);
    CMap Vb(v.values.data() + b * seq * dh, seq, dh);
    MMap Ab(attn.data() + b * seq * seq, seq, seq);
    Ab.noalias() = Qb * Kb.transpose();
    Ab *= scale;
    Ab.array() += logit_shift;
    for (std::size_t r = 0; r < seq; ++r) {
      double mx = Ab.row(r).maxCoeff();
      Ab.row(r) = (Ab.row(r).array() - mx).exp();
      Ab.row(r) /= Ab.row(r).sum();
    }
    MMap(out.data() + b * seq * dh, seq, dh).noalias() = Ab * Vb;
  }
  if (weights_out) *weights_out = num::tensor_new({rows, seq}, attn);

  Tape* tp = num::common_tape({&q, &k, &v});
  if (!tp) return num::tensor_new({rows, dh}, std::move(out));

  int iq = q.node, ik = k.node, iv = v.node;
  std::vector<double> qv = q.values, kv = k.values, vv = v.values;
  return tp->make_tracked(
      {rows, dh}, std::move(out),
      [iq, ik, iv, qv = std::move(qv), kv = std::move(kv), vv = std::move(vv),
       attn = std::move(attn), batch, seq, dh, scale, rows](
          const std::vector<double>& g, std::vector<std::vector<double>>& grads) {
        std::vector<double>* gq = iq >= 0 ? &Tape::acc(grads, iq, rows * dh) : nullptr;
        std::vector<double>* gk = ik >= 0 ? &Tape::acc(grads, ik, rows * dh) : nullptr;
        std::vector<double>* gv = iv >= 0 ? &Tape::acc(grads, iv, rows * dh) : nullptr;
        RowMat dS(seq, seq);
        for (std::size_t b = 0; b < batch; ++b) {
          CMap Gb(g.data() + b * seq * dh, seq, dh);
          CMap Ab(attn.data() + b * seq * seq, seq, seq);
          CMap Qb(qv.data() + b * seq * dh, seq, dh);
          CMap Kb(kv.data() + b * seq * dh, seq, dh);
          CMap Vb(vv.data() + b * seq * dh, seq, dh);
          if (gv) {
            MMap(gv->data() + b * seq * dh, seq, dh).noalias() += Ab.transpose() * Gb;
          }
          if (gq || gk) {
            dS.noalias() = Gb * Vb.transpose();  // dL/dA
            for (std::size_t r = 0; r < seq; ++r) {
              double dot = dS.row(r).dot(Ab.row(r));
              dS.row(r) = Ab.row(r).array() * (dS.row(r).array() - dot);
            }
            dS *= scale;
            if (gq) MMap(gq->data() + b * seq * dh, seq, dh).noalias() += dS * Kb;
            if (gk) MMap(gk->data() + b * seq * dh, seq, dh).noalias() += dS.transpose() * Qb;
          }
        }
      });
}

Tensor multi_head_attention(const TransformerBlockParams& p, const Tensor& x,
                            std::size_t batch, const MhaHooks* hooks) {
  if (x.ndim() != 2 || x.shape[1] != p.d_model())
    throw std::invalid_argument("multi_head_attention: input width must equal d_model");
  const double scale = 1.0 / std::sqrt(static_cast<double>(p.d_model()));
  std::vector<Tensor> heads;
  heads.reserve(p.heads());
  for (std::size_t h = 0; h < p.heads(); ++h) {
    Tensor q = num::matmul(x, p.wq[h]);
    Tensor k = num::matmul(x, p.wk[h]);
    Tensor v = num::matmul(x, p.wv[h]);
    Tensor w;
    heads.push_back(attention_blocks(q, k, v, batch, scale,
                                     hooks ? hooks->logit_shift : 0.0,
                                     hooks && hooks->attention_out ? &w : nullptr));
    if (hooks && hooks->attention_out) hooks->attention_out->push_back(std::move(w));
  }
  return num::matmul(num::hcat(heads), p.wo);
}

Tensor transformer_block(const TransformerBlockParams& p, const Tensor& x,
                         std::size_t batch, const MhaHooks* hooks) {
  Tensor h = num::layer_norm(num::add(x, multi_head_attention(p, x, batch, hooks)),
                             p.ln1.gain, p.ln1.bias, kLayerNormEps);
  return num::layer_norm(num::add(h, mlp_forward(p.ff, h)), p.ln2.gain, p.ln2.bias,
                         kLayerNormEps);
}

EncodeResult hierarchical_encode(const EncoderStack& stack, const Tensor& window,
                                 std::size_t batch, std::size_t seq,
                                 const MhaHooks* hooks) {
  if (seq == 0) throw std::invalid_argument("hierarchical_encode: empty window");
  if (window.ndim() != 2 || window.shape[0] != batch * seq)
    throw std::invalid_argument("hierarchical_encode: window must be [batch*seq, obs]");

  // step-level: hidden chain and position codes over the window
  std::vector<Tensor> steps;
  steps.reserve(seq);
  for (std::size_t i = 0; i < seq; ++i) {
    std::vector<std::size_t> idx(batch);
    for (std::size_t b = 0; b < batch; ++b) idx[b] = b * seq + i;
    steps.push_back(num::take_rows(window, idx));
  }

  const std::size_t hid = stack.rnn.hidden();
  Tensor h = num::zeros({batch, hid});
  std::vector<Tensor> hiddens;
  hiddens.reserve(seq);
  for (std::size_t i = 0; i < seq; ++i) {
    h = rnn_step(stack.rnn, h, steps[i]);
    hiddens.push_back(h);
  }

  std::vector<Tensor> tokens;
  tokens.reserve(seq);
  if (stack.pos_mode == PositionMode::rnn_code) {
    std::vector<Tensor> codes = rnn_position_encode(stack.rnn, steps);
    for (std::size_t i = 0; i < seq; ++i)
      tokens.push_back(num::matmul(num::add(hiddens[i], codes[i]), stack.embed));
  } else {
    for (std::size_t i = 0; i < seq; ++i) {
      Tensor pe = sinusoidal_pe(i, hid);
      std::vector<double> tiled(batch * hid);
      for (std::size_t b = 0; b < batch; ++b)
        std::copy(pe.values.begin(), pe.values.end(), tiled.begin() + b * hid);
      tokens.push_back(num::matmul(
          num::add(hiddens[i], num::tensor_new({batch, hid}, std::move(tiled))),
          stack.embed));
    }
  }

  // time-major stack, then permute to sample-major blocks
  Tensor tm = num::vcat(tokens);
  std::vector<std::size_t> perm(batch * seq);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < seq; ++i) perm[b * seq + i] = i * batch + b;
  Tensor toks = num::take_rows(tm, perm);

  // sequence-level: blocks applied in order
  for (const TransformerBlockParams& blk : stack.blocks) {
    toks = transformer_block(blk, toks, batch, hooks);
  }

  std::vector<std::size_t> last(batch);
  for (std::size_t b = 0; b < batch; ++b) last[b] = b * seq + seq - 1;
  return EncodeResult{toks, num::take_rows(toks, last)};
}

MlpParams make_mlp(Rng& rng, const std::vector<std::size_t>& widths,
                   Activation hidden_act, Activation out_act) {
  if (widths.size() < 2) throw std::invalid_argument("make_mlp: need at least two widths");
  MlpParams p;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    MlpLayer l;
    l.w = xavier(rng, widths[i], widths[i + 1]);
    l.b = num::zeros({widths[i + 1]});
    l.act = (i + 2 == widths.size()) ? out_act : hidden_act;
    p.layers.push_back(std::move(l));
  }
  return p;
}

RnnParams make_rnn(Rng& rng, std::size_t in, std::size_t hidden) {
  RnnParams p;
  p.u = xavier(rng, in, hidden);
  p.w = xavier(rng, hidden, hidden);
  p.b = num::zeros({hidden});
  return p;
}

TransformerBlockParams make_block(Rng& rng, std::size_t d_model, std::size_t heads,
                                  std::size_t d_ff) {
  if (heads == 0 || d_model % heads != 0)
    throw std::invalid_argument("make_block: heads must divide d_model");
  std::size_t dh = d_model / heads;
  TransformerBlockParams p;
  for (std::size_t h = 0; h < heads; ++h) {
    p.wq.push_back(xavier(rng, d_model, dh));
    p.wk.push_back(xavier(rng, d_model, dh));
    p.wv.push_back(xavier(rng, d_model, dh));
  }
  p.wo = xavier(rng, heads * dh, d_model);
  p.ln1 = {num::full({d_model}, 1.0), num::zeros({d_model})};
  p.ln2 = {num::full({d_model}, 1.0), num::zeros({d_model})};
  p.ff = make_mlp(rng, {d_model, d_ff, d_model}, Activation::relu, Activation::none);
  return p;
}

EncoderStack make_encoder(Rng& rng, std::size_t obs_dim, std::size_t hidden,
                          std::size_t d_model, std::size_t heads, std::size_t d_ff,
                          std::size_t depth, PositionMode mode) {
  if (depth == 0) throw std::invalid_argument("make_encoder: depth must be >= 1");
  EncoderStack s;
  s.rnn = make_rnn(rng, obs_dim, hidden);
  s.embed = xavier(rng, hidden, d_model);
  for (std::size_t i = 0; i < depth; ++i) s.blocks.push_back(make_block(rng, d_model, heads, d_ff));
  s.pos_mode = mode;
  return s;
}

void collect_params(MlpParams& p, std::vector<Tensor*>& out) {
  for (MlpLayer& l : p.layers) {
    out.push_back(&l.w);
    out.push_back(&l.b);
  }
}

void collect_params(RnnParams& p, std::vector<Tensor*>& out) {
  out.push_back(&p.u);
  out.push_back(&p.w);
  out.push_back(&p.b);
}

void collect_params(TransformerBlockParams& p, std::vector<Tensor*>& out) {
  for (auto& t : p.wq) out.push_back(&t);
  for (auto& t : p.wk) out.push_back(&t);
  for (auto& t : p.wv) out.push_back(&t);
  out.push_back(&p.wo);
  out.push_back(&p.ln1.gain);
  out.push_back(&p.ln1.bias);
  out.push_back(&p.ln2.gain);
  out.push_back(&p.ln2.bias);
  collect_params(p.ff, out);
}

void collect_params(EncoderStack& p, std::vector<Tensor*>& out) {
  out.push_back(&p.embed);
  collect_params(p.rnn, out);
  for (auto& b : p.blocks) collect_params(b, out);
}

namespace {

template <typename T>
T track_impl(const T& p, num::Tape& tape) {
  T copy = p;
  std::vector<Tensor*> ts;
  collect_params(copy, ts);
  for (Tensor* t : ts) *t = tape.leaf(*t);
  return copy;
}

}  // namespace

MlpParams track(const MlpParams& p, num::Tape& tape) { return track_impl(p, tape); }
RnnParams track(const RnnParams& p, num::Tape& tape) { return track_impl(p, tape); }
TransformerBlockParams track(const TransformerBlockParams& p, num::Tape& tape) {
  return track_impl(p, tape);
}
EncoderStack track(const EncoderStack& p, num::Tape& tape) { return track_impl(p, tape); }

}  // namespace hrt::nets
