#pragma once

#include <vector>

#include "hrt/ops.hpp"
#include "hrt/rng.hpp"
#include "hrt/tensor.hpp"

namespace hrt::nets {

using num::Tensor;

enum class Activation { none, relu, tanh };

struct MlpLayer {
  Tensor w;  // [in, out]
  Tensor b;  // [out]
  Activation act = Activation::none;
};

struct MlpParams {
  std::vector<MlpLayer> layers;
};

// Plain tanh recurrence h' = tanh(x.U + h.W + b).
struct RnnParams {
  Tensor u;  // [in, hidden]
  Tensor w;  // [hidden, hidden]
  Tensor b;  // [hidden]
  std::size_t hidden() const { return w.shape[0]; }
  std::size_t input() const { return u.shape[0]; }
};

struct LayerNormParams {
  Tensor gain, bias;
};

// One encoder block: per-head Q/K/V projections, output projection, two
// post-norm residual sublayers, and a two-layer ReLU feed-forward net.
struct TransformerBlockParams {
  std::vector<Tensor> wq, wk, wv;  // per head, each [d_model, d_head]
  Tensor wo;                       // [heads*d_head, d_model]
  LayerNormParams ln1, ln2;
  MlpParams ff;  // d_model -> d_ff -> d_model, relu hidden
  std::size_t heads() const { return wq.size(); }
  std::size_t d_model() const { return wq[0].shape[0]; }
  std::size_t d_head() const { return wq[0].shape[1]; }
};

enum class PositionMode { rnn_code, sinusoidal };

// Step-level RNN encoder plus an ordered stack of transformer blocks.
// Windows of raw observations enter the RNN; hidden states plus position
// codes are projected by `embed` into d_model tokens for the block stack.
struct EncoderStack {
  Tensor embed;  // [hidden, d_model]
  RnnParams rnn;
  std::vector<TransformerBlockParams> blocks;
  PositionMode pos_mode = PositionMode::rnn_code;
  std::size_t depth() const { return blocks.size(); }
  std::size_t d_model() const { return embed.shape[1]; }
};

// Test hooks threaded through attention: a constant added to every
// attention logit, and an optional sink for per-head attention weights
// (each [batch*seq, seq], rows are probability vectors).
struct MhaHooks {
  double logit_shift = 0.0;
  std::vector<Tensor>* attention_out = nullptr;
};

Tensor mlp_forward(const MlpParams& p, const Tensor& x);

// One recurrence step; x is [in] or [batch, in], h_prev matches.
Tensor rnn_step(const RnnParams& p, const Tensor& h_prev, const Tensor& x);

// Recursive position codes p_1..p_K over a window of embeddings, with
// p_0 = 0 and p_{i+1} = rnn_step(p, p_i, window[i]). Code i depends only on
// window entries <= i.
std::vector<Tensor> rnn_position_encode(const RnnParams& p, const std::vector<Tensor>& window);

// Classic sine/cosine position embedding of even width d.
Tensor sinusoidal_pe(std::size_t pos, std::size_t d);

// Scaled-dot self-attention over `batch` independent blocks of `seq` rows
// stacked in q/k/v ([batch*seq, d_head] each). Softmax scaling uses the
// caller-provided factor.
Tensor attention_blocks(const Tensor& q, const Tensor& k, const Tensor& v,
                        std::size_t batch, double scale, double logit_shift = 0.0,
                        Tensor* weights_out = nullptr);

// x is [batch*seq, d_model], sample-major. Returns same shape.
Tensor multi_head_attention(const TransformerBlockParams& p, const Tensor& x,
                            std::size_t batch = 1, const MhaHooks* hooks = nullptr);

Tensor transformer_block(const TransformerBlockParams& p, const Tensor& x,
                         std::size_t batch = 1, const MhaHooks* hooks = nullptr);

struct EncodeResult {
  Tensor tokens;  // [batch*seq, d_model], sample-major
  Tensor pooled;  // [batch, d_model], last token per sample
};

// Full hierarchical encoding: RNN hidden chain over the window, plus
// position codes, projected to tokens, then the block stack in order.
// `window` is [batch*seq, obs_dim] sample-major.
EncodeResult hierarchical_encode(const EncoderStack& stack, const Tensor& window,
                                 std::size_t batch, std::size_t seq,
                                 const MhaHooks* hooks = nullptr);

// --- parameter construction -------------------------------------------------

MlpParams make_mlp(Rng& rng, const std::vector<std::size_t>& widths,
                   Activation hidden_act, Activation out_act);
RnnParams make_rnn(Rng& rng, std::size_t in, std::size_t hidden);
TransformerBlockParams make_block(Rng& rng, std::size_t d_model, std::size_t heads,
                                  std::size_t d_ff);
EncoderStack make_encoder(Rng& rng, std::size_t obs_dim, std::size_t hidden,
                          std::size_t d_model, std::size_t heads, std::size_t d_ff,
                          std::size_t depth, PositionMode mode = PositionMode::rnn_code);

// --- parameter traversal (stable order, used for tracking/optimizing) -------

void collect_params(MlpParams& p, std::vector<Tensor*>& out);
void collect_params(RnnParams& p, std::vector<Tensor*>& out);
void collect_params(TransformerBlockParams& p, std::vector<Tensor*>& out);
void collect_params(EncoderStack& p, std::vector<Tensor*>& out);

MlpParams track(const MlpParams& p, num::Tape& tape);
RnnParams track(const RnnParams& p, num::Tape& tape);
TransformerBlockParams track(const TransformerBlockParams& p, num::Tape& tape);
EncoderStack track(const EncoderStack& p, num::Tape& tape);

}  // namespace hrt::nets
