#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "allmask/attention_mask.hpp"
#include "allmask/common.hpp"
#include "allmask/featurize.hpp"
#include "allmask/vocab.hpp"

namespace allmask {

struct ModelConfig {
  int vocab_size = 0;
  int embed_dim = 64;
  int layers = 2;
  int heads = 4;
  int mlp_hidden = 128;
  int max_text_positions = 384;
  int max_grid_side = 16;
  int cell_scale = 4;
  std::uint64_t init_seed = 0;

  // special token ids, bound to the vocabulary the checkpoint was built on
  int bos_id = 0;
  int eos_id = 1;
  int pad_id = 2;
  int seg_id = 3;
  int mask_id = 4;
  int fg_id = -1;
  int bg_id = -1;

  int head_dim() const { return embed_dim / heads; }
  int patch_input_dim() const { return 3 * cell_scale * cell_scale; }

  void validate() const {
    if (vocab_size < 1) throw std::invalid_argument("ModelConfig: vocab_size must be >= 1");
    if (embed_dim < 1 || heads < 1 || embed_dim % heads != 0) {
      throw std::invalid_argument("ModelConfig: embed_dim must be divisible by heads");
    }
    if (layers < 1 || mlp_hidden < 1 || max_text_positions < 1 || max_grid_side < 1 ||
        cell_scale < 1) {
      throw std::invalid_argument("ModelConfig: non-positive dimension");
    }
  }
};

inline ModelConfig make_default_config(const Vocabulary& vocab) {
  ModelConfig config;
  config.vocab_size = vocab.size();
  config.bos_id = vocab.bos();
  config.eos_id = vocab.eos();
  config.pad_id = vocab.pad();
  config.seg_id = vocab.seg();
  config.mask_id = vocab.mask_token();
  config.fg_id = vocab.fg();
  config.bg_id = vocab.bg();
  return config;
}

// All learnable state. Biases and gains are stored as 1 x D rows so every
// tensor shares the Matrix type (simplifies checkpoints, Adam and grads).
template <typename Scalar>
struct Parameters {
  ModelConfig config;

  Matrix<Scalar> token_embedding;  // V x D
  Matrix<Scalar> text_pos;         // max_text_positions x D
  Matrix<Scalar> patch_row_pos;    // max_grid_side x D
  Matrix<Scalar> patch_col_pos;    // max_grid_side x D
  Matrix<Scalar> patchify_weight;  // (3*cell_scale^2) x D
  Matrix<Scalar> patchify_bias;    // 1 x D

  // Layer-norm gains are stored as offsets from one (effective scale is
  // 1 + gain), so a zero tensor is the identity normalization.
  struct Layer {
    Matrix<Scalar> ln1_gain, ln1_bias;  // 1 x D
    Matrix<Scalar> wq, wk, wv, wo;      // D x D
    Matrix<Scalar> ln2_gain, ln2_bias;  // 1 x D
    Matrix<Scalar> w1;                  // D x H
    Matrix<Scalar> b1;                  // 1 x H
    Matrix<Scalar> w2;                  // H x D
    Matrix<Scalar> b2;                  // 1 x D
  };
  std::vector<Layer> layers;

  Matrix<Scalar> final_ln_gain, final_ln_bias;  // 1 x D
  Matrix<Scalar> lm_head;                       // D x V
  Matrix<Scalar> classifier_weight;             // D x 1
  Matrix<Scalar> classifier_bias;               // 1 x 1

  // Visits every tensor as (name, matrix). The order is fixed and defines
  // the checkpoint layout, the init draw order and the Adam update order.
  template <typename Fn>
  void for_each_tensor(Fn&& fn) {
    fn("token_embedding", token_embedding);
    fn("text_pos", text_pos);
    fn("patch_row_pos", patch_row_pos);
    fn("patch_col_pos", patch_col_pos);
    fn("patchify_weight", patchify_weight);
    fn("patchify_bias", patchify_bias);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::string prefix = "layers." + std::to_string(l) + ".";
      fn(prefix + "ln1_gain", layers[l].ln1_gain);
      fn(prefix + "ln1_bias", layers[l].ln1_bias);
      fn(prefix + "wq", layers[l].wq);
      fn(prefix + "wk", layers[l].wk);
      fn(prefix + "wv", layers[l].wv);
      fn(prefix + "wo", layers[l].wo);
      fn(prefix + "ln2_gain", layers[l].ln2_gain);
      fn(prefix + "ln2_bias", layers[l].ln2_bias);
      fn(prefix + "w1", layers[l].w1);
      fn(prefix + "b1", layers[l].b1);
      fn(prefix + "w2", layers[l].w2);
      fn(prefix + "b2", layers[l].b2);
    }
    fn("final_ln_gain", final_ln_gain);
    fn("final_ln_bias", final_ln_bias);
    fn("lm_head", lm_head);
    fn("classifier_weight", classifier_weight);
    fn("classifier_bias", classifier_bias);
  }

  template <typename Fn>
  void for_each_tensor(Fn&& fn) const {
    const_cast<Parameters*>(this)->for_each_tensor(
        [&](const std::string& name, Matrix<Scalar>& tensor) {
          fn(name, static_cast<const Matrix<Scalar>&>(tensor));
        });
  }
};

// Allocates every tensor at the shapes implied by the config, zero-filled.
template <typename Scalar>
Parameters<Scalar> make_zero_parameters(const ModelConfig& config) {
  config.validate();
  const int d = config.embed_dim;
  Parameters<Scalar> params;
  params.config = config;
  params.token_embedding = Matrix<Scalar>::Zero(config.vocab_size, d);
  params.text_pos = Matrix<Scalar>::Zero(config.max_text_positions, d);
  params.patch_row_pos = Matrix<Scalar>::Zero(config.max_grid_side, d);
  params.patch_col_pos = Matrix<Scalar>::Zero(config.max_grid_side, d);
  params.patchify_weight = Matrix<Scalar>::Zero(config.patch_input_dim(), d);
  params.patchify_bias = Matrix<Scalar>::Zero(1, d);
  params.layers.resize(static_cast<std::size_t>(config.layers));
  for (auto& layer : params.layers) {
    layer.ln1_gain = Matrix<Scalar>::Zero(1, d);
    layer.ln1_bias = Matrix<Scalar>::Zero(1, d);
    layer.wq = Matrix<Scalar>::Zero(d, d);
    layer.wk = Matrix<Scalar>::Zero(d, d);
    layer.wv = Matrix<Scalar>::Zero(d, d);
    layer.wo = Matrix<Scalar>::Zero(d, d);
    layer.ln2_gain = Matrix<Scalar>::Zero(1, d);
    layer.ln2_bias = Matrix<Scalar>::Zero(1, d);
    layer.w1 = Matrix<Scalar>::Zero(d, config.mlp_hidden);
    layer.b1 = Matrix<Scalar>::Zero(1, config.mlp_hidden);
    layer.w2 = Matrix<Scalar>::Zero(config.mlp_hidden, d);
    layer.b2 = Matrix<Scalar>::Zero(1, d);
  }
  params.final_ln_gain = Matrix<Scalar>::Zero(1, d);
  params.final_ln_bias = Matrix<Scalar>::Zero(1, d);
  params.lm_head = Matrix<Scalar>::Zero(d, config.vocab_size);
  params.classifier_weight = Matrix<Scalar>::Zero(d, 1);
  params.classifier_bias = Matrix<Scalar>::Zero(1, 1);
  return params;
}

namespace detail {

inline bool is_gain_tensor(const std::string& name) {
  return name.size() >= 4 && name.compare(name.size() - 4, 4, "gain") == 0;
}

inline bool is_bias_tensor(const std::string& name) {
  if (name.find("bias") != std::string::npos) return true;
  const std::string tail = name.substr(name.find_last_of('.') + 1);
  return tail == "b1" || tail == "b2";
}

inline bool is_positional_tensor(const std::string& name) {
  return name == "text_pos" || name == "patch_row_pos" || name == "patch_col_pos";
}

}  // namespace detail

// Weights uniform in +-sqrt(3)/sqrt(D) (zero mean, stddev 1/sqrt(D));
// positional tables, biases and gain offsets zero. Deterministic in
// config.init_seed.
template <typename Scalar>
Parameters<Scalar> init_parameters(const ModelConfig& config) {
  Parameters<Scalar> params = make_zero_parameters<Scalar>(config);
  Rng rng(mix_seed(config.init_seed, 0x1417));
  const double bound = std::sqrt(3.0) / std::sqrt(static_cast<double>(config.embed_dim));
  params.for_each_tensor([&](const std::string& name, Matrix<Scalar>& tensor) {
    if (detail::is_gain_tensor(name) || detail::is_bias_tensor(name) ||
        detail::is_positional_tensor(name)) {
      return;  // stay zero
    }
    for (Eigen::Index r = 0; r < tensor.rows(); ++r) {
      for (Eigen::Index c = 0; c < tensor.cols(); ++c) {
        tensor(r, c) = static_cast<Scalar>((2.0 * rng.next_real() - 1.0) * bound);
      }
    }
  });
  return params;
}

// Per-layer key/value activations. Storage over-allocates so appends during
// autoregressive decoding stay cheap.
template <typename Scalar>
class LayerCacheSet {
 public:
  LayerCacheSet() = default;
  LayerCacheSet(int layers, int embed_dim) { reset(layers, embed_dim); }

  void reset(int layers, int embed_dim) {
    keys_.assign(static_cast<std::size_t>(layers), Matrix<Scalar>());
    values_.assign(static_cast<std::size_t>(layers), Matrix<Scalar>());
    for (auto& k : keys_) k.resize(0, embed_dim);
    for (auto& v : values_) v.resize(0, embed_dim);
    len_ = 0;
    capacity_ = 0;
  }

  int cached_len() const { return len_; }
  int layer_count() const { return static_cast<int>(keys_.size()); }
  bool empty() const { return len_ == 0; }

  auto keys(int layer) const { return keys_[static_cast<std::size_t>(layer)].topRows(len_); }
  auto values(int layer) const { return values_[static_cast<std::size_t>(layer)].topRows(len_); }

  // Full backing storage; rows beyond cached_len() are valid only for the
  // layers already appended in the current forward.
  const Matrix<Scalar>& raw_keys(int layer) const {
    return keys_[static_cast<std::size_t>(layer)];
  }
  const Matrix<Scalar>& raw_values(int layer) const {
    return values_[static_cast<std::size_t>(layer)];
  }

  template <typename DerivedK, typename DerivedV>
  void append(int layer, const Eigen::MatrixBase<DerivedK>& k,
              const Eigen::MatrixBase<DerivedV>& v) {
    const int rows = static_cast<int>(k.rows());
    ensure_capacity(len_ + rows);
    keys_[static_cast<std::size_t>(layer)].middleRows(len_, rows) = k;
    values_[static_cast<std::size_t>(layer)].middleRows(len_, rows) = v;
    if (layer == layer_count() - 1) len_ += rows;  // all layers advance together
  }

 private:
  void ensure_capacity(int rows) {
    if (rows <= capacity_) return;
    int next = std::max(rows, capacity_ == 0 ? 64 : capacity_ * 2);
    for (auto& k : keys_) {
      Matrix<Scalar> grown(next, k.cols());
      grown.topRows(len_) = k.topRows(len_);
      k.swap(grown);
    }
    for (auto& v : values_) {
      Matrix<Scalar> grown(next, v.cols());
      grown.topRows(len_) = v.topRows(len_);
      v.swap(grown);
    }
    capacity_ = next;
  }

  std::vector<Matrix<Scalar>> keys_, values_;
  int len_ = 0;
  int capacity_ = 0;
};

template <typename Scalar>
struct ForwardResult {
  Matrix<Scalar> hidden_states;               // query_len x D
  std::optional<Matrix<Scalar>> lm_logits;    // query_len x V, if requested
};

// Activation record for one full (uncached) forward, consumed by backprop.
template <typename Scalar>
struct ForwardTape {
  struct LayerTape {
    Matrix<Scalar> x_in;        // block input
    Matrix<Scalar> ln1_xhat;    // normalized pre-affine
    Vector<Scalar> ln1_inv;     // per-row 1/sigma
    Matrix<Scalar> n1;          // LN1 output
    Matrix<Scalar> q, k, v;     // Q x D each
    std::vector<Matrix<Scalar>> probs;  // per head, Q x T
    Matrix<Scalar> attn_concat;         // Q x D, before the output projection
    Matrix<Scalar> x_mid;       // after the attention residual
    Matrix<Scalar> ln2_xhat;
    Vector<Scalar> ln2_inv;
    Matrix<Scalar> n2;
    Matrix<Scalar> u;           // MLP pre-activation
    Matrix<Scalar> gelu_t;      // tanh term of gelu(u)
    Matrix<Scalar> act;         // gelu(u)
  };
  std::vector<LayerTape> layers;
  Matrix<Scalar> x_final;       // input of the final layer norm
  Matrix<Scalar> fin_xhat;
  Vector<Scalar> fin_inv;
  Matrix<Scalar> hidden;        // final layer norm output
};

inline std::atomic<std::uint64_t>& forward_call_counter() {
  static std::atomic<std::uint64_t> counter{0};
  return counter;
}
inline std::uint64_t forward_call_count() { return forward_call_counter().load(); }

namespace detail {

template <typename Scalar>
constexpr Scalar kMaskedScore = Scalar(-1e9);  // exp underflows to exactly 0

constexpr double kLayerNormEps = 1e-5;

// Row-wise layer norm; writes the pre-affine normalization and 1/sigma for
// the backward pass when requested.
template <typename Scalar>
Matrix<Scalar> layer_norm(const Matrix<Scalar>& x, const Matrix<Scalar>& gain,
                          const Matrix<Scalar>& bias, Matrix<Scalar>* xhat_out,
                          Vector<Scalar>* inv_out) {
  const Vector<Scalar> mean = x.rowwise().mean();
  Matrix<Scalar> xhat = x;
  xhat.colwise() -= mean;
  Vector<Scalar> inv =
      (xhat.array().square().rowwise().mean() + static_cast<Scalar>(kLayerNormEps))
          .rsqrt();
  xhat.array().colwise() *= inv.array();
  Matrix<Scalar> out = xhat;
  out.array().rowwise() *= gain.row(0).array() + Scalar(1);
  out.array().rowwise() += bias.row(0).array();
  if (xhat_out) *xhat_out = std::move(xhat);
  if (inv_out) *inv_out = std::move(inv);
  return out;
}

// tanh-form GELU; the tanh term is cached in the tape for the backward pass.
constexpr double kGeluC1 = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluC2 = 0.044715;

template <typename Scalar>
Matrix<Scalar> gelu_inner_tanh(const Matrix<Scalar>& u) {
  return (static_cast<Scalar>(kGeluC1) *
          (u.array() + static_cast<Scalar>(kGeluC2) * u.array().cube()))
      .tanh()
      .matrix();
}

template <typename Scalar>
Matrix<Scalar> gelu_from_tanh(const Matrix<Scalar>& u, const Matrix<Scalar>& t) {
  return (Scalar(0.5) * u.array() * (Scalar(1) + t.array())).matrix();
}

template <typename Scalar>
Matrix<Scalar> gelu_grad_from_tanh(const Matrix<Scalar>& u, const Matrix<Scalar>& t) {
  return (Scalar(0.5) * (Scalar(1) + t.array()) +
          Scalar(0.5) * u.array() * (Scalar(1) - t.array().square()) *
              static_cast<Scalar>(kGeluC1) *
              (Scalar(1) + Scalar(3) * static_cast<Scalar>(kGeluC2) *
                               u.array().square()))
      .matrix();
}

// Stable row-wise softmax in place; masked entries hold kMaskedScore and
// come out exactly zero.
template <typename Scalar>
void softmax_rows(Matrix<Scalar>& scores) {
  const Vector<Scalar> peak = scores.rowwise().maxCoeff();
  scores.colwise() -= peak;
  scores.array() = scores.array().exp();
  const Vector<Scalar> sums = scores.rowwise().sum();
  scores.array().colwise() /= sums.array();
}

}  // namespace detail

// Pre-norm transformer over arbitrary boolean attention layouts. The cache
// is extended by this call's keys/values on every layer; pass a fresh cache
// for a fully uncached forward. When `tape` is non-null (training path, only
// valid with an empty cache) every intermediate needed by the backward pass
// is recorded.
template <typename Scalar, typename Derived>
ForwardResult<Scalar> transformer_forward(const Parameters<Scalar>& params,
                                          const Eigen::MatrixBase<Derived>& input_rows,
                                          const HybridAttentionMask& mask,
                                          LayerCacheSet<Scalar>& cache,
                                          bool want_lm_logits,
                                          ForwardTape<Scalar>* tape = nullptr) {
  const auto& config = params.config;
  const int q_len = static_cast<int>(input_rows.rows());
  if (q_len < 1 || input_rows.cols() != config.embed_dim) {
    throw std::invalid_argument("transformer_forward: bad input shape");
  }
  if (cache.layer_count() == 0) {
    cache.reset(config.layers, config.embed_dim);
  }
  if (cache.layer_count() != config.layers) {
    throw std::invalid_argument("transformer_forward: cache layer count mismatch");
  }
  if (mask.query_len() != q_len ||
      mask.key_len() != cache.cached_len() + q_len ||
      mask.cache_offset != cache.cached_len()) {
    throw std::invalid_argument("transformer_forward: mask/cache shape mismatch");
  }
  for (int i = 0; i < q_len; ++i) {
    if (!mask.allow.row(i).any()) {
      throw std::invalid_argument("transformer_forward: query row allows zero keys");
    }
  }
  if (tape && !cache.empty()) {
    throw std::invalid_argument("transformer_forward: tape requires an empty cache");
  }

  forward_call_counter().fetch_add(1, std::memory_order_relaxed);

  const int heads = config.heads;
  const int hd = config.head_dim();
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(hd));

  if (tape) tape->layers.resize(static_cast<std::size_t>(config.layers));

  const int t_len = mask.key_len();
  // Additive form of the boolean mask, shared by every head and layer.
  // Masked scores sit so far below any real score that exp underflows to
  // exactly zero after max subtraction.
  const Matrix<Scalar> mask_bias =
      ((!mask.allow).template cast<Scalar>() * detail::kMaskedScore<Scalar>).matrix();

  Matrix<Scalar> x = input_rows;
  for (int l = 0; l < config.layers; ++l) {
    const auto& layer = params.layers[static_cast<std::size_t>(l)];
    auto* lt = tape ? &tape->layers[static_cast<std::size_t>(l)] : nullptr;
    if (lt) lt->x_in = x;

    Matrix<Scalar> n1 = detail::layer_norm(x, layer.ln1_gain, layer.ln1_bias,
                                           lt ? &lt->ln1_xhat : nullptr,
                                           lt ? &lt->ln1_inv : nullptr);
    Matrix<Scalar> q(q_len, config.embed_dim), k(q_len, config.embed_dim),
        v(q_len, config.embed_dim);
    q.noalias() = n1 * layer.wq;
    k.noalias() = n1 * layer.wk;
    v.noalias() = n1 * layer.wv;

    cache.append(l, k, v);
    // While iterating layers the cache length only advances after the last
    // layer's append, so read the full extent explicitly.
    const auto k_full = cache.raw_keys(l).topRows(t_len);
    const auto v_full = cache.raw_values(l).topRows(t_len);

    Matrix<Scalar> concat(q_len, config.embed_dim);
    if (lt) lt->probs.resize(static_cast<std::size_t>(heads));
    Matrix<Scalar> scores(q_len, t_len);
    for (int h = 0; h < heads; ++h) {
      scores.noalias() = q.middleCols(h * hd, hd) *
                         k_full.middleCols(h * hd, hd).transpose();
      scores = scores * scale + mask_bias;
      detail::softmax_rows(scores);
      concat.middleCols(h * hd, hd).noalias() =
          scores * v_full.middleCols(h * hd, hd);
      if (lt) lt->probs[static_cast<std::size_t>(h)] = scores;
    }

    if (lt) {
      lt->n1 = std::move(n1);
      lt->q = std::move(q);
      lt->k = std::move(k);
      lt->v = std::move(v);
      lt->attn_concat = concat;
    }

    x.noalias() += concat * layer.wo;
    if (lt) lt->x_mid = x;

    Matrix<Scalar> n2 = detail::layer_norm(x, layer.ln2_gain, layer.ln2_bias,
                                           lt ? &lt->ln2_xhat : nullptr,
                                           lt ? &lt->ln2_inv : nullptr);
    Matrix<Scalar> u(q_len, config.mlp_hidden);
    u.noalias() = n2 * layer.w1;
    u.array().rowwise() += layer.b1.row(0).array();
    Matrix<Scalar> gelu_t = detail::gelu_inner_tanh(u);
    Matrix<Scalar> act = detail::gelu_from_tanh(u, gelu_t);
    if (lt) {
      lt->n2 = std::move(n2);
      lt->u = std::move(u);
      lt->gelu_t = std::move(gelu_t);
      lt->act = act;
    }
    Matrix<Scalar> mlp(q_len, config.embed_dim);
    mlp.noalias() = act * layer.w2;
    mlp.array().rowwise() += layer.b2.row(0).array();
    x += mlp;
  }

  if (tape) tape->x_final = x;
  ForwardResult<Scalar> result;
  result.hidden_states =
      detail::layer_norm(x, params.final_ln_gain, params.final_ln_bias,
                         tape ? &tape->fin_xhat : nullptr,
                         tape ? &tape->fin_inv : nullptr);
  if (tape) tape->hidden = result.hidden_states;
  if (want_lm_logits) {
    result.lm_logits.emplace(q_len, config.vocab_size);
    result.lm_logits->noalias() = result.hidden_states * params.lm_head;
  }
  if (!result.hidden_states.allFinite()) {
    throw std::runtime_error("transformer_forward: non-finite hidden states");
  }
  return result;
}

// Token embedding rows: token table lookup plus absolute text positions.
template <typename Scalar>
Matrix<Scalar> embed_tokens(const Parameters<Scalar>& params, const TokenSequence& ids,
                            int start_position) {
  const auto& config = params.config;
  if (start_position < 0 ||
      start_position + static_cast<int>(ids.size()) > config.max_text_positions) {
    throw capacity_error("embed_tokens: text position overflow");
  }
  Matrix<Scalar> rows(static_cast<int>(ids.size()), config.embed_dim);
  for (int t = 0; t < static_cast<int>(ids.size()); ++t) {
    const int id = ids[static_cast<std::size_t>(t)];
    if (id < 0 || id >= config.vocab_size) {
      throw std::invalid_argument("embed_tokens: token id out of range");
    }
    rows.row(t) = params.token_embedding.row(id) + params.text_pos.row(start_position + t);
  }
  return rows;
}

// Visual prefix rows: patch feature plus the factorized 2-D position.
template <typename Scalar>
Matrix<Scalar> embed_patches(const Parameters<Scalar>& params,
                             const PatchFeatureGrid<Scalar>& grid) {
  const auto& config = params.config;
  if (grid.grid_side > config.max_grid_side) {
    throw capacity_error("embed_patches: grid exceeds max_grid_side");
  }
  Matrix<Scalar> rows = grid.features;
  for (int n = 0; n < grid.patch_count(); ++n) {
    rows.row(n) += params.patch_row_pos.row(grid.patch_row(n)) +
                   params.patch_col_pos.row(grid.patch_col(n));
  }
  return rows;
}

// Visually-augmented mask placeholders: [mask] token embedding + patch
// feature + 2-D position, one row per patch in row-major order. With
// fuse_features = false (ablation) the patch-feature term is omitted.
template <typename Scalar>
Matrix<Scalar> fuse_mask_embeddings(const Parameters<Scalar>& params,
                                    const PatchFeatureGrid<Scalar>& grid,
                                    bool fuse_features = true) {
  const auto& config = params.config;
  if (grid.grid_side > config.max_grid_side) {
    throw capacity_error("fuse_mask_embeddings: grid exceeds max_grid_side");
  }
  Matrix<Scalar> rows(grid.patch_count(), config.embed_dim);
  for (int n = 0; n < grid.patch_count(); ++n) {
    rows.row(n) = params.token_embedding.row(config.mask_id) +
                  params.patch_row_pos.row(grid.patch_row(n)) +
                  params.patch_col_pos.row(grid.patch_col(n));
    if (fuse_features) rows.row(n) += grid.features.row(n);
  }
  return rows;
}

template <typename Scalar, typename Derived>
Matrix<Scalar> lm_logits(const Parameters<Scalar>& params,
                         const Eigen::MatrixBase<Derived>& hidden) {
  if (hidden.cols() != params.config.embed_dim) {
    throw std::invalid_argument("lm_logits: hidden dim mismatch");
  }
  return hidden * params.lm_head;
}

// One foreground logit per patch row.
template <typename Scalar, typename Derived>
Vector<Scalar> classify_patches(const Parameters<Scalar>& params,
                                const Eigen::MatrixBase<Derived>& mask_hidden) {
  if (mask_hidden.cols() != params.config.embed_dim) {
    throw std::invalid_argument("classify_patches: hidden dim mismatch");
  }
  Vector<Scalar> logits = mask_hidden * params.classifier_weight;
  logits.array() += params.classifier_bias(0, 0);
  return logits;
}

}  // namespace allmask
