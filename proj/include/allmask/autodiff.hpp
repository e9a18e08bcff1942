#pragma once

#include <utility>
#include <vector>

#include "allmask/attention_mask.hpp"
#include "allmask/dataset.hpp"
#include "allmask/losses.hpp"
#include "allmask/model.hpp"

namespace allmask {

struct AblationFlags {
  bool no_fusion = false;  // drop the patch-feature term from mask embeddings
  bool no_hybrid = false;  // causal- instead of bidirectional placeholder block
};

namespace detail {

enum class RowKind { kVisual, kToken, kMaskRow };

struct RowRole {
  RowKind kind;
  int index = 0;     // patch index or token id
  int position = 0;  // text position (tokens only)
};

template <typename Scalar>
struct SampleFeatures {
  Matrix<Scalar> flat;  // N x (3*cell_scale^2), kept for the patchify backward
  PatchFeatureGrid<Scalar> grid;
};

template <typename Scalar>
SampleFeatures<Scalar> compute_features(const Parameters<Scalar>& params,
                                        const SyntheticSample<Scalar>& sample) {
  SampleFeatures<Scalar> features;
  features.flat = flatten_patches(sample.pixels, sample.scene.grid_side);
  features.grid.grid_side = sample.scene.grid_side;
  features.grid.features.noalias() = features.flat * params.patchify_weight;
  features.grid.features.rowwise() += params.patchify_bias.row(0);
  return features;
}

template <typename Scalar>
struct AssembledPass {
  Matrix<Scalar> rows;
  HybridAttentionMask mask;
  std::vector<RowRole> roles;
  std::vector<std::pair<int, int>> lm_targets;  // (input row, target token id)
  int mask_rows_begin = -1;
  int mask_rows_count = 0;
};

template <typename Scalar>
void append_visual_roles(std::vector<RowRole>& roles, const PatchFeatureGrid<Scalar>& grid) {
  for (int n = 0; n < grid.patch_count(); ++n) {
    roles.push_back({RowKind::kVisual, n, 0});
  }
}

inline void append_token_roles(std::vector<RowRole>& roles, const TokenSequence& ids,
                               int start_position) {
  for (std::size_t t = 0; t < ids.size(); ++t) {
    roles.push_back({RowKind::kToken, ids[t], start_position + static_cast<int>(t)});
  }
}

// Teacher-forced language-model pass: [patches ++ instruction ++
// response[:-1]] under a causal mask; the loss reads the logits rows that
// predict each response token.
template <typename Scalar>
AssembledPass<Scalar> build_text_pass(const Parameters<Scalar>& params,
                                      const SyntheticSample<Scalar>& sample,
                                      const SampleFeatures<Scalar>& features) {
  const int n_patches = features.grid.patch_count();
  const int instr_len = static_cast<int>(sample.instruction.size());
  const int resp_len = static_cast<int>(sample.response.size());

  TokenSequence text = sample.instruction;
  text.insert(text.end(), sample.response.begin(), sample.response.end() - 1);

  AssembledPass<Scalar> pass;
  const int total = n_patches + static_cast<int>(text.size());
  pass.rows.resize(total, params.config.embed_dim);
  pass.rows.topRows(n_patches) = embed_patches(params, features.grid);
  pass.rows.bottomRows(static_cast<int>(text.size())) = embed_tokens(params, text, 0);
  append_visual_roles(pass.roles, features.grid);
  append_token_roles(pass.roles, text, 0);
  pass.mask = construct_causal_mask(total);
  pass.lm_targets.reserve(static_cast<std::size_t>(resp_len));
  for (int k = 0; k < resp_len; ++k) {
    pass.lm_targets.emplace_back(n_patches + instr_len - 1 + k,
                                 sample.response[static_cast<std::size_t>(k)]);
  }
  return pass;
}

inline int find_first_seg(const TokenSequence& response, int seg_id) {
  for (std::size_t i = 0; i < response.size(); ++i) {
    if (response[i] == seg_id) return static_cast<int>(i);
  }
  return -1;
}

// Teacher-forced all-mask pass: [patches ++ instruction ++ response up to
// and including <seg> ++ mask placeholders] under the hybrid layout.
template <typename Scalar>
AssembledPass<Scalar> build_mask_pass(const Parameters<Scalar>& params,
                                      const SyntheticSample<Scalar>& sample,
                                      const SampleFeatures<Scalar>& features,
                                      int seg_index, const AblationFlags& ablation) {
  const int n_patches = features.grid.patch_count();
  TokenSequence hist = sample.instruction;
  hist.insert(hist.end(), sample.response.begin(),
              sample.response.begin() + seg_index + 1);

  AssembledPass<Scalar> pass;
  const int history_len = n_patches + static_cast<int>(hist.size());
  pass.rows.resize(history_len + n_patches, params.config.embed_dim);
  pass.rows.topRows(n_patches) = embed_patches(params, features.grid);
  pass.rows.middleRows(n_patches, static_cast<int>(hist.size())) =
      embed_tokens(params, hist, 0);
  pass.rows.bottomRows(n_patches) =
      fuse_mask_embeddings(params, features.grid, !ablation.no_fusion);
  append_visual_roles(pass.roles, features.grid);
  append_token_roles(pass.roles, hist, 0);
  for (int n = 0; n < n_patches; ++n) {
    pass.roles.push_back({RowKind::kMaskRow, n, 0});
  }
  pass.mask = ablation.no_hybrid ? construct_causal_block_mask(history_len, n_patches)
                                 : construct_hybrid_mask(history_len, n_patches);
  pass.mask_rows_begin = history_len;
  pass.mask_rows_count = n_patches;
  return pass;
}

template <typename Scalar>
Matrix<Scalar> layer_norm_backward(const Matrix<Scalar>& d_out, const Matrix<Scalar>& xhat,
                                   const Vector<Scalar>& inv, const Matrix<Scalar>& gain,
                                   Matrix<Scalar>& d_gain, Matrix<Scalar>& d_bias) {
  d_gain.row(0) += (d_out.array() * xhat.array()).colwise().sum().matrix();
  d_bias.row(0) += d_out.colwise().sum();
  Matrix<Scalar> dxhat = d_out;
  dxhat.array().rowwise() *= gain.row(0).array() + Scalar(1);  // offset-from-one gains
  const Vector<Scalar> m1 = dxhat.rowwise().mean();
  const Vector<Scalar> m2 = (dxhat.array() * xhat.array()).rowwise().mean();
  Matrix<Scalar> dx = dxhat;
  dx.colwise() -= m1;
  dx.array() -= xhat.array().colwise() * m2.array();
  dx.array().colwise() *= inv.array();
  return dx;
}

// Reverse pass through the recorded forward. `d_hidden` is the gradient at
// the final layer-norm output; returns the gradient at the input rows while
// accumulating parameter gradients.
template <typename Scalar>
Matrix<Scalar> backward_pass(const Parameters<Scalar>& params,
                             const ForwardTape<Scalar>& tape,
                             const Matrix<Scalar>& d_hidden,
                             Parameters<Scalar>& grads) {
  const auto& config = params.config;
  const int heads = config.heads;
  const int hd = config.head_dim();
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(hd));

  Matrix<Scalar> d_x = layer_norm_backward(d_hidden, tape.fin_xhat, tape.fin_inv,
                                           params.final_ln_gain, grads.final_ln_gain,
                                           grads.final_ln_bias);

  for (int l = config.layers - 1; l >= 0; --l) {
    const auto& layer = params.layers[static_cast<std::size_t>(l)];
    auto& g = grads.layers[static_cast<std::size_t>(l)];
    const auto& lt = tape.layers[static_cast<std::size_t>(l)];

    // MLP branch
    const Matrix<Scalar>& d_mlp_out = d_x;
    g.w2.noalias() += lt.act.transpose() * d_mlp_out;
    g.b2.row(0) += d_mlp_out.colwise().sum();
    Matrix<Scalar> d_act(d_mlp_out.rows(), config.mlp_hidden);
    d_act.noalias() = d_mlp_out * layer.w2.transpose();
    const Matrix<Scalar> d_u =
        (d_act.array() * gelu_grad_from_tanh(lt.u, lt.gelu_t).array()).matrix();
    g.w1.noalias() += lt.n2.transpose() * d_u;
    g.b1.row(0) += d_u.colwise().sum();
    Matrix<Scalar> d_n2(d_u.rows(), config.embed_dim);
    d_n2.noalias() = d_u * layer.w1.transpose();
    Matrix<Scalar> d_x_mid =
        layer_norm_backward(d_n2, lt.ln2_xhat, lt.ln2_inv, layer.ln2_gain,
                            g.ln2_gain, g.ln2_bias);
    d_x_mid += d_x;  // residual skip

    // attention branch
    const Matrix<Scalar>& d_attn_out = d_x_mid;
    g.wo.noalias() += lt.attn_concat.transpose() * d_attn_out;
    Matrix<Scalar> d_concat(d_attn_out.rows(), config.embed_dim);
    d_concat.noalias() = d_attn_out * layer.wo.transpose();

    Matrix<Scalar> d_q = Matrix<Scalar>::Zero(d_concat.rows(), config.embed_dim);
    Matrix<Scalar> d_k = Matrix<Scalar>::Zero(d_concat.rows(), config.embed_dim);
    Matrix<Scalar> d_v = Matrix<Scalar>::Zero(d_concat.rows(), config.embed_dim);
    for (int h = 0; h < heads; ++h) {
      const auto& probs = lt.probs[static_cast<std::size_t>(h)];
      const auto d_ctx = d_concat.middleCols(h * hd, hd);
      Matrix<Scalar> d_probs(probs.rows(), probs.cols());
      d_probs.noalias() = d_ctx * lt.v.middleCols(h * hd, hd).transpose();
      d_v.middleCols(h * hd, hd).noalias() += probs.transpose() * d_ctx;
      const Vector<Scalar> row_dot = (probs.array() * d_probs.array()).rowwise().sum();
      Matrix<Scalar> d_scores =
          (probs.array() * (d_probs.array().colwise() - row_dot.array())).matrix();
      d_scores *= scale;
      d_q.middleCols(h * hd, hd).noalias() += d_scores * lt.k.middleCols(h * hd, hd);
      d_k.middleCols(h * hd, hd).noalias() +=
          d_scores.transpose() * lt.q.middleCols(h * hd, hd);
    }
    g.wq.noalias() += lt.n1.transpose() * d_q;
    g.wk.noalias() += lt.n1.transpose() * d_k;
    g.wv.noalias() += lt.n1.transpose() * d_v;
    Matrix<Scalar> d_n1(d_q.rows(), config.embed_dim);
    d_n1.noalias() = d_q * layer.wq.transpose();
    d_n1.noalias() += d_k * layer.wk.transpose();
    d_n1.noalias() += d_v * layer.wv.transpose();
    Matrix<Scalar> d_x_in = layer_norm_backward(d_n1, lt.ln1_xhat, lt.ln1_inv,
                                                layer.ln1_gain, g.ln1_gain, g.ln1_bias);
    d_x_in += d_x_mid;  // residual skip
    d_x = std::move(d_x_in);
  }
  return d_x;
}

// Routes input-row gradients to the embedding tables and the shared
// patch-feature gradient.
template <typename Scalar>
void scatter_row_gradients(const Parameters<Scalar>& params,
                           const std::vector<RowRole>& roles,
                           const PatchFeatureGrid<Scalar>& grid,
                           const Matrix<Scalar>& d_rows, const AblationFlags& ablation,
                           Parameters<Scalar>& grads, Matrix<Scalar>& d_features) {
  for (int r = 0; r < static_cast<int>(roles.size()); ++r) {
    const RowRole& role = roles[static_cast<std::size_t>(r)];
    switch (role.kind) {
      case RowKind::kVisual:
        d_features.row(role.index) += d_rows.row(r);
        grads.patch_row_pos.row(grid.patch_row(role.index)) += d_rows.row(r);
        grads.patch_col_pos.row(grid.patch_col(role.index)) += d_rows.row(r);
        break;
      case RowKind::kToken:
        grads.token_embedding.row(role.index) += d_rows.row(r);
        grads.text_pos.row(role.position) += d_rows.row(r);
        break;
      case RowKind::kMaskRow:
        grads.token_embedding.row(params.config.mask_id) += d_rows.row(r);
        if (!ablation.no_fusion) d_features.row(role.index) += d_rows.row(r);
        grads.patch_row_pos.row(grid.patch_row(role.index)) += d_rows.row(r);
        grads.patch_col_pos.row(grid.patch_col(role.index)) += d_rows.row(r);
        break;
    }
  }
}

}  // namespace detail

// Joint objective over a batch: per-sample mean text loss plus, for samples
// whose response carries a <seg>, per-sample BCE+Dice mask loss; every
// component is then averaged over the batch. When `grads` is non-null the
// parameter gradients of the same quantity are accumulated into it.
template <typename Scalar>
LossReport evaluate_batch(const Parameters<Scalar>& params,
                          const std::vector<const SyntheticSample<Scalar>*>& batch,
                          const AblationFlags& ablation = {},
                          Parameters<Scalar>* grads = nullptr) {
  if (batch.empty()) {
    throw std::invalid_argument("evaluate_batch: batch must be non-empty");
  }
  const auto& config = params.config;
  const Scalar inv_batch = Scalar(1) / static_cast<Scalar>(batch.size());
  LossReport report;

  for (const auto* sample_ptr : batch) {
    const auto& sample = *sample_ptr;
    const auto features = detail::compute_features(params, sample);
    const int n_patches = features.grid.patch_count();
    Matrix<Scalar> d_features;
    if (grads) d_features = Matrix<Scalar>::Zero(n_patches, config.embed_dim);

    // --- text pass ---
    {
      auto pass = detail::build_text_pass(params, sample, features);
      LayerCacheSet<Scalar> cache;
      ForwardTape<Scalar> tape;
      const auto result = transformer_forward(params, pass.rows, pass.mask, cache,
                                              /*want_lm_logits=*/true,
                                              grads ? &tape : nullptr);
      const auto& logits = *result.lm_logits;
      const int n_targets = static_cast<int>(pass.lm_targets.size());
      Scalar sample_text = Scalar(0);
      Matrix<Scalar> d_logits;
      if (grads) d_logits = Matrix<Scalar>::Zero(logits.rows(), logits.cols());
      for (const auto& [row, target] : pass.lm_targets) {
        const Scalar peak = logits.row(row).maxCoeff();
        Vector<Scalar> probs = (logits.row(row).array() - peak).exp().matrix().transpose();
        const Scalar z = probs.sum();
        sample_text += std::log(z) + peak - logits(row, target);
        if (grads) {
          probs /= z;
          const Scalar w = inv_batch / static_cast<Scalar>(n_targets);
          d_logits.row(row) += probs.transpose() * w;
          d_logits(row, target) -= w;
        }
      }
      sample_text /= static_cast<Scalar>(n_targets);
      report.l_text += static_cast<double>(sample_text) * static_cast<double>(inv_batch);
      report.token_count += n_targets;

      if (grads) {
        grads->lm_head.noalias() += tape.hidden.transpose() * d_logits;
        Matrix<Scalar> d_hidden(logits.rows(), config.embed_dim);
        d_hidden.noalias() = d_logits * params.lm_head.transpose();
        const Matrix<Scalar> d_rows =
            detail::backward_pass(params, tape, d_hidden, *grads);
        detail::scatter_row_gradients(params, pass.roles, features.grid, d_rows,
                                      ablation, *grads, d_features);
      }
    }

    // --- mask pass ---
    const int seg_index = detail::find_first_seg(sample.response, config.seg_id);
    if (seg_index >= 0) {
      auto pass = detail::build_mask_pass(params, sample, features, seg_index, ablation);
      LayerCacheSet<Scalar> cache;
      ForwardTape<Scalar> tape;
      const auto result = transformer_forward(params, pass.rows, pass.mask, cache,
                                              /*want_lm_logits=*/false,
                                              grads ? &tape : nullptr);
      const auto mask_hidden =
          result.hidden_states.middleRows(pass.mask_rows_begin, pass.mask_rows_count);
      const Vector<Scalar> logits = classify_patches(params, mask_hidden);
      const Scalar bce = bce_loss(logits, sample.gt_mask);
      const Scalar dice = dice_loss(logits, sample.gt_mask);
      report.l_bce += static_cast<double>(bce) * static_cast<double>(inv_batch);
      report.l_dice += static_cast<double>(dice) * static_cast<double>(inv_batch);
      report.patch_count += n_patches;

      if (grads) {
        const Scalar n = static_cast<Scalar>(n_patches);
        Vector<Scalar> p(logits.size());
        for (Eigen::Index i = 0; i < logits.size(); ++i) p(i) = sigmoid(logits(i));
        Scalar overlap = Scalar(0), p_sum = Scalar(0), g_sum = Scalar(0);
        for (Eigen::Index i = 0; i < p.size(); ++i) {
          const Scalar g = sample.gt_mask[static_cast<std::size_t>(i)] ? Scalar(1) : Scalar(0);
          overlap += p(i) * g;
          p_sum += p(i);
          g_sum += g;
        }
        const Scalar smoothing = Scalar(1);
        const Scalar numer = Scalar(2) * overlap + smoothing;
        const Scalar denom = p_sum + g_sum + smoothing;
        Vector<Scalar> d_logit(p.size());
        for (Eigen::Index i = 0; i < p.size(); ++i) {
          const Scalar g = sample.gt_mask[static_cast<std::size_t>(i)] ? Scalar(1) : Scalar(0);
          const Scalar clamp_lo = static_cast<Scalar>(detail::kProbClamp);
          const bool clamped = p(i) < clamp_lo || p(i) > Scalar(1) - clamp_lo;
          const Scalar d_bce = clamped ? Scalar(0) : (p(i) - g) / n;
          const Scalar sig_grad = p(i) * (Scalar(1) - p(i));
          const Scalar d_dice = (numer - Scalar(2) * g * denom) / (denom * denom) * sig_grad;
          d_logit(i) = (d_bce + d_dice) * inv_batch;
        }
        grads->classifier_weight.noalias() +=
            (mask_hidden.transpose() * d_logit).eval();
        grads->classifier_bias(0, 0) += d_logit.sum();
        Matrix<Scalar> d_hidden =
            Matrix<Scalar>::Zero(pass.rows.rows(), config.embed_dim);
        d_hidden.middleRows(pass.mask_rows_begin, pass.mask_rows_count).noalias() =
            d_logit * params.classifier_weight.transpose();
        const Matrix<Scalar> d_rows =
            detail::backward_pass(params, tape, d_hidden, *grads);
        detail::scatter_row_gradients(params, pass.roles, features.grid, d_rows,
                                      ablation, *grads, d_features);
      }
    }

    if (grads) {
      grads->patchify_weight.noalias() += features.flat.transpose() * d_features;
      grads->patchify_bias.row(0) += d_features.colwise().sum();
    }
  }

  report.l_mask = report.l_bce + report.l_dice;
  report.l_total = report.l_text + report.l_mask;
  return report;
}

// Single-batch objective without gradients.
template <typename Scalar>
LossReport total_loss(const Parameters<Scalar>& params,
                      const std::vector<SyntheticSample<Scalar>>& batch,
                      const AblationFlags& ablation = {}) {
  std::vector<const SyntheticSample<Scalar>*> pointers;
  pointers.reserve(batch.size());
  for (const auto& sample : batch) pointers.push_back(&sample);
  return evaluate_batch(params, pointers, ablation);
}

}  // namespace allmask
