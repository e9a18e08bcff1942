#pragma once

#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "allmask/attention_mask.hpp"
#include "allmask/autodiff.hpp"
#include "allmask/losses.hpp"
#include "allmask/model.hpp"
#include "allmask/refine.hpp"

namespace allmask {

// Snapshot taken at each emitted <seg>: the dialogue tokens up to and
// including the trigger, plus the key/value cache covering the visual prefix
// and those tokens.
template <typename Scalar>
struct SegCapture {
  TokenSequence hist;             // instruction ++ generated tokens, ends with <seg>
  LayerCacheSet<Scalar> cache;    // cached_len = patches + |hist|
  int grid_side = 0;
};

struct MaskPrediction {
  std::vector<double> logits;
  std::vector<double> probabilities;     // sigmoid(logits)
  std::vector<std::uint8_t> binary;      // probability > 0.5
  int grid_side = 0;

  int patch_count() const { return static_cast<int>(binary.size()); }
};

inline MaskPrediction make_mask_prediction(const std::vector<double>& logits, int grid_side) {
  MaskPrediction mask;
  mask.grid_side = grid_side;
  mask.logits = logits;
  mask.probabilities.reserve(logits.size());
  mask.binary.reserve(logits.size());
  for (double z : logits) {
    const double p = sigmoid(z);
    mask.probabilities.push_back(p);
    mask.binary.push_back(p > 0.5 ? 1 : 0);
  }
  return mask;
}

template <typename Scalar>
struct PipelineResult {
  TokenSequence response;
  std::vector<MaskPrediction> masks;
  // present iff refinement ran; one refined patch mask per prediction
  std::optional<std::vector<std::vector<std::uint8_t>>> refined;
  int phase1_steps = 0;
  int phase2_calls = 0;
};

struct PipelineOptions {
  int max_new_tokens = 32;
  bool refine = false;
  double refine_tolerance = 0.1;
  AblationFlags ablation;
};

// Phase 1: greedy autoregressive decoding over [patches ++ instruction],
// capturing a cache snapshot after each emitted <seg>. Ties break towards
// the lowest token id (Eigen maxCoeff convention).
template <typename Scalar>
std::pair<TokenSequence, std::vector<SegCapture<Scalar>>> generate_autoregressive(
    const Parameters<Scalar>& params, const TokenSequence& instruction,
    const PatchFeatureGrid<Scalar>& patch_features, int max_new_tokens) {
  const auto& config = params.config;
  if (max_new_tokens < 1) {
    throw std::invalid_argument("generate_autoregressive: max_new_tokens must be >= 1");
  }
  for (int id : instruction) {
    if (id == config.mask_id) {
      throw std::invalid_argument("generate_autoregressive: instruction contains [mask]");
    }
  }

  const int n_patches = patch_features.patch_count();
  const int instr_len = static_cast<int>(instruction.size());
  Matrix<Scalar> prefix(n_patches + instr_len, config.embed_dim);
  prefix.topRows(n_patches) = embed_patches(params, patch_features);
  prefix.bottomRows(instr_len) = embed_tokens(params, instruction, 0);

  LayerCacheSet<Scalar> cache(config.layers, config.embed_dim);
  auto result = transformer_forward(params, prefix,
                                    construct_causal_mask(n_patches + instr_len), cache,
                                    /*want_lm_logits=*/true);

  TokenSequence generated;
  std::vector<SegCapture<Scalar>> captures;
  Eigen::Index next = 0;
  result.lm_logits->row(result.lm_logits->rows() - 1).maxCoeff(&next);
  for (int step = 0; step < max_new_tokens; ++step) {
    const int token = static_cast<int>(next);
    generated.push_back(token);
    if (token == config.eos_id) break;

    // feed the emitted token; its keys/values enter the cache here
    const Matrix<Scalar> row =
        embed_tokens(params, TokenSequence{token}, instr_len + step);
    result = transformer_forward(params, row, causal_step_mask(cache.cached_len(), 1),
                                 cache, /*want_lm_logits=*/true);
    result.lm_logits->row(0).maxCoeff(&next);

    if (token == config.seg_id) {
      SegCapture<Scalar> capture;
      capture.hist = instruction;
      capture.hist.insert(capture.hist.end(), generated.begin(), generated.end());
      capture.cache = cache;  // snapshot including the <seg> keys/values
      capture.grid_side = patch_features.grid_side;
      captures.push_back(std::move(capture));
    }
  }
  return {std::move(generated), std::move(captures)};
}

// Phase 2: one non-autoregressive forward over the mask placeholders against
// the captured cache. The capture itself is left untouched.
template <typename Scalar>
MaskPrediction all_mask_generate(const Parameters<Scalar>& params,
                                 const SegCapture<Scalar>& capture,
                                 const PatchFeatureGrid<Scalar>& patch_features,
                                 const AblationFlags& ablation = {}) {
  const auto& config = params.config;
  const int n_patches = patch_features.patch_count();
  if (n_patches > config.max_grid_side * config.max_grid_side) {
    throw capacity_error("all_mask_generate: patch count exceeds capacity");
  }
  const Matrix<Scalar> mask_rows =
      fuse_mask_embeddings(params, patch_features, !ablation.no_fusion);
  const int history_len = capture.cache.cached_len();
  const HybridAttentionMask attn =
      ablation.no_hybrid ? causal_block_mask_with_cache(history_len, n_patches)
                         : hybrid_mask_with_cache(history_len, n_patches);

  LayerCacheSet<Scalar> cache = capture.cache;  // work on a copy
  const auto result =
      transformer_forward(params, mask_rows, attn, cache, /*want_lm_logits=*/false);
  const Vector<Scalar> logits = classify_patches(params, result.hidden_states);

  std::vector<double> logit_values(static_cast<std::size_t>(n_patches));
  for (int n = 0; n < n_patches; ++n) {
    logit_values[static_cast<std::size_t>(n)] = static_cast<double>(logits(n));
  }
  return make_mask_prediction(logit_values, patch_features.grid_side);
}

// Full two-phase pipeline; masks are appended in <seg> emission order.
template <typename Scalar>
PipelineResult<Scalar> run_pipeline(const Parameters<Scalar>& params,
                                    const TokenSequence& instruction,
                                    const Image<Scalar>& pixels, int grid_side,
                                    const PipelineOptions& options = {}) {
  const auto features =
      patchify(pixels, grid_side, params.patchify_weight, params.patchify_bias);

  PipelineResult<Scalar> result;
  auto [generated, captures] =
      generate_autoregressive(params, instruction, features, options.max_new_tokens);
  result.response = std::move(generated);
  result.phase1_steps = static_cast<int>(result.response.size());

  if (options.refine) result.refined.emplace();
  for (const auto& capture : captures) {
    MaskPrediction mask = all_mask_generate(params, capture, features, options.ablation);
    if (options.refine) {
      result.refined->push_back(refine_mask(pixels, mask.binary, mask.grid_side,
                                            static_cast<Scalar>(options.refine_tolerance)));
    }
    result.masks.push_back(std::move(mask));
    ++result.phase2_calls;
  }
  return result;
}

// Spec-level keypoint entry point over a mask prediction.
inline std::optional<Keypoint> sample_keypoint(const MaskPrediction& mask, int cell_scale) {
  return sample_keypoint_cells(mask.binary, mask.grid_side, cell_scale);
}

template <typename Scalar>
struct BaselineResult {
  MaskPrediction mask;
  int steps = 0;            // always = patch count
  int decoding_errors = 0;  // emitted tokens outside {fg, bg}
};

// Next-token paradigm: after the same visual/text prefix, force one
// autoregressive step per patch in row-major order and read the mask off the
// emitted fg/bg words. Tokens outside {fg, bg} count as decoding errors and
// default the patch to background.
template <typename Scalar>
BaselineResult<Scalar> baseline_next_token_segment(
    const Parameters<Scalar>& params, const TokenSequence& instruction,
    const PatchFeatureGrid<Scalar>& patch_features) {
  const auto& config = params.config;
  if (config.fg_id < 0 || config.bg_id < 0) {
    throw config_error("baseline_next_token_segment: model lacks fg/bg vocabulary");
  }
  const int n_patches = patch_features.patch_count();
  const int instr_len = static_cast<int>(instruction.size());
  if (instr_len + n_patches > config.max_text_positions) {
    throw capacity_error("baseline_next_token_segment: sequence exceeds text positions");
  }

  Matrix<Scalar> prefix(n_patches + instr_len, config.embed_dim);
  prefix.topRows(n_patches) = embed_patches(params, patch_features);
  prefix.bottomRows(instr_len) = embed_tokens(params, instruction, 0);
  LayerCacheSet<Scalar> cache(config.layers, config.embed_dim);
  auto result = transformer_forward(params, prefix,
                                    construct_causal_mask(n_patches + instr_len), cache,
                                    /*want_lm_logits=*/true);

  BaselineResult<Scalar> baseline;
  std::vector<double> logits(static_cast<std::size_t>(n_patches), 0.0);
  Eigen::Index next = 0;
  result.lm_logits->row(result.lm_logits->rows() - 1).maxCoeff(&next);
  for (int n = 0; n < n_patches; ++n) {
    const int token = static_cast<int>(next);
    bool foreground = false;
    if (token == config.fg_id) {
      foreground = true;
    } else if (token != config.bg_id) {
      ++baseline.decoding_errors;  // counted; patch defaults to background
    }
    logits[static_cast<std::size_t>(n)] = foreground ? 10.0 : -10.0;
    ++baseline.steps;
    if (n + 1 < n_patches) {
      const Matrix<Scalar> row =
          embed_tokens(params, TokenSequence{token}, instr_len + n);
      result = transformer_forward(params, row, causal_step_mask(cache.cached_len(), 1),
                                   cache, /*want_lm_logits=*/true);
      result.lm_logits->row(0).maxCoeff(&next);
    }
  }
  baseline.mask = make_mask_prediction(logits, patch_features.grid_side);
  return baseline;
}

// '#' foreground / '.' background, one line per patch row.
inline std::string mask_to_grid_string(const std::vector<std::uint8_t>& mask, int grid_side) {
  std::ostringstream out;
  for (int r = 0; r < grid_side; ++r) {
    for (int c = 0; c < grid_side; ++c) {
      out << (mask[static_cast<std::size_t>(r * grid_side + c)] ? '#' : '.');
    }
    out << '\n';
  }
  return out.str();
}

// Demo printout: response text, one grid per mask (refined grids when
// present), then the step-count summary line.
template <typename Scalar>
std::string format_pipeline_result(const PipelineResult<Scalar>& result,
                                   const Vocabulary& vocab, int grid_side) {
  std::ostringstream out;
  out << vocab.to_text(result.response) << '\n';
  for (std::size_t i = 0; i < result.masks.size(); ++i) {
    const auto& binary =
        result.refined ? (*result.refined)[i] : result.masks[i].binary;
    out << mask_to_grid_string(binary, result.masks[i].grid_side);
  }
  const int n = grid_side * grid_side;
  out << "phase1=" << result.phase1_steps << " phase2=" << result.phase2_calls
      << " baseline_equiv=" << n * result.phase2_calls << '\n';
  return out.str();
}

}  // namespace allmask
