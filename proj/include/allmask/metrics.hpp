#pragma once

#include <algorithm>
#include <chrono>
#include <ostream>
#include <string>
#include <vector>

#include "allmask/dataset.hpp"
#include "allmask/pipeline.hpp"

namespace allmask {

// Intersection-over-union with the no-object convention: two empty masks
// score 1.0, exactly one empty mask scores 0.0.
inline double iou(const std::vector<std::uint8_t>& pred,
                  const std::vector<std::uint8_t>& gt) {
  if (pred.size() != gt.size()) {
    throw std::invalid_argument("iou: length mismatch");
  }
  int intersection = 0, uni = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] != 0, g = gt[i] != 0;
    intersection += p && g;
    uni += p || g;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(intersection) / static_cast<double>(uni);
}

enum class EvalMode { kAllMask, kAllMaskRefine, kNextToken };

inline const char* eval_mode_name(EvalMode mode) {
  switch (mode) {
    case EvalMode::kAllMask: return "allmask";
    case EvalMode::kAllMaskRefine: return "allmask+refine";
    case EvalMode::kNextToken: return "nexttoken";
  }
  return "";
}

inline EvalMode parse_eval_mode(const std::string& name, bool refine) {
  if (name == "allmask") return refine ? EvalMode::kAllMaskRefine : EvalMode::kAllMask;
  if (name == "nexttoken") return EvalMode::kNextToken;
  throw config_error("unknown mode '" + name + "'");
}

// Predicted/ground-truth pair retained for oracle recomputation.
struct MaskPairDump {
  int sample_index;
  std::vector<std::uint8_t> pred;
  std::vector<std::uint8_t> gt;
};

struct EvalReport {
  std::vector<double> per_sample_iou;
  double giou = 0.0;  // mean of per-sample IoU
  double ciou = 0.0;  // sum of intersections / sum of unions
  int n_samples = 0;
  std::string mode;
  long long phase1_steps = 0;
  long long phase2_calls = 0;
  long long baseline_steps = 0;
  int no_object_correct = 0;  // no-object samples answered without <seg>
  int no_object_total = 0;
  std::vector<MaskPairDump> dumps;
};

// Per-sample scoring: every emitted mask is paired with its ground truth in
// emission order (the toy task carries at most one target per sample);
// unmatched sides pair against an empty mask. Pairs that are empty on both
// sides carry no area and are skipped. The per-sample IoU is the mean over
// the remaining pairs; a sample with none (a refusal matched by a refusal)
// scores 1.0.
template <typename Scalar>
EvalReport evaluate(const Parameters<Scalar>& params,
                    const std::vector<SyntheticSample<Scalar>>& split, EvalMode mode,
                    const AblationFlags& ablation = {},
                    const PipelineOptions& base_options = {}) {
  if (split.empty()) throw std::invalid_argument("evaluate: empty split");
  EvalReport report;
  report.mode = eval_mode_name(mode);
  report.n_samples = static_cast<int>(split.size());

  long long inter_sum = 0, union_sum = 0;
  for (int index = 0; index < static_cast<int>(split.size()); ++index) {
    const auto& sample = split[static_cast<std::size_t>(index)];
    const int grid = sample.scene.grid_side;
    const std::size_t n = sample.gt_mask.size();
    const std::vector<std::uint8_t> empty_mask(n, 0);
    const bool gt_has_target = sample.scene.has_target();

    std::vector<std::vector<std::uint8_t>> predicted;
    if (mode == EvalMode::kNextToken) {
      const auto features = patchify(sample.pixels, grid, params.patchify_weight,
                                     params.patchify_bias);
      const auto baseline = baseline_next_token_segment(params, sample.instruction, features);
      report.baseline_steps += baseline.steps;
      // the baseline always answers with one mask; an all-background one
      // counts as a refusal pair below
      predicted.push_back(baseline.mask.binary);
      const bool pred_empty =
          std::none_of(predicted[0].begin(), predicted[0].end(),
                       [](std::uint8_t b) { return b != 0; });
      if (!gt_has_target) {
        report.no_object_total += 1;
        report.no_object_correct += pred_empty ? 1 : 0;
      }
      if (pred_empty && !gt_has_target) predicted.clear();
    } else {
      PipelineOptions options = base_options;
      options.ablation = ablation;
      options.refine = mode == EvalMode::kAllMaskRefine;
      const auto result = run_pipeline(params, sample.instruction, sample.pixels,
                                       grid, options);
      report.phase1_steps += result.phase1_steps;
      report.phase2_calls += result.phase2_calls;
      for (std::size_t m = 0; m < result.masks.size(); ++m) {
        predicted.push_back(result.refined ? (*result.refined)[m]
                                           : result.masks[m].binary);
      }
      if (!gt_has_target) {
        report.no_object_total += 1;
        report.no_object_correct += predicted.empty() ? 1 : 0;
      }
    }

    std::vector<const std::vector<std::uint8_t>*> gts;
    if (gt_has_target) gts.push_back(&sample.gt_mask);
    const std::size_t pairs = std::max(predicted.size(), gts.size());

    double total = 0.0;
    int scored = 0;
    for (std::size_t pair = 0; pair < pairs; ++pair) {
      const auto& pred = pair < predicted.size() ? predicted[pair] : empty_mask;
      const auto& gt = pair < gts.size() ? *gts[pair] : empty_mask;
      const bool pred_any = std::any_of(pred.begin(), pred.end(),
                                        [](std::uint8_t b) { return b != 0; });
      const bool gt_any = std::any_of(gt.begin(), gt.end(),
                                      [](std::uint8_t b) { return b != 0; });
      if (!pred_any && !gt_any) continue;  // no area on either side
      total += iou(pred, gt);
      ++scored;
      for (std::size_t i = 0; i < n; ++i) {
        const bool p = pred[i] != 0, g = gt[i] != 0;
        inter_sum += p && g;
        union_sum += p || g;
      }
      report.dumps.push_back({index, pred, gt});
    }
    report.per_sample_iou.push_back(scored == 0 ? 1.0
                                                : total / static_cast<double>(scored));
  }

  double iou_sum = 0.0;
  for (double value : report.per_sample_iou) iou_sum += value;
  report.giou = iou_sum / static_cast<double>(report.per_sample_iou.size());
  report.ciou = union_sum == 0
                    ? 1.0
                    : static_cast<double>(inter_sum) / static_cast<double>(union_sum);
  return report;
}

struct StepCounts {
  int phase1 = 0;
  int phase2 = 0;
  int baseline_equivalent = 0;  // N * phase2
};

template <typename Scalar>
StepCounts count_steps(const PipelineResult<Scalar>& result) {
  StepCounts counts;
  counts.phase1 = result.phase1_steps;
  counts.phase2 = result.phase2_calls;
  if (!result.masks.empty()) {
    counts.baseline_equivalent = result.masks.front().patch_count() * result.phase2_calls;
  }
  return counts;
}

struct BenchStats {
  std::string mode;
  int n_patches = 0;
  long long steps = 0;
  double median_ms = 0.0;
  double p90_ms = 0.0;
  std::vector<double> samples_ms;
};

inline double percentile(std::vector<double> values, double fraction) {
  std::sort(values.begin(), values.end());
  const std::size_t rank = static_cast<std::size_t>(
      std::max<long long>(0, static_cast<long long>(
                                 std::ceil(fraction * static_cast<double>(values.size()))) -
                                 1));
  return values[std::min(rank, values.size() - 1)];
}

// Wall-clock protocol: single fixed sample, one discarded warm-up run, then
// `repeats` timed runs on one thread; reports median and p90.
template <typename Scalar>
BenchStats benchmark(const Parameters<Scalar>& params,
                     const SyntheticSample<Scalar>& sample, int repeats, EvalMode mode,
                     const PipelineOptions& base_options = {}) {
  if (repeats < 5) throw std::invalid_argument("benchmark: repeats must be >= 5");
  BenchStats stats;
  stats.mode = eval_mode_name(mode);
  const int grid = sample.scene.grid_side;
  stats.n_patches = grid * grid;

  auto run_once = [&]() -> long long {
    if (mode == EvalMode::kNextToken) {
      const auto features = patchify(sample.pixels, grid, params.patchify_weight,
                                     params.patchify_bias);
      return baseline_next_token_segment(params, sample.instruction, features).steps;
    }
    PipelineOptions options = base_options;
    options.refine = mode == EvalMode::kAllMaskRefine;
    const auto result =
        run_pipeline(params, sample.instruction, sample.pixels, grid, options);
    return result.phase2_calls;
  };

  run_once();  // warm-up, discarded
  for (int r = 0; r < repeats; ++r) {
    const auto start = std::chrono::steady_clock::now();
    stats.steps = run_once();
    const auto stop = std::chrono::steady_clock::now();
    stats.samples_ms.push_back(
        std::chrono::duration<double, std::milli>(stop - start).count());
  }
  stats.median_ms = percentile(stats.samples_ms, 0.5);
  stats.p90_ms = percentile(stats.samples_ms, 0.9);
  return stats;
}

inline void write_eval_csv(const EvalReport& report, std::ostream& out) {
  out << "index,iou\n";
  for (std::size_t i = 0; i < report.per_sample_iou.size(); ++i) {
    out << i << ',' << report.per_sample_iou[i] << '\n';
  }
}

inline void write_eval_table(const EvalReport& report, std::ostream& out) {
  out << "mode            " << report.mode << '\n'
      << "samples         " << report.n_samples << '\n'
      << "gIoU            " << report.giou << '\n'
      << "cIoU            " << report.ciou << '\n'
      << "phase1 steps    " << report.phase1_steps << '\n'
      << "phase2 calls    " << report.phase2_calls << '\n'
      << "baseline steps  " << report.baseline_steps << '\n';
  if (report.no_object_total > 0) {
    out << "no-object ok    " << report.no_object_correct << '/'
        << report.no_object_total << '\n';
  }
}

inline void write_bench_csv(const BenchStats& stats, std::ostream& out) {
  out << "mode,N,steps,median_ms,p90_ms\n";
  out << stats.mode << ',' << stats.n_patches << ',' << stats.steps << ','
      << stats.median_ms << ',' << stats.p90_ms << '\n';
}

}  // namespace allmask
