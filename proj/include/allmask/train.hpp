#pragma once

#include <fstream>
#include <iomanip>
#include <string>
#include <vector>

#include "allmask/autodiff.hpp"
#include "allmask/checkpoint.hpp"

namespace allmask {

struct TrainConfig {
  double learning_rate = 3e-4;
  int steps = 5000;
  int batch_size = 8;
  double warmup_fraction = 0.03;
  double lr_floor_fraction = 0.1;  // decay ends at this fraction of the peak
  double grad_clip = 1.0;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int checkpoint_every = 0;      // 0: write only the final checkpoint
  std::string checkpoint_path;   // empty: keep everything in memory

  void validate() const {
    if (learning_rate < 0) throw std::invalid_argument("TrainConfig: learning_rate < 0");
    if (warmup_fraction < 0 || warmup_fraction >= 1) {
      throw std::invalid_argument("TrainConfig: warmup_fraction must be in [0, 1)");
    }
    if (lr_floor_fraction < 0 || lr_floor_fraction > 1) {
      throw std::invalid_argument("TrainConfig: lr_floor_fraction must be in [0, 1]");
    }
    if (steps < 1 || batch_size < 1) {
      throw std::invalid_argument("TrainConfig: steps and batch_size must be >= 1");
    }
  }
};

struct CurvePoint {
  int step;
  double l_text, l_bce, l_dice, l_total;
  double grad_norm;  // applied (post-clip) global norm
};

template <typename Scalar>
struct TrainOutcome {
  Parameters<Scalar> params;
  std::vector<CurvePoint> curve;
};

inline void write_curve_csv(const std::vector<CurvePoint>& curve, std::ostream& out) {
  out << "step,l_text,l_bce,l_dice,l_total,grad_norm\n";
  out << std::setprecision(8);
  for (const auto& point : curve) {
    out << point.step << ',' << point.l_text << ',' << point.l_bce << ','
        << point.l_dice << ',' << point.l_total << ',' << point.grad_norm << '\n';
  }
}

// Linear warmup to the peak rate, then linear decay towards
// lr_floor_fraction * peak at the final step.
inline double scheduled_lr(const TrainConfig& config, int step) {
  const int warmup = static_cast<int>(config.warmup_fraction * config.steps);
  if (warmup > 0 && step < warmup) {
    return config.learning_rate * static_cast<double>(step + 1) / warmup;
  }
  const int decay_span = std::max(1, config.steps - warmup);
  const double progress = static_cast<double>(step - warmup) / decay_span;
  return config.learning_rate *
         (1.0 - (1.0 - config.lr_floor_fraction) * progress);
}

// One training run over a materialized dataset. Deterministic in
// (config.seed, data, params); batches are drawn i.i.d. per step.
template <typename Scalar>
TrainOutcome<Scalar> train(Parameters<Scalar> params,
                           const std::vector<SyntheticSample<Scalar>>& data,
                           const TrainConfig& config,
                           const AblationFlags& ablation = {}) {
  config.validate();
  if (data.empty()) throw std::invalid_argument("train: empty dataset");

  Parameters<Scalar> m = make_zero_parameters<Scalar>(params.config);
  Parameters<Scalar> v = make_zero_parameters<Scalar>(params.config);
  Parameters<Scalar> grads = make_zero_parameters<Scalar>(params.config);

  TrainOutcome<Scalar> outcome;
  outcome.curve.reserve(static_cast<std::size_t>(config.steps));

  for (int step = 0; step < config.steps; ++step) {
    const std::uint64_t batch_seed = mix_seed(config.seed, 0xba7c4000u + static_cast<std::uint64_t>(step));
    Rng rng(batch_seed);
    std::vector<const SyntheticSample<Scalar>*> batch;
    batch.reserve(static_cast<std::size_t>(config.batch_size));
    for (int b = 0; b < config.batch_size; ++b) {
      batch.push_back(&data[static_cast<std::size_t>(
          rng.next_int(0, static_cast<int>(data.size()) - 1))]);
    }

    grads.for_each_tensor([](const std::string&, Matrix<Scalar>& t) { t.setZero(); });
    const LossReport report = evaluate_batch(params, batch, ablation, &grads);
    if (!std::isfinite(report.l_total)) {
      throw std::runtime_error("train: non-finite loss at step " + std::to_string(step) +
                               " (batch seed " + std::to_string(batch_seed) + ")");
    }

    double norm_sq = 0.0;
    grads.for_each_tensor([&](const std::string&, Matrix<Scalar>& t) {
      norm_sq += static_cast<double>(t.template cast<double>().squaredNorm());
    });
    const double norm = std::sqrt(norm_sq);
    double clip_scale = 1.0;
    if (config.grad_clip > 0 && norm > config.grad_clip) {
      clip_scale = config.grad_clip / norm;
    }
    const double applied_norm = norm * clip_scale;

    const double lr = scheduled_lr(config, step);
    const double bias1 = 1.0 - std::pow(config.beta1, step + 1);
    const double bias2 = 1.0 - std::pow(config.beta2, step + 1);

    std::vector<Matrix<Scalar>*> m_slots, v_slots, g_slots;
    m.for_each_tensor([&](const std::string&, Matrix<Scalar>& t) { m_slots.push_back(&t); });
    v.for_each_tensor([&](const std::string&, Matrix<Scalar>& t) { v_slots.push_back(&t); });
    grads.for_each_tensor([&](const std::string&, Matrix<Scalar>& t) { g_slots.push_back(&t); });
    std::size_t slot = 0;
    params.for_each_tensor([&](const std::string&, Matrix<Scalar>& tensor) {
      Matrix<Scalar>& mt = *m_slots[slot];
      Matrix<Scalar>& vt = *v_slots[slot];
      Matrix<Scalar>& gt = *g_slots[slot];
      ++slot;
      if (clip_scale != 1.0) gt *= static_cast<Scalar>(clip_scale);
      mt = static_cast<Scalar>(config.beta1) * mt + static_cast<Scalar>(1.0 - config.beta1) * gt;
      vt.array() = static_cast<Scalar>(config.beta2) * vt.array() +
                   static_cast<Scalar>(1.0 - config.beta2) * gt.array().square();
      tensor.array() -= static_cast<Scalar>(lr) *
                        (mt.array() / static_cast<Scalar>(bias1)) /
                        ((vt.array() / static_cast<Scalar>(bias2)).sqrt() +
                         static_cast<Scalar>(config.adam_eps));
    });

    outcome.curve.push_back({step, report.l_text, report.l_bce, report.l_dice,
                             report.l_total, applied_norm});

    if (!config.checkpoint_path.empty() && config.checkpoint_every > 0 &&
        (step + 1) % config.checkpoint_every == 0 && step + 1 < config.steps) {
      save_checkpoint(params, config.checkpoint_path);
    }
  }

  if (!config.checkpoint_path.empty()) {
    save_checkpoint(params, config.checkpoint_path);
  }
  outcome.params = std::move(params);
  return outcome;
}

struct GradCheckReport {
  double max_rel_error = 0.0;
  int coords_checked = 0;
  std::string worst_tensor;
  int worst_row = -1;
  int worst_col = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Central-difference check of the analytic gradient of the total loss on a
// single sample. Samples coords_per_tensor coordinates from every tensor, so
// all parameter groups are covered. Relative error is measured against the
// numeric value with a small floor to absorb round-off on near-zero entries.
template <typename Scalar>
GradCheckReport finite_difference_gradcheck(const Parameters<Scalar>& params,
                                            const SyntheticSample<Scalar>& sample,
                                            Scalar epsilon, int coords_per_tensor,
                                            std::uint64_t seed,
                                            const AblationFlags& ablation = {},
                                            double floor = 1e-6) {
  Parameters<Scalar> work = params;
  const std::vector<const SyntheticSample<Scalar>*> batch = {&sample};

  Parameters<Scalar> grads = make_zero_parameters<Scalar>(params.config);
  evaluate_batch(work, batch, ablation, &grads);

  auto loss_at = [&]() { return evaluate_batch(work, batch, ablation).l_total; };

  std::vector<const Matrix<Scalar>*> grad_slots;
  grads.for_each_tensor(
      [&](const std::string&, const Matrix<Scalar>& t) { grad_slots.push_back(&t); });

  GradCheckReport report;
  Rng rng(mix_seed(seed, 0x9cadc));
  std::size_t slot = 0;
  work.for_each_tensor([&](const std::string& name, Matrix<Scalar>& tensor) {
    const Matrix<Scalar>& grad = *grad_slots[slot++];
    for (int c = 0; c < coords_per_tensor; ++c) {
      const int row = rng.next_int(0, static_cast<int>(tensor.rows()) - 1);
      const int col = rng.next_int(0, static_cast<int>(tensor.cols()) - 1);
      const Scalar original = tensor(row, col);
      tensor(row, col) = original + epsilon;
      const double loss_plus = loss_at();
      tensor(row, col) = original - epsilon;
      const double loss_minus = loss_at();
      tensor(row, col) = original;
      const double numeric = (loss_plus - loss_minus) / (2.0 * static_cast<double>(epsilon));
      const double analytic = static_cast<double>(grad(row, col));
      const double rel = std::abs(analytic - numeric) / std::max(std::abs(numeric), floor);
      ++report.coords_checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_tensor = name;
        report.worst_row = row;
        report.worst_col = col;
        report.worst_analytic = analytic;
        report.worst_numeric = numeric;
      }
    }
  });
  return report;
}

}  // namespace allmask
