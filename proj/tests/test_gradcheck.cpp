#include "doctest.h"

#include "allmask/train.hpp"

using namespace allmask;

namespace {

ModelConfig check_config() {
  ModelConfig config = make_default_config(make_toy_vocabulary());
  config.embed_dim = 16;
  config.layers = 2;
  config.heads = 2;
  config.mlp_hidden = 24;
  config.max_text_positions = 64;
  config.max_grid_side = 8;
  config.cell_scale = 2;
  config.init_seed = 5;
  return config;
}

}  // namespace

TEST_CASE("analytic gradients match central differences on all groups") {
  const Vocabulary vocab = make_toy_vocabulary();
  const auto config = check_config();
  const auto params = init_parameters<double>(config);
  const auto sample = make_sample<double>(17, 4, false, vocab, Paradigm::kAllMask,
                                          config.cell_scale);
  REQUIRE(sample.scene.has_target());

  const auto report =
      finite_difference_gradcheck<double>(params, sample, 1e-4, 8, 99);
  CHECK(report.coords_checked >= 200);
  INFO("worst tensor: " << report.worst_tensor << " (" << report.worst_row << ","
                        << report.worst_col << ") analytic=" << report.worst_analytic
                        << " numeric=" << report.worst_numeric);
  CHECK(report.max_rel_error < 1e-3);
}

TEST_CASE("gradcheck covers the ablated paths too") {
  const Vocabulary vocab = make_toy_vocabulary();
  const auto config = check_config();
  const auto params = init_parameters<double>(config);
  const auto sample = make_sample<double>(23, 4, false, vocab, Paradigm::kAllMask,
                                          config.cell_scale);

  AblationFlags no_fusion;
  no_fusion.no_fusion = true;
  CHECK(finite_difference_gradcheck<double>(params, sample, 1e-4, 4, 7, no_fusion)
            .max_rel_error < 1e-3);

  AblationFlags no_hybrid;
  no_hybrid.no_hybrid = true;
  CHECK(finite_difference_gradcheck<double>(params, sample, 1e-4, 4, 7, no_hybrid)
            .max_rel_error < 1e-3);
}

TEST_CASE("a corrupted gradient is detected") {
  const Vocabulary vocab = make_toy_vocabulary();
  const auto config = check_config();
  const auto params = init_parameters<double>(config);
  const auto sample = make_sample<double>(17, 4, false, vocab, Paradigm::kAllMask,
                                          config.cell_scale);
  const std::vector<const SyntheticSample<double>*> batch = {&sample};

  Parameters<double> grads = make_zero_parameters<double>(config);
  evaluate_batch(params, batch, {}, &grads);
  grads.lm_head *= 2.0;  // injected fault on one array

  // recompute the numeric derivative on a handful of lm_head coordinates
  Parameters<double> work = params;
  double worst = 0.0;
  Rng rng(3);
  for (int c = 0; c < 16; ++c) {
    const int row = rng.next_int(0, static_cast<int>(work.lm_head.rows()) - 1);
    const int col = rng.next_int(0, static_cast<int>(work.lm_head.cols()) - 1);
    const double epsilon = 1e-4;
    const double original = work.lm_head(row, col);
    work.lm_head(row, col) = original + epsilon;
    const double plus = evaluate_batch(work, batch).l_total;
    work.lm_head(row, col) = original - epsilon;
    const double minus = evaluate_batch(work, batch).l_total;
    work.lm_head(row, col) = original;
    const double numeric = (plus - minus) / (2 * epsilon);
    const double rel =
        std::abs(grads.lm_head(row, col) - numeric) / std::max(std::abs(numeric), 1e-6);
    worst = std::max(worst, rel);
  }
  CHECK(worst > 0.5);
}

TEST_CASE("gradients stay finite on a degenerate all-background sample") {
  const Vocabulary vocab = make_toy_vocabulary();
  const auto config = check_config();
  const auto params = init_parameters<double>(config);

  // hand-built degenerate sample: zero pixels, all-background mask
  SyntheticSample<double> sample;
  sample.scene.grid_side = 4;
  sample.scene.objects.push_back({Shape::kRect, Color::kRed, {{0, 0}}});
  sample.scene.target_index = 0;
  sample.cell_scale = config.cell_scale;
  sample.pixels.r = Matrix<double>::Zero(8, 8);
  sample.pixels.g = Matrix<double>::Zero(8, 8);
  sample.pixels.b = Matrix<double>::Zero(8, 8);
  sample.instruction = {vocab.bos(), vocab.id("segment"), vocab.id("the"),
                        vocab.id("red"), vocab.id("rect")};
  sample.response = {vocab.id("the"), vocab.id("mask"), vocab.id("is"), vocab.seg(),
                     vocab.eos()};
  sample.gt_mask.assign(16, 0);

  const std::vector<const SyntheticSample<double>*> batch = {&sample};
  Parameters<double> grads = make_zero_parameters<double>(config);
  const auto report = evaluate_batch(params, batch, {}, &grads);
  CHECK(std::isfinite(report.l_total));
  grads.for_each_tensor([&](const std::string&, const Matrix<double>& tensor) {
    CHECK(tensor.allFinite());
  });
}
