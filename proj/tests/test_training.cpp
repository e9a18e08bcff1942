#include "doctest.h"

#include <sstream>

#include "allmask/metrics.hpp"
#include "allmask/train.hpp"

using namespace allmask;

namespace {

ModelConfig tiny_config() {
  ModelConfig config = make_default_config(make_toy_vocabulary());
  config.embed_dim = 32;
  config.layers = 2;
  config.heads = 4;
  config.mlp_hidden = 48;
  config.max_text_positions = 64;
  config.max_grid_side = 8;
  config.cell_scale = 2;
  return config;
}

}  // namespace

TEST_CASE("zero learning rate leaves parameters unchanged") {
  const Vocabulary vocab = make_toy_vocabulary();
  const auto config = tiny_config();
  const auto params = init_parameters<float>(config);
  const auto data = make_dataset<float>(0, 8, {4}, false, vocab, Paradigm::kAllMask,
                                        config.cell_scale);
  TrainConfig train_config;
  train_config.learning_rate = 0.0;
  train_config.steps = 5;
  train_config.batch_size = 2;
  const auto outcome = train(params, data, train_config);

  std::vector<const Matrix<float>*> before, after;
  params.for_each_tensor([&](const std::string&, const Matrix<float>& t) { before.push_back(&t); });
  outcome.params.for_each_tensor(
      [&](const std::string&, const Matrix<float>& t) { after.push_back(&t); });
  for (std::size_t i = 0; i < before.size(); ++i) {
    CHECK(*before[i] == *after[i]);
  }
}

TEST_CASE("applied gradient norm respects the clip") {
  const Vocabulary vocab = make_toy_vocabulary();
  const auto config = tiny_config();
  const auto params = init_parameters<float>(config);
  const auto data = make_dataset<float>(0, 16, {4}, false, vocab, Paradigm::kAllMask,
                                        config.cell_scale);
  TrainConfig train_config;
  train_config.steps = 12;
  train_config.batch_size = 2;
  train_config.grad_clip = 1.0;
  const auto outcome = train(params, data, train_config);
  REQUIRE(outcome.curve.size() == 12);
  for (const auto& point : outcome.curve) {
    CHECK(point.grad_norm <= 1.0 + 1e-6);
    CHECK(std::isfinite(point.l_total));
  }
}

TEST_CASE("training is bit-reproducible for a fixed seed triple") {
  const Vocabulary vocab = make_toy_vocabulary();
  const auto config = tiny_config();
  const auto params = init_parameters<float>(config);
  const auto data = make_dataset<float>(3, 12, {4}, false, vocab, Paradigm::kAllMask,
                                        config.cell_scale);
  TrainConfig train_config;
  train_config.steps = 15;
  train_config.batch_size = 3;
  train_config.seed = 9;

  const auto first = train(params, data, train_config);
  const auto second = train(params, data, train_config);
  std::vector<const Matrix<float>*> a, b;
  first.params.for_each_tensor([&](const std::string&, const Matrix<float>& t) { a.push_back(&t); });
  second.params.for_each_tensor([&](const std::string&, const Matrix<float>& t) { b.push_back(&t); });
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(*a[i] == *b[i]);
  REQUIRE(first.curve.size() == second.curve.size());
  for (std::size_t i = 0; i < first.curve.size(); ++i) {
    CHECK(first.curve[i].l_total == second.curve[i].l_total);
  }
}

TEST_CASE("learning-rate schedule warms up then decays linearly") {
  TrainConfig config;
  config.learning_rate = 1.0;
  config.steps = 100;
  config.warmup_fraction = 0.1;
  config.lr_floor_fraction = 0.0;
  CHECK(scheduled_lr(config, 0) == doctest::Approx(0.1));
  CHECK(scheduled_lr(config, 9) == doctest::Approx(1.0));
  CHECK(scheduled_lr(config, 10) == doctest::Approx(1.0));
  CHECK(scheduled_lr(config, 99) > 0.0);
  CHECK(scheduled_lr(config, 55) == doctest::Approx(0.5));

  config.lr_floor_fraction = 0.1;  // decay ends at a tenth of the peak
  CHECK(scheduled_lr(config, 10) == doctest::Approx(1.0));
  CHECK(scheduled_lr(config, 100) == doctest::Approx(0.1));
}

TEST_CASE("loss curve CSV has the documented columns") {
  std::vector<CurvePoint> curve = {{0, 1.0, 0.5, 0.25, 1.75, 0.9}};
  std::ostringstream out;
  write_curve_csv(curve, out);
  CHECK(out.str() ==
        "step,l_text,l_bce,l_dice,l_total,grad_norm\n"
        "0,1,0.5,0.25,1.75,0.9\n");
}

TEST_CASE("teacher-forced training uses the same hybrid mask as inference") {
  // the training pass builds construct_hybrid_mask(H, N); assert the exact
  // mask equality against the inference-side cached rows
  const int history = 13, n = 16;
  const auto full = construct_hybrid_mask(history, n);
  const auto cached = hybrid_mask_with_cache(history, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < history + n; ++j) {
      CHECK(cached.allow(i, j) == full.allow(history + i, j));
    }
  }
}

TEST_CASE("training fits both paradigms on an easy split") {
  const Vocabulary vocab = make_toy_vocabulary();
  auto config = tiny_config();
  const auto all_data = make_dataset<float>(40, 24, {4}, false, vocab,
                                            Paradigm::kAllMask, config.cell_scale);
  const auto next_data = make_dataset<float>(40, 24, {4}, false, vocab,
                                             Paradigm::kNextToken, config.cell_scale);

  TrainConfig train_config;
  train_config.steps = 700;
  train_config.batch_size = 4;
  train_config.learning_rate = 1e-3;

  // all-mask paradigm reaches the ground-truth masks on training samples
  {
    const auto outcome = train(init_parameters<float>(config), all_data, train_config);
    int exact = 0;
    for (int i = 0; i < 8; ++i) {
      const auto& sample = all_data[static_cast<std::size_t>(i)];
      const auto result = run_pipeline(outcome.params, sample.instruction,
                                       sample.pixels, sample.scene.grid_side);
      if (result.masks.size() == 1 &&
          iou(result.masks[0].binary, sample.gt_mask) == 1.0) {
        ++exact;
      }
    }
    CHECK(exact >= 6);
  }

  // next-token paradigm reaches the same masks, one patch word at a time
  {
    const auto outcome = train(init_parameters<float>(config), next_data, train_config);
    int exact = 0;
    for (int i = 0; i < 8; ++i) {
      const auto& sample = next_data[static_cast<std::size_t>(i)];
      const auto features = patchify(sample.pixels, sample.scene.grid_side,
                                     outcome.params.patchify_weight,
                                     outcome.params.patchify_bias);
      const auto baseline =
          baseline_next_token_segment(outcome.params, sample.instruction, features);
      CHECK(baseline.steps == 16);
      if (iou(baseline.mask.binary, sample.gt_mask) == 1.0) ++exact;
    }
    CHECK(exact >= 6);
  }
}

TEST_CASE("non-finite loss aborts with a diagnostic") {
  const Vocabulary vocab = make_toy_vocabulary();
  const auto config = tiny_config();
  auto params = init_parameters<float>(config);
  params.lm_head.array() += std::numeric_limits<float>::quiet_NaN();
  const auto data = make_dataset<float>(0, 4, {4}, false, vocab, Paradigm::kAllMask,
                                        config.cell_scale);
  TrainConfig train_config;
  train_config.steps = 2;
  train_config.batch_size = 1;
  CHECK_THROWS_AS(train(params, data, train_config), std::runtime_error);
}
