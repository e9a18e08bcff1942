#include "doctest.h"

#include <set>
#include <sstream>

#include "allmask/dataset.hpp"
#include "allmask/featurize.hpp"
#include "allmask/scene.hpp"
#include "allmask/vocab.hpp"

using namespace allmask;

TEST_CASE("make_scene honors its contract") {
  const Scene scene = make_scene(0, 8, false);
  CHECK(scene.grid_side == 8);
  CHECK(scene.objects.size() >= 1);
  CHECK(scene.objects.size() <= 4);
  CHECK(scene.has_target());
  CHECK(scene.target_index < static_cast<int>(scene.objects.size()));
  CHECK_THROWS_AS(make_scene(0, 3, false), std::invalid_argument);
  CHECK_THROWS_AS(make_scene(0, 17, false), std::invalid_argument);
}

TEST_CASE("make_scene is deterministic") {
  for (std::uint64_t seed : {0ULL, 1ULL, 42ULL, 999ULL}) {
    const Scene a = make_scene(seed, 8, true);
    const Scene b = make_scene(seed, 8, true);
    REQUIRE(a.objects.size() == b.objects.size());
    CHECK(a.target_index == b.target_index);
    for (std::size_t i = 0; i < a.objects.size(); ++i) {
      CHECK(a.objects[i].shape == b.objects[i].shape);
      CHECK(a.objects[i].color == b.objects[i].color);
      CHECK(a.objects[i].cells == b.objects[i].cells);
    }
  }
}

TEST_CASE("scene invariants: disjoint cells and unique kinds") {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    for (int grid : {4, 8, 16}) {
      const Scene scene = make_scene(seed, grid, true);
      std::set<std::pair<int, int>> seen;
      std::set<std::pair<int, int>> kinds;
      for (const auto& object : scene.objects) {
        CHECK_FALSE(object.cells.empty());
        for (const auto& cell : object.cells) {
          CHECK(cell.first >= 0);
          CHECK(cell.first < grid);
          CHECK(cell.second >= 0);
          CHECK(cell.second < grid);
          CHECK(seen.insert(cell).second);  // pairwise non-overlapping
        }
        CHECK(kinds
                  .insert({static_cast<int>(object.shape),
                           static_cast<int>(object.color)})
                  .second);
      }
    }
  }
}

TEST_CASE("no-object rate over seeds 0..999 lies between 5% and 15%") {
  int none_count = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    if (!make_scene(seed, 8, true).has_target()) ++none_count;
  }
  CHECK(none_count >= 50);
  CHECK(none_count <= 150);

  // with the flag off there are no refusal scenes at all
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    CHECK(make_scene(seed, 8, false).has_target());
  }
}

TEST_CASE("render_pixels fills background gray and objects with pure color") {
  Scene empty;
  empty.grid_side = 4;
  const auto blank = render_pixels<float>(empty, 2);
  CHECK(blank.height() == 8);
  CHECK((blank.r.array() == 0.5f).all());
  CHECK((blank.g.array() == 0.5f).all());
  CHECK((blank.b.array() == 0.5f).all());

  Scene single;
  single.grid_side = 4;
  single.objects.push_back({Shape::kRect, Color::kRed, {{0, 0}}});
  single.target_index = 0;
  const auto image = render_pixels<float>(single, 1);
  CHECK(image.r(0, 0) == 1.0f);
  CHECK(image.g(0, 0) == 0.0f);
  CHECK(image.b(0, 0) == 0.0f);
  CHECK(image.r(1, 1) == 0.5f);

  const auto again = render_pixels<float>(single, 1);
  CHECK(image.r == again.r);
  CHECK(image.g == again.g);
  CHECK(image.b == again.b);

  CHECK_THROWS_AS(render_pixels<float>(single, 0), std::invalid_argument);
}

TEST_CASE("rendered footprints exactly match scene cells") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Scene scene = make_scene(seed, 8, false);
    const auto image = render_pixels<float>(scene, 3);
    std::set<std::pair<int, int>> object_cells;
    for (const auto& object : scene.objects) {
      for (const auto& cell : object.cells) object_cells.insert(cell);
    }
    for (int r = 0; r < 8; ++r) {
      for (int c = 0; c < 8; ++c) {
        const bool gray = image.r(r * 3, c * 3) == 0.5f &&
                          image.g(r * 3, c * 3) == 0.5f &&
                          image.b(r * 3, c * 3) == 0.5f;
        CHECK(gray == (object_cells.count({r, c}) == 0));
      }
    }
  }
}

TEST_CASE("patchify shapes, locality and linearity") {
  const int grid = 4, scale = 2, dim = 6;
  const Scene scene = make_scene(3, grid, false);
  const auto image = render_pixels<float>(scene, scale);
  Rng rng(5);
  Matrix<float> projection(3 * scale * scale, dim);
  for (int r = 0; r < projection.rows(); ++r) {
    for (int c = 0; c < dim; ++c) {
      projection(r, c) = static_cast<float>(rng.next_gaussian());
    }
  }
  Matrix<float> bias = Matrix<float>::Zero(1, dim);

  const auto grid_features = patchify(image, grid, projection, bias);
  CHECK(grid_features.patch_count() == 16);
  CHECK(grid_features.feature_dim() == dim);

  SUBCASE("zero pixels and zero bias give zero features") {
    Image<float> zeros;
    zeros.r = Matrix<float>::Zero(8, 8);
    zeros.g = Matrix<float>::Zero(8, 8);
    zeros.b = Matrix<float>::Zero(8, 8);
    const auto features = patchify(zeros, grid, projection, bias);
    CHECK(features.features.cwiseAbs().maxCoeff() == 0.0f);
  }
  SUBCASE("swapping two patch pixel blocks swaps exactly those feature rows") {
    Image<float> swapped = image;
    // swap patch (0,0) with patch (1,1): 2x2 pixel blocks
    Matrix<float> tmp;
    for (auto* channel : {&swapped.r, &swapped.g, &swapped.b}) {
      tmp = channel->block(0, 0, scale, scale);
      channel->block(0, 0, scale, scale) = channel->block(scale, scale, scale, scale);
      channel->block(scale, scale, scale, scale) = tmp;
    }
    const auto swapped_features = patchify(swapped, grid, projection, bias);
    CHECK(swapped_features.features.row(0) == grid_features.features.row(5));
    CHECK(swapped_features.features.row(5) == grid_features.features.row(0));
    for (int n = 0; n < 16; ++n) {
      if (n == 0 || n == 5) continue;
      CHECK(swapped_features.features.row(n) == grid_features.features.row(n));
    }
  }
  SUBCASE("indivisible dimensions are rejected") {
    CHECK_THROWS_AS(patchify(image, 3, projection, bias), std::invalid_argument);
  }
  SUBCASE("P=8 s=4 D=64 gives 64x64 features") {
    const Scene big = make_scene(9, 8, false);
    const auto pixels = render_pixels<float>(big, 4);
    Matrix<float> proj64 = Matrix<float>::Zero(3 * 4 * 4, 64);
    Matrix<float> bias64 = Matrix<float>::Zero(1, 64);
    const auto features = patchify(pixels, 8, proj64, bias64);
    CHECK(features.features.rows() == 64);
    CHECK(features.features.cols() == 64);
  }
}

TEST_CASE("instruction and response follow the templates") {
  const Vocabulary vocab = make_toy_vocabulary();
  int seg_total = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Scene scene = make_scene(seed, 8, true);
    const auto [instruction, response] = make_instruction_response(scene, seed, vocab);
    REQUIRE(!instruction.empty());
    CHECK(instruction.front() == vocab.bos());
    CHECK(response.back() == vocab.eos());
    const int seg_count = static_cast<int>(
        std::count(response.begin(), response.end(), vocab.seg()));
    if (scene.has_target()) {
      CHECK(seg_count == 1);
      const auto& target = scene.objects[static_cast<std::size_t>(scene.target_index)];
      const auto words = vocab.decode(instruction);
      CHECK(std::count(words.begin(), words.end(), color_word(target.color)) == 1);
      CHECK(std::count(words.begin(), words.end(), shape_word(target.shape)) == 1);
    } else {
      CHECK(seg_count == 0);
    }
    seg_total += seg_count;

    const auto [instruction2, response2] = make_instruction_response(scene, seed, vocab);
    CHECK(instruction2 == instruction);
    CHECK(response2 == response);
  }
  CHECK(seg_total > 0);
}

TEST_CASE("expression uniqueness: the named pair matches exactly one object") {
  const Vocabulary vocab = make_toy_vocabulary();
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const Scene scene = make_scene(seed, 8, true);
    const auto [instruction, response] = make_instruction_response(scene, seed, vocab);
    const auto words = vocab.decode(instruction);
    int matches = 0;
    for (const auto& object : scene.objects) {
      const bool color_named =
          std::count(words.begin(), words.end(), color_word(object.color)) > 0;
      const bool shape_named =
          std::count(words.begin(), words.end(), shape_word(object.shape)) > 0;
      if (color_named && shape_named) ++matches;
    }
    CHECK(matches == (scene.has_target() ? 1 : 0));
  }
}

TEST_CASE("gt mask equals brute-force re-rasterization of the target") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Scene scene = make_scene(seed, 8, true);
    const auto mask = scene_gt_mask(scene);
    REQUIRE(static_cast<int>(mask.size()) == 64);
    std::vector<std::uint8_t> expected(64, 0);
    if (scene.has_target()) {
      for (const auto& [r, c] :
           scene.objects[static_cast<std::size_t>(scene.target_index)].cells) {
        expected[static_cast<std::size_t>(r * 8 + c)] = 1;
      }
    }
    CHECK(mask == expected);
    if (!scene.has_target()) {
      CHECK(std::count(mask.begin(), mask.end(), 1) == 0);
    }
  }
}

TEST_CASE("next-token paradigm responses carry one patch word per cell") {
  const Vocabulary vocab = make_toy_vocabulary();
  const Scene scene = make_scene(12, 4, false);
  const auto [instruction, response] =
      make_instruction_response(scene, 12, vocab, Paradigm::kNextToken);
  REQUIRE(static_cast<int>(response.size()) == 17);  // 16 patch words + eos
  const auto gt = scene_gt_mask(scene);
  for (int n = 0; n < 16; ++n) {
    CHECK(response[static_cast<std::size_t>(n)] ==
          (gt[static_cast<std::size_t>(n)] ? vocab.fg() : vocab.bg()));
  }
  CHECK(response.back() == vocab.eos());
}

TEST_CASE("make_dataset determinism, invariants and split disjointness") {
  const Vocabulary vocab = make_toy_vocabulary();
  const auto stream_a = make_dataset<float>(1, 10, {8}, false, vocab);
  const auto stream_b = make_dataset<float>(1, 10, {8}, false, vocab);
  REQUIRE(stream_a.size() == 10);
  for (std::size_t i = 0; i < stream_a.size(); ++i) {
    const auto& a = stream_a[i];
    CHECK(static_cast<int>(a.gt_mask.size()) == 64);
    CHECK(a.pixels.height() == 32);
    CHECK(a.instruction == stream_b[i].instruction);
    CHECK(a.response == stream_b[i].response);
    CHECK(a.gt_mask == stream_b[i].gt_mask);
    CHECK(a.pixels.r == stream_b[i].pixels.r);
  }
  CHECK_THROWS_AS(make_dataset<float>(1, 4, {}, false, vocab), std::invalid_argument);

  // train/val seed ranges are disjoint by construction
  std::set<std::uint64_t> train_seeds, val_seeds;
  for (const auto& sample : make_dataset<float>(0, 100, {8}, true, vocab)) {
    train_seeds.insert(sample.seed);
  }
  for (const auto& sample : make_dataset<float>(10000, 100, {8}, true, vocab)) {
    val_seeds.insert(sample.seed);
  }
  for (std::uint64_t seed : val_seeds) CHECK(train_seeds.count(seed) == 0);
}

TEST_CASE("sample records round-trip through the text serialization") {
  const Vocabulary vocab = make_toy_vocabulary();
  const auto samples = make_dataset<float>(77, 3, {4, 8}, true, vocab);
  std::stringstream stream;
  for (const auto& sample : samples) write_sample_record(stream, sample);
  for (const auto& sample : samples) {
    const auto parsed = read_sample_record<float>(stream);
    CHECK(parsed.seed == sample.seed);
    CHECK(parsed.instruction == sample.instruction);
    CHECK(parsed.response == sample.response);
    CHECK(parsed.gt_mask == sample.gt_mask);
    CHECK(parsed.pixels.r == sample.pixels.r);
    CHECK(parsed.pixels.g == sample.pixels.g);
    CHECK(parsed.pixels.b == sample.pixels.b);
  }
}
