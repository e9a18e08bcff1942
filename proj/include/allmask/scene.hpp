#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "allmask/common.hpp"

namespace allmask {

enum class Shape { kRect, kDisk, kCross };
enum class Color { kRed, kGreen, kBlue, kYellow };

const char* shape_word(Shape s);
const char* color_word(Color c);

struct SceneObject {
  Shape shape;
  Color color;
  std::vector<std::pair<int, int>> cells;  // (row, col), grid coordinates
};

constexpr int kNoTarget = -1;

struct Scene {
  int grid_side = 0;
  std::vector<SceneObject> objects;
  int target_index = kNoTarget;

  bool has_target() const { return target_index != kNoTarget; }
};

// Procedural scene generator. Deterministic in (seed, grid_side,
// allow_no_object). Objects are cell-aligned, pairwise non-adjacent, and
// carry unique (shape, color) pairs. With allow_no_object, roughly 10% of
// seeds produce target_index == kNoTarget.
Scene make_scene(std::uint64_t seed, int grid_side, bool allow_no_object);

// Row-major per-patch ground truth: 1 iff the cell belongs to the target.
std::vector<std::uint8_t> scene_gt_mask(const Scene& scene);

// RGB raster, one channel plane per color. Values in [0, 1].
template <typename Scalar>
struct Image {
  Matrix<Scalar> r, g, b;

  int height() const { return static_cast<int>(r.rows()); }
  int width() const { return static_cast<int>(r.cols()); }
};

template <typename Scalar>
std::array<Scalar, 3> color_rgb(Color c) {
  switch (c) {
    case Color::kRed: return {Scalar(1), Scalar(0), Scalar(0)};
    case Color::kGreen: return {Scalar(0), Scalar(1), Scalar(0)};
    case Color::kBlue: return {Scalar(0), Scalar(0), Scalar(1)};
    case Color::kYellow: return {Scalar(1), Scalar(1), Scalar(0)};
  }
  return {Scalar(0), Scalar(0), Scalar(0)};
}

// Gray background, object cells filled with the object's pure color.
template <typename Scalar>
Image<Scalar> render_pixels(const Scene& scene, int cell_scale) {
  if (cell_scale < 1) {
    throw std::invalid_argument("render_pixels: cell_scale must be >= 1");
  }
  const int side = scene.grid_side * cell_scale;
  Image<Scalar> image;
  image.r = Matrix<Scalar>::Constant(side, side, Scalar(0.5));
  image.g = Matrix<Scalar>::Constant(side, side, Scalar(0.5));
  image.b = Matrix<Scalar>::Constant(side, side, Scalar(0.5));
  for (const auto& object : scene.objects) {
    const auto rgb = color_rgb<Scalar>(object.color);
    for (const auto& [row, col] : object.cells) {
      image.r.block(row * cell_scale, col * cell_scale, cell_scale, cell_scale)
          .setConstant(rgb[0]);
      image.g.block(row * cell_scale, col * cell_scale, cell_scale, cell_scale)
          .setConstant(rgb[1]);
      image.b.block(row * cell_scale, col * cell_scale, cell_scale, cell_scale)
          .setConstant(rgb[2]);
    }
  }
  return image;
}

}  // namespace allmask
