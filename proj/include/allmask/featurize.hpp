#pragma once

#include "allmask/common.hpp"
#include "allmask/scene.hpp"

namespace allmask {

// Per-patch feature rows in row-major patch order, plus the grid geometry.
template <typename Scalar>
struct PatchFeatureGrid {
  Matrix<Scalar> features;  // N x D
  int grid_side = 0;

  int patch_count() const { return static_cast<int>(features.rows()); }
  int feature_dim() const { return static_cast<int>(features.cols()); }
  int patch_row(int n) const { return n / grid_side; }
  int patch_col(int n) const { return n % grid_side; }
};

// Flattens each patch (row, column, then r/g/b per pixel) into one row.
// Row n covers patch (n / grid_side, n % grid_side).
template <typename Scalar>
Matrix<Scalar> flatten_patches(const Image<Scalar>& pixels, int grid_side) {
  const int side = pixels.height();
  if (side != pixels.width() || grid_side < 1 || side % grid_side != 0) {
    throw std::invalid_argument("flatten_patches: pixel side not divisible by grid_side");
  }
  const int scale = side / grid_side;
  const int patch_dim = 3 * scale * scale;
  Matrix<Scalar> flat(grid_side * grid_side, patch_dim);
  for (int pr = 0; pr < grid_side; ++pr) {
    for (int pc = 0; pc < grid_side; ++pc) {
      int col = 0;
      const int n = pr * grid_side + pc;
      for (int dy = 0; dy < scale; ++dy) {
        for (int dx = 0; dx < scale; ++dx) {
          const int y = pr * scale + dy;
          const int x = pc * scale + dx;
          flat(n, col++) = pixels.r(y, x);
          flat(n, col++) = pixels.g(y, x);
          flat(n, col++) = pixels.b(y, x);
        }
      }
    }
  }
  return flat;
}

// Patch featurizer: per-patch flatten followed by a learned linear
// projection. projection is (3*scale^2) x D, bias is 1 x D.
template <typename Scalar>
PatchFeatureGrid<Scalar> patchify(const Image<Scalar>& pixels, int grid_side,
                                  const Matrix<Scalar>& projection,
                                  const Matrix<Scalar>& bias) {
  const Matrix<Scalar> flat = flatten_patches(pixels, grid_side);
  if (flat.cols() != projection.rows()) {
    throw std::invalid_argument("patchify: projection rows do not match patch dim");
  }
  PatchFeatureGrid<Scalar> grid;
  grid.grid_side = grid_side;
  grid.features.noalias() = flat * projection;
  grid.features.rowwise() += bias.row(0);
  return grid;
}

}  // namespace allmask
