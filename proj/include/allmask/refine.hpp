#pragma once

#include <cmath>
#include <optional>
#include <queue>
#include <vector>

#include "allmask/common.hpp"
#include "allmask/scene.hpp"

namespace allmask {

struct Keypoint {
  int patch_row = 0;
  int patch_col = 0;
  double pixel_y = 0.0;  // center of the chosen patch, pixel coordinates
  double pixel_x = 0.0;
};

namespace detail {

// 4-connected components of a binary patch grid; returns component id per
// cell (-1 background) and the component sizes.
inline std::pair<std::vector<int>, std::vector<int>> label_components(
    const std::vector<std::uint8_t>& mask, int grid_side) {
  std::vector<int> label(mask.size(), -1);
  std::vector<int> sizes;
  for (int start = 0; start < static_cast<int>(mask.size()); ++start) {
    if (!mask[static_cast<std::size_t>(start)] || label[static_cast<std::size_t>(start)] >= 0) {
      continue;
    }
    const int id = static_cast<int>(sizes.size());
    sizes.push_back(0);
    std::queue<int> frontier;
    frontier.push(start);
    label[static_cast<std::size_t>(start)] = id;
    while (!frontier.empty()) {
      const int cell = frontier.front();
      frontier.pop();
      ++sizes[static_cast<std::size_t>(id)];
      const int r = cell / grid_side, c = cell % grid_side;
      const int neighbors[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
      for (const auto& [nr, nc] : neighbors) {
        if (nr < 0 || nr >= grid_side || nc < 0 || nc >= grid_side) continue;
        const int idx = nr * grid_side + nc;
        if (mask[static_cast<std::size_t>(idx)] && label[static_cast<std::size_t>(idx)] < 0) {
          label[static_cast<std::size_t>(idx)] = id;
          frontier.push(idx);
        }
      }
    }
  }
  return {std::move(label), std::move(sizes)};
}

}  // namespace detail

// Deterministic keypoint rule: within the largest 4-connected foreground
// component (ties towards the earliest cell in row-major order), pick the
// foreground cell nearest the component centroid. Returns nothing for an
// all-background mask.
inline std::optional<Keypoint> sample_keypoint_cells(const std::vector<std::uint8_t>& mask,
                                                     int grid_side, int cell_scale) {
  const auto [label, sizes] = detail::label_components(mask, grid_side);
  if (sizes.empty()) return std::nullopt;

  int best = 0;
  for (int id = 1; id < static_cast<int>(sizes.size()); ++id) {
    if (sizes[static_cast<std::size_t>(id)] > sizes[static_cast<std::size_t>(best)]) best = id;
  }
  double centroid_r = 0.0, centroid_c = 0.0;
  for (int cell = 0; cell < static_cast<int>(mask.size()); ++cell) {
    if (label[static_cast<std::size_t>(cell)] != best) continue;
    centroid_r += cell / grid_side;
    centroid_c += cell % grid_side;
  }
  centroid_r /= sizes[static_cast<std::size_t>(best)];
  centroid_c /= sizes[static_cast<std::size_t>(best)];

  int chosen = -1;
  double chosen_dist = 0.0;
  for (int cell = 0; cell < static_cast<int>(mask.size()); ++cell) {
    if (label[static_cast<std::size_t>(cell)] != best) continue;
    const double dr = cell / grid_side - centroid_r;
    const double dc = cell % grid_side - centroid_c;
    const double dist = dr * dr + dc * dc;
    if (chosen < 0 || dist < chosen_dist) {
      chosen = cell;
      chosen_dist = dist;
    }
  }
  Keypoint keypoint;
  keypoint.patch_row = chosen / grid_side;
  keypoint.patch_col = chosen % grid_side;
  keypoint.pixel_y = (keypoint.patch_row + 0.5) * cell_scale;
  keypoint.pixel_x = (keypoint.patch_col + 0.5) * cell_scale;
  return keypoint;
}

// 4-connected flood fill from the keypoint's pixel over pixels whose color
// lies within per-channel tolerance of the seed color. The seed pixel is
// always included. `coarse_mask` is the prediction the keypoint was sampled
// from; the keypoint must name one of its foreground patches.
template <typename Scalar>
BoolGrid region_grow_refine(const Image<Scalar>& pixels, const Keypoint& keypoint,
                            const std::vector<std::uint8_t>& coarse_mask,
                            Scalar color_tolerance) {
  const int height = pixels.height();
  const int width = pixels.width();
  const int seed_y = static_cast<int>(keypoint.pixel_y);
  const int seed_x = static_cast<int>(keypoint.pixel_x);
  if (seed_y < 0 || seed_y >= height || seed_x < 0 || seed_x >= width) {
    throw std::invalid_argument("region_grow_refine: keypoint outside the image");
  }
  const int grid_side = static_cast<int>(std::lround(
      std::sqrt(static_cast<double>(coarse_mask.size()))));
  if (grid_side > 0 &&
      !coarse_mask[static_cast<std::size_t>(keypoint.patch_row * grid_side +
                                            keypoint.patch_col)]) {
    throw std::invalid_argument("region_grow_refine: keypoint not on a foreground patch");
  }

  const Scalar seed_r = pixels.r(seed_y, seed_x);
  const Scalar seed_g = pixels.g(seed_y, seed_x);
  const Scalar seed_b = pixels.b(seed_y, seed_x);
  auto matches = [&](int y, int x) {
    return std::abs(pixels.r(y, x) - seed_r) <= color_tolerance &&
           std::abs(pixels.g(y, x) - seed_g) <= color_tolerance &&
           std::abs(pixels.b(y, x) - seed_b) <= color_tolerance;
  };

  BoolGrid filled = BoolGrid::Constant(height, width, false);
  std::queue<std::pair<int, int>> frontier;
  frontier.push({seed_y, seed_x});
  filled(seed_y, seed_x) = true;
  while (!frontier.empty()) {
    const auto [y, x] = frontier.front();
    frontier.pop();
    const int neighbors[4][2] = {{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}};
    for (const auto& [ny, nx] : neighbors) {
      if (ny < 0 || ny >= height || nx < 0 || nx >= width) continue;
      if (filled(ny, nx) || !matches(ny, nx)) continue;
      filled(ny, nx) = true;
      frontier.push({ny, nx});
    }
  }
  return filled;
}

// Keypoint + flood fill + majority-vote downsample in one step. Falls back
// to the coarse mask when there is no foreground to seed from.
template <typename Scalar>
std::vector<std::uint8_t> refine_mask(const Image<Scalar>& pixels,
                                      const std::vector<std::uint8_t>& coarse,
                                      int grid_side, Scalar tolerance);

// Majority vote per patch cell (strictly more than half of its pixels).
inline std::vector<std::uint8_t> pixel_mask_to_patch_grid(const BoolGrid& pixel_mask,
                                                          int grid_side) {
  const int side = static_cast<int>(pixel_mask.rows());
  if (side != static_cast<int>(pixel_mask.cols()) || grid_side < 1 ||
      side % grid_side != 0) {
    throw std::invalid_argument("pixel_mask_to_patch_grid: bad dimensions");
  }
  const int scale = side / grid_side;
  std::vector<std::uint8_t> patches(
      static_cast<std::size_t>(grid_side * grid_side), 0);
  for (int pr = 0; pr < grid_side; ++pr) {
    for (int pc = 0; pc < grid_side; ++pc) {
      const int count = static_cast<int>(
          pixel_mask.block(pr * scale, pc * scale, scale, scale).count());
      patches[static_cast<std::size_t>(pr * grid_side + pc)] =
          count * 2 > scale * scale ? 1 : 0;
    }
  }
  return patches;
}

template <typename Scalar>
std::vector<std::uint8_t> refine_mask(const Image<Scalar>& pixels,
                                      const std::vector<std::uint8_t>& coarse,
                                      int grid_side, Scalar tolerance) {
  const auto keypoint =
      sample_keypoint_cells(coarse, grid_side, pixels.height() / grid_side);
  if (!keypoint) return coarse;
  const BoolGrid filled = region_grow_refine(pixels, *keypoint, coarse, tolerance);
  return pixel_mask_to_patch_grid(filled, grid_side);
}

}  // namespace allmask
