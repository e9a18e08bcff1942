#include "allmask/scene.hpp"

#include <algorithm>
#include <set>

namespace allmask {

namespace {

constexpr std::uint64_t kSceneSalt = 0x5ce7e5a1;

// All footprints are 4-connected so one object renders as one solid
// same-color region (keeps region growing and component labeling exact).
// Returns empty when the footprint cannot fit the grid.
std::vector<std::pair<int, int>> shape_cells(Shape shape, Rng& rng, int grid_side) {
  std::vector<std::pair<int, int>> offsets;
  int box_h = 0, box_w = 0;
  switch (shape) {
    case Shape::kRect: {
      box_h = rng.next_int(1, std::min(3, grid_side));
      box_w = rng.next_int(1, std::min(3, grid_side));
      for (int r = 0; r < box_h; ++r)
        for (int c = 0; c < box_w; ++c) offsets.emplace_back(r, c);
      break;
    }
    case Shape::kDisk:
      // radius-2 circle: cells with dr^2 + dc^2 <= 4 around the center
      for (int r = 0; r < 5; ++r) {
        for (int c = 0; c < 5; ++c) {
          if ((r - 2) * (r - 2) + (c - 2) * (c - 2) <= 4) offsets.emplace_back(r, c);
        }
      }
      box_h = box_w = 5;
      break;
    case Shape::kCross:
      // plus shape: center row and center column of a 3x3 box
      offsets = {{1, 0}, {1, 1}, {1, 2}, {0, 1}, {2, 1}};
      box_h = box_w = 3;
      break;
  }
  if (box_h > grid_side || box_w > grid_side) return {};
  const int row0 = rng.next_int(0, grid_side - box_h);
  const int col0 = rng.next_int(0, grid_side - box_w);
  for (auto& cell : offsets) {
    cell.first += row0;
    cell.second += col0;
  }
  return offsets;
}

}  // namespace

const char* shape_word(Shape s) {
  switch (s) {
    case Shape::kRect: return "rect";
    case Shape::kDisk: return "disk";
    case Shape::kCross: return "cross";
  }
  return "";
}

const char* color_word(Color c) {
  switch (c) {
    case Color::kRed: return "red";
    case Color::kGreen: return "green";
    case Color::kBlue: return "blue";
    case Color::kYellow: return "yellow";
  }
  return "";
}

Scene make_scene(std::uint64_t seed, int grid_side, bool allow_no_object) {
  if (grid_side < 4 || grid_side > 16) {
    throw std::invalid_argument("make_scene: grid_side must be in [4, 16]");
  }
  Rng rng(mix_seed(seed, kSceneSalt ^ (static_cast<std::uint64_t>(grid_side) << 8) ^
                             (allow_no_object ? 1u : 0u)));

  Scene scene;
  scene.grid_side = grid_side;

  const int max_objects = std::clamp(grid_side * grid_side / 12, 1, 4);
  const int wanted = rng.next_int(1, max_objects);

  // occupied includes a one-cell dilation so objects never touch; this keeps
  // same-color regions separable for the region-growing refiner.
  std::set<std::pair<int, int>> occupied;
  std::set<std::pair<int, int>> used_kinds;  // (shape, color) as ints

  for (int k = 0; k < wanted; ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < 64 && !placed; ++attempt) {
      const Shape shape = static_cast<Shape>(rng.next_int(0, 2));
      const Color color = static_cast<Color>(rng.next_int(0, 3));
      const auto cells = shape_cells(shape, rng, grid_side);
      if (cells.empty()) continue;  // footprint does not fit this grid
      if (used_kinds.count({static_cast<int>(shape), static_cast<int>(color)})) continue;
      bool free = true;
      for (const auto& cell : cells) {
        if (occupied.count(cell)) {
          free = false;
          break;
        }
      }
      if (!free) continue;
      for (const auto& [r, c] : cells) {
        for (int dr = -1; dr <= 1; ++dr)
          for (int dc = -1; dc <= 1; ++dc) occupied.insert({r + dr, c + dc});
      }
      used_kinds.insert({static_cast<int>(shape), static_cast<int>(color)});
      scene.objects.push_back({shape, color, cells});
      placed = true;
    }
  }

  if (scene.objects.empty()) {
    // cannot happen for grid_side >= 4, but keep the invariant airtight
    scene.objects.push_back({Shape::kRect, Color::kRed, {{0, 0}}});
  }

  if (allow_no_object && rng.next_real() < 0.10) {
    scene.target_index = kNoTarget;
  } else {
    scene.target_index = rng.next_int(0, static_cast<int>(scene.objects.size()) - 1);
  }
  return scene;
}

std::vector<std::uint8_t> scene_gt_mask(const Scene& scene) {
  const int n = scene.grid_side * scene.grid_side;
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(n), 0);
  if (!scene.has_target()) return mask;
  const auto& target = scene.objects[static_cast<std::size_t>(scene.target_index)];
  for (const auto& [r, c] : target.cells) {
    mask[static_cast<std::size_t>(r * scene.grid_side + c)] = 1;
  }
  return mask;
}

}  // namespace allmask
