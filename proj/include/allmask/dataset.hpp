#pragma once

#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "allmask/common.hpp"
#include "allmask/scene.hpp"
#include "allmask/vocab.hpp"

namespace allmask {

// Which response style a sample is supervised with: one <seg> trigger per
// target, or one fg/bg word per patch (next-token baseline).
enum class Paradigm { kAllMask, kNextToken };

inline const char* paradigm_name(Paradigm p) {
  return p == Paradigm::kAllMask ? "allmask" : "nexttoken";
}

template <typename Scalar>
struct SyntheticSample {
  Scene scene;
  Image<Scalar> pixels;
  TokenSequence instruction;  // starts with <bos>
  TokenSequence response;     // ends with <eos>
  std::vector<std::uint8_t> gt_mask;  // N = grid_side^2, row-major
  std::uint64_t seed = 0;
  int cell_scale = 0;
};

namespace detail {

constexpr std::uint64_t kTextSalt = 0x7e8737;

inline std::pair<std::string, std::string> referred_words(const Scene& scene,
                                                          Rng& rng) {
  if (scene.has_target()) {
    const auto& target = scene.objects[static_cast<std::size_t>(scene.target_index)];
    return {color_word(target.color), shape_word(target.shape)};
  }
  // Name a (shape, color) combination absent from the scene.
  std::vector<std::pair<Shape, Color>> absent;
  for (int s = 0; s < 3; ++s) {
    for (int c = 0; c < 4; ++c) {
      bool present = false;
      for (const auto& object : scene.objects) {
        if (static_cast<int>(object.shape) == s && static_cast<int>(object.color) == c) {
          present = true;
          break;
        }
      }
      if (!present) absent.emplace_back(static_cast<Shape>(s), static_cast<Color>(c));
    }
  }
  const auto& pick = absent[static_cast<std::size_t>(
      rng.next_int(0, static_cast<int>(absent.size()) - 1))];
  return {color_word(pick.second), shape_word(pick.first)};
}

}  // namespace detail

// Builds the instruction and target response for a scene. The instruction is
// a uniformly drawn question template; target scenes answer with a template
// embedding one <seg>, no-object scenes answer with the fixed refusal. With
// Paradigm::kNextToken the <seg> answer is replaced by one fg/bg word per
// patch in row-major order.
inline std::pair<TokenSequence, TokenSequence> make_instruction_response(
    const Scene& scene, std::uint64_t seed, const Vocabulary& vocab,
    Paradigm paradigm = Paradigm::kAllMask) {
  Rng rng(mix_seed(seed, detail::kTextSalt));
  auto [color, shape] = detail::referred_words(scene, rng);

  const auto& questions = question_templates();
  const auto& question =
      questions[static_cast<std::size_t>(rng.next_int(0, static_cast<int>(questions.size()) - 1))];
  TokenSequence instruction;
  instruction.push_back(vocab.bos());
  for (int id : vocab.encode(instantiate_template(question, color, shape))) {
    instruction.push_back(id);
  }

  TokenSequence response;
  if (!scene.has_target()) {
    response = vocab.encode(instantiate_template(refusal_template(), color, shape));
  } else if (paradigm == Paradigm::kAllMask) {
    const auto& answers = answer_templates();
    const auto& answer =
        answers[static_cast<std::size_t>(rng.next_int(0, static_cast<int>(answers.size()) - 1))];
    response = vocab.encode(instantiate_template(answer, color, shape));
  } else {
    const auto gt = scene_gt_mask(scene);
    response.reserve(gt.size() + 1);
    for (std::uint8_t cell : gt) response.push_back(cell ? vocab.fg() : vocab.bg());
  }
  response.push_back(vocab.eos());
  return {std::move(instruction), std::move(response)};
}

template <typename Scalar>
SyntheticSample<Scalar> make_sample(std::uint64_t seed, int grid_side,
                                    bool allow_no_object, const Vocabulary& vocab,
                                    Paradigm paradigm = Paradigm::kAllMask,
                                    int cell_scale = 4) {
  SyntheticSample<Scalar> sample;
  sample.seed = seed;
  sample.cell_scale = cell_scale;
  sample.scene = make_scene(seed, grid_side, allow_no_object);
  sample.pixels = render_pixels<Scalar>(sample.scene, cell_scale);
  auto [instruction, response] = make_instruction_response(sample.scene, seed, vocab, paradigm);
  sample.instruction = std::move(instruction);
  sample.response = std::move(response);
  sample.gt_mask = scene_gt_mask(sample.scene);
  return sample;
}

// Samples i = 0..count-1 use seed base_seed + i and grid grid_sides[i % k].
// Disjoint seed ranges give disjoint splits.
template <typename Scalar>
std::vector<SyntheticSample<Scalar>> make_dataset(std::uint64_t base_seed, int count,
                                                  const std::vector<int>& grid_sides,
                                                  bool allow_no_object,
                                                  const Vocabulary& vocab,
                                                  Paradigm paradigm = Paradigm::kAllMask,
                                                  int cell_scale = 4) {
  if (grid_sides.empty()) {
    throw std::invalid_argument("make_dataset: grid_sides must be non-empty");
  }
  std::vector<SyntheticSample<Scalar>> samples;
  samples.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const int grid = grid_sides[static_cast<std::size_t>(i) % grid_sides.size()];
    samples.push_back(
        make_sample<Scalar>(base_seed + static_cast<std::uint64_t>(i), grid,
                            allow_no_object, vocab, paradigm, cell_scale));
  }
  return samples;
}

// --- optional record serialization ------------------------------------
//
// One record per sample:
//   line 1: "P N seed"
//   line 2: instruction ids, space-separated
//   line 3: response ids, space-separated
//   line 4: gt_mask as a 0/1 string
//   line 5: pixels as hex of little-endian 32-bit floats, interleaved
//           r,g,b per pixel in row-major order

template <typename Scalar>
void write_sample_record(std::ostream& out, const SyntheticSample<Scalar>& sample) {
  const int grid = sample.scene.grid_side;
  out << grid << ' ' << grid * grid << ' ' << sample.seed << '\n';
  for (std::size_t i = 0; i < sample.instruction.size(); ++i) {
    out << (i ? " " : "") << sample.instruction[i];
  }
  out << '\n';
  for (std::size_t i = 0; i < sample.response.size(); ++i) {
    out << (i ? " " : "") << sample.response[i];
  }
  out << '\n';
  for (std::uint8_t cell : sample.gt_mask) out << (cell ? '1' : '0');
  out << '\n';
  static const char* kHex = "0123456789abcdef";
  const int side = sample.pixels.height();
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      const float rgb[3] = {static_cast<float>(sample.pixels.r(y, x)),
                            static_cast<float>(sample.pixels.g(y, x)),
                            static_cast<float>(sample.pixels.b(y, x))};
      for (float value : rgb) {
        std::uint32_t bits;
        std::memcpy(&bits, &value, sizeof bits);
        for (int byte = 0; byte < 4; ++byte) {  // little-endian byte order
          const unsigned v = (bits >> (8 * byte)) & 0xffu;
          out << kHex[v >> 4] << kHex[v & 0xf];
        }
      }
    }
  }
  out << '\n';
}

template <typename Scalar>
SyntheticSample<Scalar> read_sample_record(std::istream& in) {
  SyntheticSample<Scalar> sample;
  int grid = 0, n = 0;
  if (!(in >> grid >> n >> sample.seed)) {
    throw format_error("dataset record: bad header");
  }
  std::string line;
  std::getline(in, line);  // consume header newline
  auto parse_ids = [&](TokenSequence& ids) {
    if (!std::getline(in, line)) throw format_error("dataset record: missing id line");
    std::istringstream stream(line);
    int id;
    while (stream >> id) ids.push_back(id);
  };
  parse_ids(sample.instruction);
  parse_ids(sample.response);
  if (!std::getline(in, line) || static_cast<int>(line.size()) != n) {
    throw format_error("dataset record: gt_mask length mismatch");
  }
  sample.gt_mask.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    if (line[static_cast<std::size_t>(i)] != '0' && line[static_cast<std::size_t>(i)] != '1') {
      throw format_error("dataset record: gt_mask must be 0/1");
    }
    sample.gt_mask[static_cast<std::size_t>(i)] = line[static_cast<std::size_t>(i)] == '1';
  }
  if (!std::getline(in, line)) throw format_error("dataset record: missing pixel line");
  const std::size_t pixel_count = line.size() / (3 * 8);
  const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(pixel_count))));
  if (line.size() % (3 * 8) != 0 || side * side != static_cast<int>(pixel_count) ||
      side % grid != 0) {
    throw format_error("dataset record: bad pixel payload");
  }
  sample.scene.grid_side = grid;
  sample.cell_scale = side / grid;
  sample.pixels.r.resize(side, side);
  sample.pixels.g.resize(side, side);
  sample.pixels.b.resize(side, side);
  auto hex_value = [](char c) -> std::uint32_t {
    if (c >= '0' && c <= '9') return static_cast<std::uint32_t>(c - '0');
    if (c >= 'a' && c <= 'f') return static_cast<std::uint32_t>(c - 'a' + 10);
    throw format_error("dataset record: bad hex digit");
  };
  std::size_t pos = 0;
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      float rgb[3];
      for (float& value : rgb) {
        std::uint32_t bits = 0;
        for (int byte = 0; byte < 4; ++byte) {
          const std::uint32_t hi = hex_value(line[pos++]);
          const std::uint32_t lo = hex_value(line[pos++]);
          bits |= ((hi << 4) | lo) << (8 * byte);
        }
        std::memcpy(&value, &bits, sizeof value);
      }
      sample.pixels.r(y, x) = static_cast<Scalar>(rgb[0]);
      sample.pixels.g(y, x) = static_cast<Scalar>(rgb[1]);
      sample.pixels.b(y, x) = static_cast<Scalar>(rgb[2]);
    }
  }
  return sample;
}

}  // namespace allmask
