#pragma once

#include <cstdint>
#include <ostream>
#include <string>

#include "allmask/model.hpp"
#include "allmask/train.hpp"

namespace allmask {

// Flat key = value run configuration. Unknown keys are rejected; explicit
// command-line flags override file values.
struct RunConfig {
  // model
  int embed_dim = 64;
  int layers = 2;
  int heads = 4;
  int mlp_hidden = 128;
  int max_text_positions = 384;
  int max_grid_side = 16;
  int cell_scale = 4;
  std::uint64_t init_seed = 0;

  // optimization
  double learning_rate = 3e-4;
  int steps = 5000;
  int batch_size = 8;
  double warmup_fraction = 0.03;
  double lr_floor_fraction = 0.1;
  double grad_clip = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  int checkpoint_every = 0;

  // data / run
  std::uint64_t seed = 0;
  int grid = 8;
  int count = 5000;
  int val_count = 1000;
  std::uint64_t val_seed = 10000;
  bool allow_no_object = true;
  std::string paradigm = "allmask";

  // inference
  int max_new_tokens = 32;
  double refine_tolerance = 0.1;
  int repeats = 9;
  std::string mode = "allmask";
  bool refine = false;
  bool no_hybrid = false;
  bool no_fusion = false;

  // Applies one key; throws config_error for unknown keys or bad values.
  void set(const std::string& key, const std::string& value);

  // Parses a flat key = value file with '#' comments.
  void load_file(const std::string& path);

  // Full resolved state, one key per line, parseable by load_file.
  void echo(std::ostream& out) const;

  ModelConfig to_model_config(const Vocabulary& vocab) const;
  TrainConfig to_train_config() const;
  Paradigm data_paradigm() const;
};

}  // namespace allmask
