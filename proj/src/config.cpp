#include "allmask/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace allmask {

namespace {

std::string trim(const std::string& text) {
  const auto begin = text.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = text.find_last_not_of(" \t\r");
  return text.substr(begin, end - begin + 1);
}

bool parse_bool(const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  throw config_error("bad boolean value '" + value + "'");
}

template <typename T>
T parse_number(const std::string& value) {
  std::istringstream stream(value);
  T parsed{};
  if (!(stream >> parsed) || !(stream >> std::ws).eof()) {
    throw config_error("bad numeric value '" + value + "'");
  }
  return parsed;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  using Setter = std::function<void(RunConfig&, const std::string&)>;
  static const std::map<std::string, Setter> kSetters = {
      {"embed_dim", [](RunConfig& c, const std::string& v) { c.embed_dim = parse_number<int>(v); }},
      {"layers", [](RunConfig& c, const std::string& v) { c.layers = parse_number<int>(v); }},
      {"heads", [](RunConfig& c, const std::string& v) { c.heads = parse_number<int>(v); }},
      {"mlp_hidden", [](RunConfig& c, const std::string& v) { c.mlp_hidden = parse_number<int>(v); }},
      {"max_text_positions",
       [](RunConfig& c, const std::string& v) { c.max_text_positions = parse_number<int>(v); }},
      {"max_grid_side",
       [](RunConfig& c, const std::string& v) { c.max_grid_side = parse_number<int>(v); }},
      {"cell_scale", [](RunConfig& c, const std::string& v) { c.cell_scale = parse_number<int>(v); }},
      {"init_seed",
       [](RunConfig& c, const std::string& v) { c.init_seed = parse_number<std::uint64_t>(v); }},
      {"learning_rate",
       [](RunConfig& c, const std::string& v) { c.learning_rate = parse_number<double>(v); }},
      {"steps", [](RunConfig& c, const std::string& v) { c.steps = parse_number<int>(v); }},
      {"batch_size", [](RunConfig& c, const std::string& v) { c.batch_size = parse_number<int>(v); }},
      {"warmup_fraction",
       [](RunConfig& c, const std::string& v) { c.warmup_fraction = parse_number<double>(v); }},
      {"lr_floor_fraction",
       [](RunConfig& c, const std::string& v) { c.lr_floor_fraction = parse_number<double>(v); }},
      {"grad_clip", [](RunConfig& c, const std::string& v) { c.grad_clip = parse_number<double>(v); }},
      {"beta1", [](RunConfig& c, const std::string& v) { c.beta1 = parse_number<double>(v); }},
      {"beta2", [](RunConfig& c, const std::string& v) { c.beta2 = parse_number<double>(v); }},
      {"checkpoint_every",
       [](RunConfig& c, const std::string& v) { c.checkpoint_every = parse_number<int>(v); }},
      {"seed", [](RunConfig& c, const std::string& v) { c.seed = parse_number<std::uint64_t>(v); }},
      {"grid", [](RunConfig& c, const std::string& v) { c.grid = parse_number<int>(v); }},
      {"count", [](RunConfig& c, const std::string& v) { c.count = parse_number<int>(v); }},
      {"val_count", [](RunConfig& c, const std::string& v) { c.val_count = parse_number<int>(v); }},
      {"val_seed",
       [](RunConfig& c, const std::string& v) { c.val_seed = parse_number<std::uint64_t>(v); }},
      {"allow_no_object",
       [](RunConfig& c, const std::string& v) { c.allow_no_object = parse_bool(v); }},
      {"paradigm", [](RunConfig& c, const std::string& v) { c.paradigm = v; }},
      {"max_new_tokens",
       [](RunConfig& c, const std::string& v) { c.max_new_tokens = parse_number<int>(v); }},
      {"refine_tolerance",
       [](RunConfig& c, const std::string& v) { c.refine_tolerance = parse_number<double>(v); }},
      {"repeats", [](RunConfig& c, const std::string& v) { c.repeats = parse_number<int>(v); }},
      {"mode", [](RunConfig& c, const std::string& v) { c.mode = v; }},
      {"refine", [](RunConfig& c, const std::string& v) { c.refine = parse_bool(v); }},
      {"no_hybrid", [](RunConfig& c, const std::string& v) { c.no_hybrid = parse_bool(v); }},
      {"no_fusion", [](RunConfig& c, const std::string& v) { c.no_fusion = parse_bool(v); }},
  };
  auto it = kSetters.find(key);
  if (it == kSetters.end()) {
    throw config_error("unknown config key '" + key + "'");
  }
  it->second(*this, value);
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config file '" + path + "'");
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    const auto comment = line.find('#');
    if (comment != std::string::npos) line.erase(comment);
    const std::string content = trim(line);
    if (content.empty()) continue;
    const auto equals = content.find('=');
    if (equals == std::string::npos) {
      throw config_error("config line " + std::to_string(line_number) +
                         ": expected key = value");
    }
    set(trim(content.substr(0, equals)), trim(content.substr(equals + 1)));
  }
}

void RunConfig::echo(std::ostream& out) const {
  out << "embed_dim = " << embed_dim << '\n'
      << "layers = " << layers << '\n'
      << "heads = " << heads << '\n'
      << "mlp_hidden = " << mlp_hidden << '\n'
      << "max_text_positions = " << max_text_positions << '\n'
      << "max_grid_side = " << max_grid_side << '\n'
      << "cell_scale = " << cell_scale << '\n'
      << "init_seed = " << init_seed << '\n'
      << "learning_rate = " << learning_rate << '\n'
      << "steps = " << steps << '\n'
      << "batch_size = " << batch_size << '\n'
      << "warmup_fraction = " << warmup_fraction << '\n'
      << "lr_floor_fraction = " << lr_floor_fraction << '\n'
      << "grad_clip = " << grad_clip << '\n'
      << "beta1 = " << beta1 << '\n'
      << "beta2 = " << beta2 << '\n'
      << "checkpoint_every = " << checkpoint_every << '\n'
      << "seed = " << seed << '\n'
      << "grid = " << grid << '\n'
      << "count = " << count << '\n'
      << "val_count = " << val_count << '\n'
      << "val_seed = " << val_seed << '\n'
      << "allow_no_object = " << (allow_no_object ? "true" : "false") << '\n'
      << "paradigm = " << paradigm << '\n'
      << "max_new_tokens = " << max_new_tokens << '\n'
      << "refine_tolerance = " << refine_tolerance << '\n'
      << "repeats = " << repeats << '\n'
      << "mode = " << mode << '\n'
      << "refine = " << (refine ? "true" : "false") << '\n'
      << "no_hybrid = " << (no_hybrid ? "true" : "false") << '\n'
      << "no_fusion = " << (no_fusion ? "true" : "false") << '\n';
}

ModelConfig RunConfig::to_model_config(const Vocabulary& vocab) const {
  ModelConfig config = make_default_config(vocab);
  config.embed_dim = embed_dim;
  config.layers = layers;
  config.heads = heads;
  config.mlp_hidden = mlp_hidden;
  config.max_text_positions = max_text_positions;
  config.max_grid_side = max_grid_side;
  config.cell_scale = cell_scale;
  config.init_seed = init_seed;
  config.validate();
  return config;
}

TrainConfig RunConfig::to_train_config() const {
  TrainConfig config;
  config.learning_rate = learning_rate;
  config.steps = steps;
  config.batch_size = batch_size;
  config.warmup_fraction = warmup_fraction;
  config.lr_floor_fraction = lr_floor_fraction;
  config.grad_clip = grad_clip;
  config.seed = seed;
  config.beta1 = beta1;
  config.beta2 = beta2;
  config.checkpoint_every = checkpoint_every;
  return config;
}

Paradigm RunConfig::data_paradigm() const {
  if (paradigm == "allmask") return Paradigm::kAllMask;
  if (paradigm == "nexttoken") return Paradigm::kNextToken;
  throw config_error("unknown paradigm '" + paradigm + "'");
}

}  // namespace allmask
