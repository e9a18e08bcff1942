#include "doctest.h"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "allmask/config.hpp"

using namespace allmask;

TEST_CASE("flat key = value parsing with comments") {
  const std::string path = "/tmp/allmask_test_config.txt";
  {
    std::ofstream out(path);
    out << "# model size\n"
        << "embed_dim = 32\n"
        << "steps=123   # inline comment\n"
        << "\n"
        << "mode = nexttoken\n"
        << "refine = true\n";
  }
  RunConfig config;
  config.load_file(path);
  CHECK(config.embed_dim == 32);
  CHECK(config.steps == 123);
  CHECK(config.mode == "nexttoken");
  CHECK(config.refine);
  CHECK(config.layers == 2);  // untouched default
  std::remove(path.c_str());
}

TEST_CASE("unknown keys are rejected") {
  RunConfig config;
  CHECK_THROWS_AS(config.set("不明", "1"), config_error);
  CHECK_THROWS_AS(config.set("emed_dim", "32"), config_error);
  CHECK_THROWS_AS(config.set("steps", "notanumber"), config_error);
  CHECK_THROWS_AS(config.set("refine", "maybe"), config_error);
}

TEST_CASE("echo is parseable and fully resolved") {
  RunConfig config;
  config.set("embed_dim", "48");
  config.set("no_fusion", "true");
  std::ostringstream out;
  config.echo(out);

  const std::string path = "/tmp/allmask_test_echo.txt";
  {
    std::ofstream file(path);
    file << out.str();
  }
  RunConfig parsed;
  parsed.load_file(path);
  CHECK(parsed.embed_dim == 48);
  CHECK(parsed.no_fusion);
  CHECK(parsed.steps == config.steps);
  std::remove(path.c_str());
}

TEST_CASE("conversion into model and train configs") {
  const Vocabulary vocab = make_toy_vocabulary();
  RunConfig config;
  config.set("embed_dim", "32");
  config.set("heads", "4");
  config.set("learning_rate", "0.001");
  const ModelConfig model = config.to_model_config(vocab);
  CHECK(model.embed_dim == 32);
  CHECK(model.vocab_size == vocab.size());
  CHECK(model.seg_id == vocab.seg());
  const TrainConfig train = config.to_train_config();
  CHECK(train.learning_rate == 0.001);
  CHECK(config.data_paradigm() == Paradigm::kAllMask);
  config.set("paradigm", "nexttoken");
  CHECK(config.data_paradigm() == Paradigm::kNextToken);
  config.set("paradigm", "bogus");
  CHECK_THROWS_AS(config.data_paradigm(), config_error);

  RunConfig bad;
  bad.set("embed_dim", "30");
  bad.set("heads", "4");
  CHECK_THROWS_AS(bad.to_model_config(vocab), std::invalid_argument);
}

TEST_CASE("missing config file is a config error") {
  RunConfig config;
  CHECK_THROWS_AS(config.load_file("/tmp/allmask_no_such_config.txt"), config_error);
}
