#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "allmask/common.hpp"

namespace allmask {

// Closed vocabulary over the toy referring-segmentation world. Token ids are
// positions in a fixed ordered list: specials first, then template words,
// shape words, color words, and the two patch-classification words used by
// the next-token baseline.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> words);

  int size() const { return static_cast<int>(words_.size()); }

  bool contains(const std::string& word) const { return index_.count(word) > 0; }

  // Throws encoding_error for out-of-vocabulary words.
  int id(const std::string& word) const;

  // Throws std::invalid_argument for out-of-range ids.
  const std::string& word(int id) const;

  TokenSequence encode(const std::vector<std::string>& words) const;
  std::vector<std::string> decode(const TokenSequence& ids) const;

  // Decoded ids joined with single spaces.
  std::string to_text(const TokenSequence& ids) const;

  int bos() const { return id("<bos>"); }
  int eos() const { return id("<eos>"); }
  int pad() const { return id("<pad>"); }
  int seg() const { return id("<seg>"); }
  int mask_token() const { return id("[mask]"); }
  int fg() const { return id("fg"); }
  int bg() const { return id("bg"); }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

// The canonical toy vocabulary shared by dataset generation, training and
// inference. Deterministic; ids are stable across runs.
Vocabulary make_toy_vocabulary();

// Instruction/answer templates. "{c}" and "{s}" are color/shape slots,
// substituted at instantiation time; every other entry is a vocabulary word.
const std::vector<std::vector<std::string>>& question_templates();
const std::vector<std::vector<std::string>>& answer_templates();
const std::vector<std::string>& refusal_template();

std::vector<std::string> instantiate_template(const std::vector<std::string>& tmpl,
                                              const std::string& color_word,
                                              const std::string& shape_word);

}  // namespace allmask
