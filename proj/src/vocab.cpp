#include "allmask/vocab.hpp"

#include <sstream>

namespace allmask {

Vocabulary::Vocabulary(std::vector<std::string> words) : words_(std::move(words)) {
  for (int i = 0; i < static_cast<int>(words_.size()); ++i) {
    index_.emplace(words_[i], i);
  }
}

int Vocabulary::id(const std::string& word) const {
  auto it = index_.find(word);
  if (it == index_.end()) {
    throw encoding_error("out-of-vocabulary word: '" + word + "'");
  }
  return it->second;
}

const std::string& Vocabulary::word(int id) const {
  if (id < 0 || id >= size()) {
    throw std::invalid_argument("token id out of range: " + std::to_string(id));
  }
  return words_[static_cast<std::size_t>(id)];
}

TokenSequence Vocabulary::encode(const std::vector<std::string>& words) const {
  TokenSequence ids;
  ids.reserve(words.size());
  for (const auto& w : words) ids.push_back(id(w));
  return ids;
}

std::vector<std::string> Vocabulary::decode(const TokenSequence& ids) const {
  std::vector<std::string> words;
  words.reserve(ids.size());
  for (int t : ids) words.push_back(word(t));
  return words;
}

std::string Vocabulary::to_text(const TokenSequence& ids) const {
  std::ostringstream out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i > 0) out << ' ';
    out << word(ids[i]);
  }
  return out.str();
}

Vocabulary make_toy_vocabulary() {
  return Vocabulary({
      // specials
      "<bos>", "<eos>", "<pad>", "<seg>", "[mask]",
      // template words
      "segment", "the", "please", "in", "image", "where", "is", "output",
      "segmentation", "mask", "can", "you", "provide", "for", "and",
      "highlight", "sure", "here", "there", "no",
      // shape words
      "rect", "disk", "cross",
      // color words
      "red", "green", "blue", "yellow",
      // patch words (next-token baseline)
      "fg", "bg",
  });
}

const std::vector<std::vector<std::string>>& question_templates() {
  static const std::vector<std::vector<std::string>> kTemplates = {
      {"segment", "the", "{c}", "{s}"},
      {"please", "segment", "the", "{c}", "{s}", "in", "the", "image"},
      {"where", "is", "the", "{c}", "{s}", "output", "the", "segmentation", "mask"},
      {"can", "you", "segment", "the", "{c}", "{s}"},
      {"provide", "the", "segmentation", "mask", "for", "the", "{c}", "{s}"},
      {"please", "segment", "the", "image", "and", "highlight", "the", "{c}", "{s}"},
  };
  return kTemplates;
}

const std::vector<std::vector<std::string>>& answer_templates() {
  static const std::vector<std::vector<std::string>> kTemplates = {
      {"sure", "here", "is", "the", "segmentation", "mask", "for", "the", "{c}", "{s}", "<seg>"},
      {"here", "is", "the", "segmentation", "mask", "for", "the", "{c}", "{s}", "<seg>"},
      {"the", "segmentation", "mask", "for", "the", "{c}", "{s}", "is", "<seg>"},
      {"sure", "the", "segmentation", "mask", "for", "the", "{c}", "{s}", "is", "<seg>"},
      {"the", "mask", "for", "the", "{c}", "{s}", "is", "<seg>"},
  };
  return kTemplates;
}

const std::vector<std::string>& refusal_template() {
  static const std::vector<std::string> kRefusal = {
      "there", "is", "no", "{c}", "{s}", "in", "the", "image"};
  return kRefusal;
}

std::vector<std::string> instantiate_template(const std::vector<std::string>& tmpl,
                                              const std::string& color_word,
                                              const std::string& shape_word) {
  std::vector<std::string> out;
  out.reserve(tmpl.size());
  for (const auto& w : tmpl) {
    if (w == "{c}") {
      out.push_back(color_word);
    } else if (w == "{s}") {
      out.push_back(shape_word);
    } else {
      out.push_back(w);
    }
  }
  return out;
}

}  // namespace allmask
