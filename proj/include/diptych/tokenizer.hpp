#pragma once

#include <string>
#include <vector>

namespace diptych {

// Closed-vocabulary tokenizer. The vocabulary covers the IC prompt template,
// the instruction grammar and the pretraining caption grammar; anything else
// maps to <unk>. Token 0 is <pad>, which also serves as the null prompt for
// classifier-free guidance.
class Tokenizer {
  public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;

    Tokenizer();

    int vocab_size() const { return static_cast<int>(words_.size()); }

    // Lowercases, treats any non-alphanumeric character as a separator,
    // then maps words to ids. Result is truncated or padded to max_len.
    std::vector<int> encode(const std::string& text, int max_len) const;

    std::string word(int id) const { return words_.at(static_cast<size_t>(id)); }
    int id(const std::string& w) const;

  private:
    std::vector<std::string> words_;
};

}  // namespace diptych
