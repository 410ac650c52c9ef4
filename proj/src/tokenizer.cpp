#include "diptych/tokenizer.hpp"

#include <cctype>

namespace diptych {

Tokenizer::Tokenizer() {
    words_ = {
        "<pad>", "<unk>",
        // IC prompt template
        "a", "diptych", "with", "two", "side", "by", "images", "of", "the", "same",
        "scene", "on", "right", "is", "exactly", "as", "left", "but",
        // instruction grammar
        "remove", "add", "replace", "turn", "make", "image", "to", "top", "bottom",
        "keep", "everything", "grayscale", "invert", "colors", "darken", "brighten",
        // caption grammar
        "an", "empty", "and", "in",
        // colors
        "red", "green", "blue", "yellow", "magenta",
        // shapes
        "square", "circle", "triangle",
    };
}

int Tokenizer::id(const std::string& w) const {
    for (size_t i = 0; i < words_.size(); ++i)
        if (words_[i] == w) return static_cast<int>(i);
    return kUnk;
}

std::vector<int> Tokenizer::encode(const std::string& text, int max_len) const {
    std::vector<int> ids;
    std::string word;
    auto flush = [&] {
        if (!word.empty()) {
            ids.push_back(id(word));
            word.clear();
        }
    };
    for (char ch : text) {
        if (std::isalnum(static_cast<unsigned char>(ch)))
            word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        else
            flush();
    }
    flush();
    ids.resize(static_cast<size_t>(max_len), kPad);
    return ids;
}

}  // namespace diptych
