#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace finctx {

// lowercase alphanumeric runs plus '.' and ',' as single-character tokens
std::vector<std::string> tokenize_words(const std::string& text);

// Word-level vocabulary with three reserved ids. Built from training text
// only; everything else maps to <unk>.
class Tokenizer {
public:
    static constexpr int kUnk = 0;
    static constexpr int kBos = 1;
    static constexpr int kDoc = 2;  // document delimiter for concatenation inputs

    Tokenizer() = default;

    // frequency-ranked vocabulary, ties broken lexicographically
    static Tokenizer fit(const std::vector<std::string>& texts, int max_vocab);
    static Tokenizer from_vocab(const std::vector<std::string>& full_vocab);  // as vocab() emits

    std::vector<int> encode(const std::string& text) const;
    std::string decode(const std::vector<int>& ids) const;

    int vocab_size() const { return static_cast<int>(id_to_token_.size()); }
    const std::vector<std::string>& vocab() const { return id_to_token_; }

private:
    std::vector<std::string> id_to_token_;
    std::unordered_map<std::string, int> token_to_id_;

    void index();
};

}  // namespace finctx
