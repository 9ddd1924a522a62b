#include "finctx/tokenizer.hpp"

#include <algorithm>
#include <cctype>

#include "finctx/error.hpp"

namespace finctx {

std::vector<std::string> tokenize_words(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        const char lc = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        if ((lc >= 'a' && lc <= 'z') || (lc >= '0' && lc <= '9')) {
            cur.push_back(lc);
            continue;
        }
        if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
        if (lc == '.' || lc == ',') out.push_back(std::string(1, lc));
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

Tokenizer Tokenizer::fit(const std::vector<std::string>& texts, int max_vocab) {
    if (max_vocab < 4) throw ConfigError("tokenizer vocabulary must hold at least one word beyond specials");
    std::unordered_map<std::string, int64_t> freq;
    for (const std::string& t : texts) {
        for (const std::string& w : tokenize_words(t)) ++freq[w];
    }
    std::vector<std::pair<std::string, int64_t>> ranked(freq.begin(), freq.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    Tokenizer tok;
    tok.id_to_token_ = {"<unk>", "<bos>", "<doc>"};
    const size_t room = static_cast<size_t>(max_vocab) - 3;
    for (size_t i = 0; i < ranked.size() && i < room; ++i) tok.id_to_token_.push_back(ranked[i].first);
    tok.index();
    return tok;
}

Tokenizer Tokenizer::from_vocab(const std::vector<std::string>& full_vocab) {
    if (full_vocab.size() < 3 || full_vocab[0] != "<unk>" || full_vocab[1] != "<bos>" || full_vocab[2] != "<doc>") {
        throw DataError("tokenizer vocabulary must start with <unk>, <bos>, <doc>");
    }
    Tokenizer tok;
    tok.id_to_token_ = full_vocab;
    tok.index();
    return tok;
}

void Tokenizer::index() {
    token_to_id_.clear();
    for (size_t i = 0; i < id_to_token_.size(); ++i) {
        if (!token_to_id_.emplace(id_to_token_[i], static_cast<int>(i)).second) {
            throw DataError("duplicate token '" + id_to_token_[i] + "' in vocabulary");
        }
    }
}

std::vector<int> Tokenizer::encode(const std::string& text) const {
    std::vector<int> out;
    for (const std::string& w : tokenize_words(text)) {
        auto it = token_to_id_.find(w);
        out.push_back(it == token_to_id_.end() ? kUnk : it->second);
    }
    return out;
}

std::string Tokenizer::decode(const std::vector<int>& ids) const {
    std::string out;
    for (int id : ids) {
        if (id < 0 || id >= vocab_size()) throw DataError("token id " + std::to_string(id) + " outside vocabulary");
        if (!out.empty()) out.push_back(' ');
        out += id_to_token_[static_cast<size_t>(id)];
    }
    return out;
}

}  // namespace finctx
