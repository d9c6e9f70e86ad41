#include "vlbert/vocab.hpp"

#include <sstream>
#include <stdexcept>

namespace vlb {

std::vector<std::string> split_whitespace(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string w;
    while (in >> w) out.push_back(w);
    return out;
}

void Vocabulary::add(const std::string& token) {
    if (ids_.count(token)) return;
    ids_[token] = static_cast<int>(tokens_.size());
    tokens_.push_back(token);
}

Vocabulary Vocabulary::build(const std::vector<std::string>& corpus_tokens) {
    if (corpus_tokens.empty()) throw std::invalid_argument("Vocabulary::build: empty token stream");
    Vocabulary v;
    for (const char* s : {kCls, kSep, kEnd, kMask, kImg}) v.add(s);
    for (const auto& t : corpus_tokens) {
        if (t.empty()) throw std::invalid_argument("Vocabulary::build: empty token");
        v.add(t);
    }
    return v;
}

int Vocabulary::id(const std::string& token) const {
    auto it = ids_.find(token);
    if (it == ids_.end()) throw std::out_of_range("Vocabulary: unknown token '" + token + "'");
    return it->second;
}

bool Vocabulary::contains(const std::string& token) const { return ids_.count(token) != 0; }

const std::string& Vocabulary::token(int id) const {
    if (id < 0 || id >= size()) {
        throw std::out_of_range("Vocabulary: id " + std::to_string(id) + " outside 0.." +
                                std::to_string(size() - 1));
    }
    return tokens_[id];
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& words) const {
    std::vector<int> out;
    out.reserve(words.size());
    for (const auto& w : words) out.push_back(id(w));
    return out;
}

std::string Vocabulary::serialize() const {
    std::string out;
    for (const auto& t : tokens_) {
        out += t;
        out += '\n';
    }
    return out;
}

Vocabulary Vocabulary::deserialize(const std::string& text) {
    Vocabulary v;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (v.ids_.count(line)) throw std::invalid_argument("Vocabulary: duplicate token '" + line + "'");
        v.add(line);
    }
    const char* expect[] = {kCls, kSep, kEnd, kMask, kImg};
    for (int i = 0; i < num_specials; ++i) {
        if (v.size() <= i || v.tokens_[i] != expect[i]) {
            throw std::invalid_argument("Vocabulary: specials missing or out of order");
        }
    }
    return v;
}

}  // namespace vlb
