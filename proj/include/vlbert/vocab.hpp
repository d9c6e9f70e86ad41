#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace vlb {

// Whitespace-token vocabulary with dense ids. The five specials occupy the
// first ids, in a fixed order, so id assignment is reproducible.
class Vocabulary {
public:
    static constexpr const char* kCls = "[CLS]";
    static constexpr const char* kSep = "[SEP]";
    static constexpr const char* kEnd = "[END]";
    static constexpr const char* kMask = "[MASK]";
    static constexpr const char* kImg = "[IMG]";

    // Specials first, then corpus tokens in first-appearance order.
    static Vocabulary build(const std::vector<std::string>& corpus_tokens);

    int id(const std::string& token) const;
    bool contains(const std::string& token) const;
    const std::string& token(int id) const;
    int size() const { return static_cast<int>(tokens_.size()); }

    int cls() const { return 0; }
    int sep() const { return 1; }
    int end() const { return 2; }
    int mask() const { return 3; }
    int img() const { return 4; }
    static constexpr int num_specials = 5;

    // True for ids that name ordinary words (not specials).
    bool is_word(int id) const { return id >= num_specials && id < size(); }

    std::vector<int> encode(const std::vector<std::string>& words) const;

    // One token per line, specials first.
    std::string serialize() const;
    static Vocabulary deserialize(const std::string& text);

private:
    Vocabulary() = default;
    void add(const std::string& token);
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> ids_;
};

std::vector<std::string> split_whitespace(const std::string& text);

}  // namespace vlb
