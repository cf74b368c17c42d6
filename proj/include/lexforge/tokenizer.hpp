#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace lexforge {

using TokenId = std::uint32_t;
using TokenSequence = std::vector<TokenId>;

inline constexpr std::size_t kByteAtoms = 256;
inline constexpr std::size_t kSpecialCount = 3;
inline constexpr std::size_t kMinVocabTarget = kByteAtoms + kSpecialCount;

struct Merge {
    TokenId left = 0;
    TokenId right = 0;
    friend bool operator==(const Merge&, const Merge&) = default;
};

// Byte-level BPE vocabulary: 256 byte atoms, then one id per merge in training
// order, then BOS, EOS, PAD. Immutable once built.
class Vocabulary {
public:
    Vocabulary(std::size_t target_size, std::vector<Merge> merges);

    std::size_t target_size() const noexcept { return target_size_; }
    std::size_t size() const noexcept { return kByteAtoms + merges_.size() + kSpecialCount; }
    const std::vector<Merge>& merges() const noexcept { return merges_; }

    TokenId bos() const noexcept { return static_cast<TokenId>(kByteAtoms + merges_.size()); }
    TokenId eos() const noexcept { return bos() + 1; }
    TokenId pad() const noexcept { return bos() + 2; }
    bool is_special(TokenId id) const noexcept { return id >= bos() && id < size(); }

    // Raw bytes an id expands to; empty for specials.
    const std::string& expansion(TokenId id) const;

    // Text manifest: `bpe-v1`, target size, then one "left right" line per merge.
    std::string serialize() const;
    static Vocabulary parse(std::string_view text);
    void save(const std::filesystem::path& path) const;
    static Vocabulary load(const std::filesystem::path& path);

private:
    std::size_t target_size_;
    std::vector<Merge> merges_;
    std::vector<std::string> expansions_;
};

// Greedy BPE: each round merges the most frequent adjacent pair (ties go to the
// lexicographically smallest id pair). Pairs never span document boundaries.
Vocabulary train_bpe(std::span<const std::string> corpus, std::size_t target_size);

TokenSequence encode(const Vocabulary& vocab, std::string_view text);
std::string decode(const Vocabulary& vocab, std::span<const TokenId> tokens);

// Replaces every ill-formed UTF-8 subsequence with U+FFFD.
std::string sanitize_utf8(std::string_view bytes);

}  // namespace lexforge
