#include "lexforge/tokenizer.hpp"

#include "lexforge/errors.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace lexforge {

namespace {

// Above this many ids the pair table switches from dense to hashed.
constexpr std::size_t kDensePairLimit = 4096;

std::vector<std::string> build_expansions(const std::vector<Merge>& merges) {
    std::vector<std::string> out;
    out.reserve(kByteAtoms + merges.size() + kSpecialCount);
    for (std::size_t b = 0; b < kByteAtoms; ++b) {
        out.emplace_back(1, static_cast<char>(b));
    }
    for (const Merge& m : merges) {
        out.push_back(out[m.left] + out[m.right]);
    }
    for (std::size_t i = 0; i < kSpecialCount; ++i) {
        out.emplace_back();
    }
    return out;
}

// Rewrites `seq` in place, replacing every non-overlapping (left, right)
// occurrence, scanning left to right.
void apply_merge(std::vector<TokenId>& seq, const Merge& m, TokenId merged) {
    if (seq.size() < 2) {
        return;
    }
    std::size_t write = 0;
    std::size_t read = 0;
    const std::size_t n = seq.size();
    while (read < n) {
        if (read + 1 < n && seq[read] == m.left && seq[read + 1] == m.right) {
            seq[write++] = merged;
            read += 2;
        } else {
            seq[write++] = seq[read++];
        }
    }
    seq.resize(write);
}

std::size_t parse_size(std::string_view field, std::string_view what) {
    std::size_t value = 0;
    const auto* first = field.data();
    const auto* last = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last || field.empty()) {
        throw Error(ErrorCode::ParseError, "bad " + std::string(what) + ": '" + std::string(field) + "'");
    }
    return value;
}

}  // namespace

Vocabulary::Vocabulary(std::size_t target_size, std::vector<Merge> merges)
    : target_size_(target_size), merges_(std::move(merges)) {
    for (std::size_t i = 0; i < merges_.size(); ++i) {
        const std::size_t limit = kByteAtoms + i;
        if (merges_[i].left >= limit || merges_[i].right >= limit) {
            throw Error(ErrorCode::InvalidArgument,
                        "merge " + std::to_string(i) + " references an id not yet defined");
        }
    }
    expansions_ = build_expansions(merges_);
}

const std::string& Vocabulary::expansion(TokenId id) const {
    if (id >= size()) {
        throw Error(ErrorCode::UnknownToken, "token id " + std::to_string(id) + " >= vocabulary size " +
                                                 std::to_string(size()));
    }
    return expansions_[id];
}

std::string Vocabulary::serialize() const {
    std::string out = "bpe-v1\n" + std::to_string(target_size_) + "\n";
    for (const Merge& m : merges_) {
        out += std::to_string(m.left);
        out += ' ';
        out += std::to_string(m.right);
        out += '\n';
    }
    return out;
}

Vocabulary Vocabulary::parse(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        const std::size_t nl = text.find('\n', start);
        if (nl == std::string_view::npos) {
            throw Error(ErrorCode::ParseError, "vocabulary file must end with a newline");
        }
        lines.push_back(text.substr(start, nl - start));
        start = nl + 1;
    }
    if (lines.size() < 2 || lines[0] != "bpe-v1") {
        throw Error(ErrorCode::ParseError, "missing bpe-v1 header");
    }
    const std::size_t target = parse_size(lines[1], "target size");
    std::vector<Merge> merges;
    merges.reserve(lines.size() - 2);
    for (std::size_t i = 2; i < lines.size(); ++i) {
        const std::string_view line = lines[i];
        const std::size_t sp = line.find(' ');
        if (sp == std::string_view::npos) {
            throw Error(ErrorCode::ParseError, "merge line " + std::to_string(i + 1) + " lacks a separator");
        }
        const std::size_t left = parse_size(line.substr(0, sp), "merge id");
        const std::size_t right = parse_size(line.substr(sp + 1), "merge id");
        const std::size_t limit = kByteAtoms + merges.size();
        if (left >= limit || right >= limit) {
            throw Error(ErrorCode::ParseError, "merge line " + std::to_string(i + 1) + " references an undefined id");
        }
        merges.push_back({static_cast<TokenId>(left), static_cast<TokenId>(right)});
    }
    return Vocabulary(target, std::move(merges));
}

void Vocabulary::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorCode::IoError, "cannot write " + path.string());
    }
    const std::string text = serialize();
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::IoError, "cannot read " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

Vocabulary train_bpe(std::span<const std::string> corpus, std::size_t target_size) {
    if (corpus.empty()) {
        throw Error(ErrorCode::CorpusEmpty, "tokenizer corpus has no documents");
    }
    if (target_size < kMinVocabTarget) {
        throw Error(ErrorCode::VocabTooSmall,
                    "target size " + std::to_string(target_size) + " < " + std::to_string(kMinVocabTarget));
    }
    const std::size_t budget = target_size - kMinVocabTarget;

    std::vector<std::vector<TokenId>> docs;
    docs.reserve(corpus.size());
    for (const std::string& doc : corpus) {
        std::vector<TokenId> ids(doc.size());
        std::transform(doc.begin(), doc.end(), ids.begin(),
                       [](char c) { return static_cast<TokenId>(static_cast<unsigned char>(c)); });
        docs.push_back(std::move(ids));
    }

    // Dense pair table for small vocabularies; row-major scan with a strict `>`
    // yields the smallest (left, right) among equally frequent pairs. Large
    // targets fall back to a hash table with the same total order.
    const std::size_t max_ids = kByteAtoms + budget;
    const bool dense = max_ids <= kDensePairLimit;
    std::vector<std::uint32_t> counts(dense ? max_ids * max_ids : 0);
    std::unordered_map<std::uint64_t, std::uint32_t> sparse;
    std::vector<Merge> merges;
    merges.reserve(budget);

    for (std::size_t round = 0; round < budget; ++round) {
        const std::size_t live = kByteAtoms + merges.size();
        std::uint32_t best = 0;
        Merge chosen{};
        if (dense) {
            std::fill(counts.begin(), counts.end(), 0U);
            for (const auto& seq : docs) {
                for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
                    ++counts[seq[i] * max_ids + seq[i + 1]];
                }
            }
            for (std::size_t l = 0; l < live; ++l) {
                const std::uint32_t* row = counts.data() + l * max_ids;
                for (std::size_t r = 0; r < live; ++r) {
                    if (row[r] > best) {
                        best = row[r];
                        chosen = {static_cast<TokenId>(l), static_cast<TokenId>(r)};
                    }
                }
            }
        } else {
            sparse.clear();
            for (const auto& seq : docs) {
                for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
                    ++sparse[(static_cast<std::uint64_t>(seq[i]) << 32) | seq[i + 1]];
                }
            }
            std::uint64_t best_key = 0;
            for (const auto& [key, n] : sparse) {
                if (n > best || (n == best && key < best_key)) {
                    best = n;
                    best_key = key;
                }
            }
            chosen = {static_cast<TokenId>(best_key >> 32), static_cast<TokenId>(best_key & 0xFFFFFFFFU)};
        }
        if (best == 0) {
            break;  // every document is a single token; nothing left to merge
        }
        const auto merged_id = static_cast<TokenId>(live);
        for (auto& seq : docs) {
            apply_merge(seq, chosen, merged_id);
        }
        merges.push_back(chosen);
    }
    return Vocabulary(target_size, std::move(merges));
}

TokenSequence encode(const Vocabulary& vocab, std::string_view text) {
    TokenSequence seq(text.size());
    std::transform(text.begin(), text.end(), seq.begin(),
                   [](char c) { return static_cast<TokenId>(static_cast<unsigned char>(c)); });
    const auto& merges = vocab.merges();
    for (std::size_t i = 0; i < merges.size() && seq.size() > 1; ++i) {
        apply_merge(seq, merges[i], static_cast<TokenId>(kByteAtoms + i));
    }
    return seq;
}

std::string decode(const Vocabulary& vocab, std::span<const TokenId> tokens) {
    std::string bytes;
    for (TokenId id : tokens) {
        bytes += vocab.expansion(id);
    }
    return sanitize_utf8(bytes);
}

std::string sanitize_utf8(std::string_view bytes) {
    static constexpr std::string_view kReplacement = "\xEF\xBF\xBD";
    std::string out;
    out.reserve(bytes.size());
    const std::size_t n = bytes.size();
    std::size_t i = 0;
    auto byte = [&](std::size_t k) { return static_cast<unsigned char>(bytes[k]); };
    while (i < n) {
        const unsigned char lead = byte(i);
        if (lead < 0x80) {
            out += static_cast<char>(lead);
            ++i;
            continue;
        }
        std::size_t need = 0;
        unsigned char lo = 0x80;
        unsigned char hi = 0xBF;
        if (lead >= 0xC2 && lead <= 0xDF) {
            need = 1;
        } else if (lead >= 0xE0 && lead <= 0xEF) {
            need = 2;
            if (lead == 0xE0) lo = 0xA0;
            if (lead == 0xED) hi = 0x9F;
        } else if (lead >= 0xF0 && lead <= 0xF4) {
            need = 3;
            if (lead == 0xF0) lo = 0x90;
            if (lead == 0xF4) hi = 0x8F;
        } else {
            out += kReplacement;
            ++i;
            continue;
        }
        // Maximal-subpart replacement: a truncated sequence becomes one U+FFFD.
        std::size_t k = 1;
        for (; k <= need; ++k) {
            if (i + k >= n) break;
            const unsigned char c = byte(i + k);
            const unsigned char min = (k == 1) ? lo : 0x80;
            const unsigned char max = (k == 1) ? hi : 0xBF;
            if (c < min || c > max) break;
        }
        if (k == need + 1) {
            out.append(bytes.substr(i, need + 1));
            i += need + 1;
        } else {
            out += kReplacement;
            i += k;
        }
    }
    return out;
}

}  // namespace lexforge
