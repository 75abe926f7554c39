#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "mdt/common.hpp"

namespace mdt {

// Subword model: ordered merge rules plus a vocabulary. Reserved tokens (tag
// tokens and the four structural specials) are atomic: they never participate
// in merges and always encode to a single index.
struct BpeModel {
    static constexpr const char *kEow = "</w>"; // suffix marker on the last subword of a word
    static constexpr const char *kPad = "<pad>";
    static constexpr const char *kBos = "<s>";
    static constexpr const char *kEos = "</s>";
    static constexpr const char *kUnk = "<unk>";

    std::vector<std::pair<std::string, std::string>> merges; // in learning order
    std::vector<std::string> vocab;                          // index -> token
    std::unordered_map<std::string, int> token_to_id;
    std::set<std::string> reserved; // includes the specials
    std::size_t target_vocab_size = 0;
    bool joint = true;

    int pad_id() const { return id_of(kPad); }
    int bos_id() const { return id_of(kBos); }
    int eos_id() const { return id_of(kEos); }
    int unk_id() const { return id_of(kUnk); }
    int id_of(const std::string &token) const;
    std::size_t vocab_size() const { return vocab.size(); }
};

using TokenSeq = std::vector<int>;

// Greedy pair merging until vocab_size is reached or no pair occurs twice.
// Ties on frequency break lexicographically on the (left, right) pair.
// `reserved` lists atomic tokens beyond the always-present specials.
BpeModel learn_bpe(const std::vector<std::string> &lines, std::size_t vocab_size,
                   const std::vector<std::string> &reserved);

TokenSeq bpe_encode(const BpeModel &model, const std::string &text);
std::string bpe_decode(const BpeModel &model, const TokenSeq &tokens);

void save_bpe(const BpeModel &model, const std::filesystem::path &merges_path,
              const std::filesystem::path &vocab_path);
BpeModel load_bpe(const std::filesystem::path &merges_path,
                  const std::filesystem::path &vocab_path,
                  const std::vector<std::string> &reserved);

std::vector<std::string> utf8_codepoints(const std::string &s);

} // namespace mdt
