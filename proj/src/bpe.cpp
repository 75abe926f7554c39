#include "mdt/bpe.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

namespace mdt {

namespace {

using Word = std::vector<std::string>; // symbol sequence

Word symbolize(const std::string &word) {
    Word syms = utf8_codepoints(word);
    if (!syms.empty()) syms.back() += BpeModel::kEow;
    return syms;
}

void apply_merge(Word &w, const std::string &left, const std::string &right) {
    std::size_t out = 0;
    for (std::size_t i = 0; i < w.size();) {
        if (i + 1 < w.size() && w[i] == left && w[i + 1] == right) {
            w[out++] = left + right;
            i += 2;
        } else {
            if (out != i) w[out] = std::move(w[i]);
            ++out;
            i += 1;
        }
    }
    w.resize(out);
}

Word apply_merges(const BpeModel &model, const std::string &word) {
    Word w = symbolize(word);
    for (const auto &[l, r] : model.merges) {
        if (w.size() < 2) break;
        apply_merge(w, l, r);
    }
    return w;
}

} // namespace

std::vector<std::string> utf8_codepoints(const std::string &s) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < s.size()) {
        unsigned char c = static_cast<unsigned char>(s[i]);
        std::size_t len = 1;
        if ((c & 0x80u) == 0x00u) len = 1;
        else if ((c & 0xE0u) == 0xC0u) len = 2;
        else if ((c & 0xF0u) == 0xE0u) len = 3;
        else if ((c & 0xF8u) == 0xF0u) len = 4;
        if (i + len > s.size()) len = 1; // tolerate truncated input
        out.push_back(s.substr(i, len));
        i += len;
    }
    return out;
}

int BpeModel::id_of(const std::string &token) const {
    auto it = token_to_id.find(token);
    if (it == token_to_id.end()) throw Error("token not in vocab: \"" + token + "\"");
    return it->second;
}

BpeModel learn_bpe(const std::vector<std::string> &lines, std::size_t vocab_size,
                   const std::vector<std::string> &reserved) {
    BpeModel model;
    model.target_vocab_size = vocab_size;
    model.reserved = {BpeModel::kPad, BpeModel::kBos, BpeModel::kEos, BpeModel::kUnk};

    auto add_token = [&](const std::string &t) {
        if (!model.token_to_id.count(t)) {
            model.token_to_id[t] = int(model.vocab.size());
            model.vocab.push_back(t);
        }
    };
    add_token(BpeModel::kPad);
    add_token(BpeModel::kBos);
    add_token(BpeModel::kEos);
    add_token(BpeModel::kUnk);
    for (const auto &r : reserved) {
        if (r.empty()) throw Error("reserved token must be non-empty");
        model.reserved.insert(r);
        add_token(r);
    }

    // word type counts; reserved tokens contribute nothing
    std::map<std::string, std::size_t> word_count;
    for (const auto &line : lines)
        for (const auto &w : split_ws(line))
            if (!model.reserved.count(w)) ++word_count[w];

    std::vector<Word> words;
    std::vector<std::size_t> counts;
    for (const auto &[w, c] : word_count) {
        words.push_back(symbolize(w));
        counts.push_back(c);
    }

    // alphabet, sorted for a stable index assignment
    std::set<std::string> alphabet;
    for (const auto &w : words)
        for (const auto &s : w) alphabet.insert(s);
    for (const auto &s : alphabet) add_token(s);

    if (vocab_size <= model.vocab.size())
        throw Error("vocab_size " + std::to_string(vocab_size) +
                    " does not exceed alphabet + reserved size " +
                    std::to_string(model.vocab.size()));

    while (model.vocab.size() < vocab_size) {
        std::map<std::pair<std::string, std::string>, std::size_t> pair_count;
        for (std::size_t wi = 0; wi < words.size(); ++wi)
            for (std::size_t i = 0; i + 1 < words[wi].size(); ++i)
                pair_count[{words[wi][i], words[wi][i + 1]}] += counts[wi];

        // most frequent pair; ties resolve to the lexicographically smallest,
        // which std::map iteration order gives us for free
        std::pair<std::string, std::string> best;
        std::size_t best_count = 0;
        for (const auto &[pair, c] : pair_count) {
            if (c > best_count) {
                best = pair;
                best_count = c;
            }
        }
        if (best_count < 2) break;

        for (auto &w : words) apply_merge(w, best.first, best.second);
        model.merges.push_back(best);
        add_token(best.first + best.second);
    }
    return model;
}

TokenSeq bpe_encode(const BpeModel &model, const std::string &text) {
    TokenSeq out;
    std::unordered_map<std::string, TokenSeq> cache;
    for (const auto &word : split_ws(text)) {
        if (model.reserved.count(word)) {
            out.push_back(model.id_of(word));
            continue;
        }
        auto it = cache.find(word);
        if (it == cache.end()) {
            TokenSeq ids;
            for (const auto &sym : apply_merges(model, word)) {
                auto v = model.token_to_id.find(sym);
                ids.push_back(v == model.token_to_id.end() ? model.unk_id() : v->second);
            }
            it = cache.emplace(word, std::move(ids)).first;
        }
        out.insert(out.end(), it->second.begin(), it->second.end());
    }
    return out;
}

std::string bpe_decode(const BpeModel &model, const TokenSeq &tokens) {
    std::vector<std::string> words;
    std::string current;
    const std::string eow = BpeModel::kEow;
    auto flush = [&]() {
        if (!current.empty()) {
            words.push_back(current);
            current.clear();
        }
    };
    for (int id : tokens) {
        if (id < 0 || std::size_t(id) >= model.vocab.size())
            throw Error("decode: token index out of range: " + std::to_string(id));
        const std::string &tok = model.vocab[std::size_t(id)];
        if (model.reserved.count(tok)) {
            flush();
            words.push_back(tok);
        } else if (tok.size() >= eow.size() &&
                   tok.compare(tok.size() - eow.size(), eow.size(), eow) == 0) {
            current += tok.substr(0, tok.size() - eow.size());
            flush();
        } else {
            current += tok;
        }
    }
    flush();
    return join(words, " ");
}

void save_bpe(const BpeModel &model, const std::filesystem::path &merges_path,
              const std::filesystem::path &vocab_path) {
    std::ostringstream merges;
    merges << "#mdt-bpe v1 eow:" << BpeModel::kEow << "\n";
    for (const auto &[l, r] : model.merges) merges << l << " " << r << "\n";
    write_file(merges_path, merges.str());

    std::ostringstream vocab;
    for (std::size_t i = 0; i < model.vocab.size(); ++i)
        vocab << model.vocab[i] << "\t" << i << "\n";
    write_file(vocab_path, vocab.str());
}

BpeModel load_bpe(const std::filesystem::path &merges_path,
                  const std::filesystem::path &vocab_path,
                  const std::vector<std::string> &reserved) {
    BpeModel model;
    model.reserved = {BpeModel::kPad, BpeModel::kBos, BpeModel::kEos, BpeModel::kUnk};
    for (const auto &r : reserved) model.reserved.insert(r);

    std::istringstream merges(read_file(merges_path));
    std::string line;
    if (!std::getline(merges, line) || line.rfind("#mdt-bpe", 0) != 0)
        throw Error("bad merges file header: " + merges_path.string());
    while (std::getline(merges, line)) {
        if (line.empty()) continue;
        auto parts = split_ws(line);
        if (parts.size() != 2) throw Error("bad merges line: \"" + line + "\"");
        model.merges.emplace_back(parts[0], parts[1]);
    }

    std::istringstream vocab(read_file(vocab_path));
    while (std::getline(vocab, line)) {
        if (line.empty()) continue;
        std::size_t tab = line.find('\t');
        if (tab == std::string::npos) throw Error("bad vocab line: \"" + line + "\"");
        std::string token = line.substr(0, tab);
        std::size_t index = std::stoul(line.substr(tab + 1));
        if (index != model.vocab.size())
            throw Error("vocab file indices must be dense and in order at \"" + token + "\"");
        model.token_to_id[token] = int(index);
        model.vocab.push_back(token);
    }
    for (const auto &r : model.reserved)
        if (!model.token_to_id.count(r))
            throw Error("reserved token missing from vocab: \"" + r + "\"");
    model.target_vocab_size = model.vocab.size();
    return model;
}

} // namespace mdt
