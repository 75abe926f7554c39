#include "mdt/synthdata.hpp"

#include <algorithm>
#include <optional>
#include <set>

namespace mdt {

namespace {

const char *kVowels = "aeiou";

std::vector<std::string> make_words(const std::string &consonants, int n) {
    std::vector<std::string> syllables;
    for (char c : consonants)
        for (int v = 0; v < 5; ++v) syllables.push_back(std::string{c, kVowels[v]});
    long cap = long(syllables.size()) * long(syllables.size());
    if (n > cap) throw Error("synth config: vocab_words exceeds pseudoword inventory");
    std::vector<std::string> words;
    words.reserve(std::size_t(n));
    for (int i = 0; i < n; ++i)
        words.push_back(syllables[std::size_t(i) / syllables.size()] +
                        syllables[std::size_t(i) % syllables.size()]);
    return words;
}

} // namespace

void SynthConfig::validate() const {
    if (domains.empty()) throw Error("synth config: no domains");
    if (domains.size() > 5) throw Error("synth config: at most 5 domains supported");
    for (const auto &d : domains) Domain::checked(d);
    if (std::set<std::string>(domains.begin(), domains.end()).size() != domains.size())
        throw Error("synth config: duplicate domain names");
    if (vocab_words < 10) throw Error("synth config: vocab_words too small");
    if (divergent_words <= int(domains.size()))
        throw Error("synth config: divergent_words must exceed the domain count");
    if (private_words_per_domain < 1)
        throw Error("synth config: private_words_per_domain must be positive");
    if (divergent_words + int(domains.size()) * private_words_per_domain >= vocab_words)
        throw Error("synth config: no core words left over");
    if (divergent_rate < 0.0 || divergent_rate >= 1.0)
        throw Error("synth config: divergent_rate must be in [0,1)");
    if (min_len < 1 || max_len < min_len)
        throw Error("synth config: bad sentence length bounds");
}

SynthWorld::SynthWorld(const SynthConfig &cfg) : cfg_(cfg) {
    cfg_.validate();
    src_words_ = make_words("ptkbdg", cfg_.vocab_words);
    tgt_words_ = make_words("mnszrl", cfg_.vocab_words);
    for (int i = 0; i < cfg_.vocab_words; ++i) {
        src_index_[src_words_[std::size_t(i)]] = i;
        tgt_index_[tgt_words_[std::size_t(i)]] = i;
    }

    // word index blocks: [0, divergent) divergent, then per-domain private
    // blocks, rest shared core
    int priv_base = cfg_.divergent_words;
    std::vector<int> core;
    for (int i = priv_base + int(cfg_.domains.size()) * cfg_.private_words_per_domain;
         i < cfg_.vocab_words; ++i)
        core.push_back(i);

    auto build_domain = [&](const std::string &name, std::optional<int> domain_index) {
        std::vector<int> lex;
        for (int i = 0; i < cfg_.divergent_words; ++i) lex.push_back(i);
        if (domain_index) {
            int start = priv_base + *domain_index * cfg_.private_words_per_domain;
            for (int i = 0; i < cfg_.private_words_per_domain; ++i) lex.push_back(start + i);
        }
        lex.insert(lex.end(), core.begin(), core.end());

        // Zipfian weights over a per-domain rank shuffle of the lexicon
        std::vector<std::size_t> ranks(lex.size());
        for (std::size_t i = 0; i < ranks.size(); ++i) ranks[i] = i;
        Rng rng(derive_seed(cfg_.seed, "skew:" + name));
        shuffle(ranks, rng);
        std::vector<double> w(lex.size());
        for (std::size_t i = 0; i < lex.size(); ++i) w[i] = 1.0 / double(ranks[i] + 1);

        lexicon_[name] = std::move(lex);
        skew_[name] = std::move(w);
    };

    build_domain("generic", std::nullopt);
    for (std::size_t d = 0; d < cfg_.domains.size(); ++d) build_domain(cfg_.domains[d], int(d));
}

SynthWorld::DomainRules SynthWorld::rules_for(const std::string &domain) const {
    if (domain == "generic") return {};
    for (std::size_t d = 0; d < cfg_.domains.size(); ++d) {
        if (cfg_.domains[d] == domain) {
            DomainRules r;
            r.index = int(d);
            r.function_word = std::string{'w', kVowels[d]}; // "wa", "we", ...
            r.swap_pairs = (d % 2 == 1);
            r.rotation = int(d) + 1; // distinct non-identity cipher per domain
            return r;
        }
    }
    throw Error("unknown synthetic domain: " + domain);
}

std::string SynthWorld::oracle_translate(const std::string &text, const std::string &domain,
                                         Direction dir) const {
    DomainRules r = rules_for(domain);
    std::vector<std::string> tokens = split_ws(text);
    if (tokens.empty()) return "";

    if (dir == Direction::fwd) {
        std::vector<std::string> out;
        for (const auto &tok : tokens) {
            auto it = src_index_.find(tok);
            if (it == src_index_.end())
                throw Error("oracle_translate: not a source word: " + tok);
            int i = it->second;
            if (i < cfg_.divergent_words) i = (i + r.rotation) % cfg_.divergent_words;
            out.push_back(tgt_words_[std::size_t(i)]);
        }
        if (r.swap_pairs)
            for (std::size_t i = 0; i + 1 < out.size(); i += 2) std::swap(out[i], out[i + 1]);
        if (!r.function_word.empty()) out.insert(out.begin(), r.function_word);
        return join(out, " ");
    }

    if (!r.function_word.empty()) {
        if (tokens.front() != r.function_word)
            throw Error("oracle_translate: missing function word for domain " + domain);
        tokens.erase(tokens.begin());
    }
    if (r.swap_pairs)
        for (std::size_t i = 0; i + 1 < tokens.size(); i += 2) std::swap(tokens[i], tokens[i + 1]);
    std::vector<std::string> out;
    for (const auto &tok : tokens) {
        auto it = tgt_index_.find(tok);
        if (it == tgt_index_.end())
            throw Error("oracle_translate: not a target word: " + tok);
        int i = it->second;
        if (i < cfg_.divergent_words)
            i = (i - r.rotation % cfg_.divergent_words + cfg_.divergent_words) %
                cfg_.divergent_words;
        out.push_back(src_words_[std::size_t(i)]);
    }
    return join(out, " ");
}

std::string SynthWorld::sample_source(const std::string &domain, Rng &rng) const {
    const auto &lex = lexicon_.at(domain);
    const auto &w = skew_.at(domain);
    double total = 0.0;
    for (double x : w) total += x;

    std::size_t len =
        std::size_t(cfg_.min_len) + std::size_t(rng.next_below(
                                        std::uint64_t(cfg_.max_len - cfg_.min_len + 1)));
    std::vector<std::string> words;
    for (std::size_t i = 0; i < len; ++i) {
        int idx;
        if (rng.next_double() < cfg_.divergent_rate) {
            idx = int(rng.next_below(std::uint64_t(cfg_.divergent_words)));
        } else {
            double u = rng.next_double() * total;
            std::size_t j = 0;
            for (; j + 1 < w.size(); ++j) {
                u -= w[j];
                if (u < 0.0) break;
            }
            idx = lex[j];
        }
        words.push_back(src_words_[std::size_t(idx)]);
    }
    return join(words, " ");
}

SynthDataset SynthWorld::generate() const {
    SynthDataset out;

    auto make_parallel = [&](const std::string &domain, const std::string &split,
                             std::size_t n) {
        Corpus c;
        c.label = "synth-" + domain + "-" + split;
        Rng rng(derive_seed(cfg_.seed, "gen:" + domain + ":" + split));
        for (std::size_t i = 0; i < n; ++i) {
            ParallelPair p;
            p.id = "synth:" + domain + ":" + split + ":" + std::to_string(i);
            p.src = sample_source(domain, rng);
            p.tgt = oracle_translate(p.src, domain, Direction::fwd);
            p.domain = Domain::checked(domain);
            p.provenance = Provenance::genuine;
            c.pairs.push_back(std::move(p));
        }
        return c;
    };

    out.generic_train = make_parallel("generic", "train", cfg_.generic_pairs);
    out.generic_dev = make_parallel("generic", "dev", cfg_.generic_dev);
    for (const auto &d : cfg_.domains) {
        out.genuine[d] = make_parallel(d, "train", cfg_.genuine_per_domain);
        out.dev[d] = make_parallel(d, "dev", cfg_.dev_per_domain);
        out.test[d] = make_parallel(d, "test", cfg_.test_per_domain);

        Corpus mono;
        mono.label = "synth-" + d + "-mono";
        Rng rng(derive_seed(cfg_.seed, "gen:" + d + ":mono"));
        for (std::size_t i = 0; i < cfg_.mono_per_domain; ++i) {
            MonoSegment seg;
            seg.id = "synth:" + d + ":mono:" + std::to_string(i);
            seg.text = oracle_translate(sample_source(d, rng), d, Direction::fwd);
            seg.domain = Domain::checked(d);
            mono.segments.push_back(std::move(seg));
        }
        out.mono[d] = std::move(mono);
    }
    return out;
}

} // namespace mdt
