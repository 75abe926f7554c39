#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "mdt/eval.hpp"

using namespace mdt;

namespace {

// Independent brute-force BLEU oracle: counts n-grams as token vectors in
// ordered maps, no sharing with the implementation's counting path.
double oracle_bleu(const std::vector<std::string> &hyps, const std::vector<std::string> &refs) {
    std::array<double, 4> correct{}, total{};
    double hyp_len = 0, ref_len = 0;
    for (std::size_t i = 0; i < hyps.size(); ++i) {
        auto h = tokenize_13a(hyps[i]);
        auto r = tokenize_13a(refs[i]);
        hyp_len += double(h.size());
        ref_len += double(r.size());
        for (std::size_t n = 1; n <= 4; ++n) {
            std::map<std::vector<std::string>, int> hc, rc;
            for (std::size_t k = 0; k + n <= h.size(); ++k)
                ++hc[std::vector<std::string>(h.begin() + k, h.begin() + k + n)];
            for (std::size_t k = 0; k + n <= r.size(); ++k)
                ++rc[std::vector<std::string>(r.begin() + k, r.begin() + k + n)];
            for (const auto &[g, c] : hc) {
                total[n - 1] += c;
                auto it = rc.find(g);
                if (it != rc.end()) correct[n - 1] += std::min(c, it->second);
            }
        }
    }
    if (hyp_len == 0) return 0.0;
    double log_sum = 0, smooth = 1;
    for (int n = 0; n < 4; ++n) {
        if (total[n] == 0) return 0.0;
        double p = correct[n] > 0 ? correct[n] / total[n] : 1.0 / ((smooth *= 2) * total[n]);
        log_sum += std::log(p);
    }
    double bp = hyp_len >= ref_len ? 1.0 : std::exp(1.0 - ref_len / hyp_len);
    return bp * std::exp(log_sum / 4.0) * 100.0;
}

} // namespace

TEST_CASE("perfect match scores 100") {
    std::vector<std::string> text = {"the cat sat on the mat today right here",
                                     "a second sentence with plenty of tokens"};
    auto b = corpus_bleu(text, text);
    CHECK(b.score == doctest::Approx(100.0).epsilon(1e-9));
    CHECK(b.brevity_penalty == 1.0);
}

TEST_CASE("clipping: the the the the the vs the cat sat") {
    std::vector<std::string> hyp = {"the the the the the"};
    std::vector<std::string> ref = {"the cat sat"};
    auto b = corpus_bleu(hyp, ref);
    CHECK(b.precisions[0] == doctest::Approx(1.0 / 5.0)); // clipped: ref has one "the"
    CHECK(b.score == doctest::Approx(oracle_bleu(hyp, ref)).epsilon(1e-9));
}

TEST_CASE("brevity penalty at the boundary") {
    std::vector<std::string> hyp = {"word"};
    std::vector<std::string> ref = {"several words in this reference"};
    auto b = corpus_bleu(hyp, ref);
    // hyp has no 2-grams at all: degenerate, score 0, but BP is still reported
    CHECK(b.brevity_penalty == doctest::Approx(std::exp(1.0 - 5.0 / 1.0)));
    CHECK(b.score == 0.0);
}

TEST_CASE("implementation matches the oracle on varied cases") {
    std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>> cases = {
        {{"the quick brown fox jumps over the lazy dog"},
         {"the quick brown fox jumped over the lazy dog"}},
        {{"a b c d e f g h"}, {"a b c d e f g h"}},
        {{"one two three four five six"}, {"six five four three two one"}},
        {{"hello , world !"}, {"hello world"}},
        {{"completely different tokens here now"}, {"nothing matches at all everyone"}},
        {{"short hyp here"}, {"a much longer reference sentence with many words"}},
        {{"repeated repeated repeated words words"}, {"repeated words and more words here"}},
        {{"Case Sensitive Test"}, {"case sensitive test"}},
        {{"numbers 1.5 and 3,000 stay intact"}, {"numbers 1.5 and 3,000 stay intact"}},
        {{"multi sentence corpus a b c d", "second line e f g h i"},
         {"multi sentence corpus a b c e", "second line e f g h j"}},
    };
    for (const auto &[h, r] : cases)
        CHECK(corpus_bleu(h, r).score == doctest::Approx(oracle_bleu(h, r)).epsilon(1e-9));
}

TEST_CASE("bleu is invariant under consistent pair permutation") {
    std::vector<std::string> h = {"a b c d e", "f g h i j", "k l m n o"};
    std::vector<std::string> r = {"a b c d x", "f g h i j", "k l y n o"};
    auto base = corpus_bleu(h, r).score;
    std::vector<std::string> h2 = {h[2], h[0], h[1]}, r2 = {r[2], r[0], r[1]};
    CHECK(corpus_bleu(h2, r2).score == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("case sensitivity matters by default") {
    std::vector<std::string> h = {"The Cat Sat On The Mat"};
    std::vector<std::string> r = {"the cat sat on the mat"};
    CHECK(corpus_bleu(h, r).score < 100.0);
    CHECK(corpus_bleu(h, r, false).score == doctest::Approx(100.0));
}

TEST_CASE("13a tokenization splits punctuation with digit context") {
    CHECK(tokenize_13a("hello, world!") ==
          std::vector<std::string>{"hello", ",", "world", "!"});
    CHECK(tokenize_13a("pi is 3.14") == std::vector<std::string>{"pi", "is", "3.14"});
    CHECK(tokenize_13a("end.") == std::vector<std::string>{"end", "."});
    CHECK(tokenize_13a("3-4 and a-b") == std::vector<std::string>{"3", "-", "4", "and", "a-b"});
    CHECK(tokenize_13a("don't split apostrophes") ==
          std::vector<std::string>{"don't", "split", "apostrophes"});
}

TEST_CASE("length mismatch and empty input error") {
    CHECK_THROWS_AS(corpus_bleu({"a"}, {"a", "b"}), Error);
    CHECK_THROWS_AS(corpus_bleu({}, {}), Error);
}

TEST_CASE("human aggregation means") {
    HumanScoreSet s;
    int i = 0;
    for (int score : {4, 4, 4, 4})
        s.rows.push_back({"s" + std::to_string(i++), "base", "reviews", score});
    i = 0;
    for (int score : {4, 3, 4, 4})
        s.rows.push_back({"s" + std::to_string(i++), "mdt", "reviews", score});
    auto m = aggregate_human(s);
    CHECK(m.at({"reviews", "base"}) == doctest::Approx(4.0));
    CHECK(m.at({"reviews", "mdt"}) == doctest::Approx(3.75));
}

TEST_CASE("missing grid cells are reported") {
    HumanScoreSet s;
    s.rows.push_back({"s0", "base", "reviews", 4});
    s.rows.push_back({"s0", "mdt", "reviews", 3});
    s.rows.push_back({"s1", "base", "reviews", 2});
    try {
        aggregate_human(s);
        FAIL("expected error");
    } catch (const Error &e) {
        CHECK(std::string(e.what()).find("s1/mdt") != std::string::npos);
    }
}

TEST_CASE("scores csv roundtrip and validation") {
    namespace fs = std::filesystem;
    auto dir = fs::temp_directory_path() / "mdt_eval_test";
    fs::create_directories(dir);
    HumanScoreSet s;
    s.rows.push_back({"a", "base", "reviews", 3});
    s.rows.push_back({"a", "mdt", "reviews", 4});
    save_human_scores(s, dir / "scores.csv");
    auto back = load_human_scores(dir / "scores.csv");
    REQUIRE(back.rows.size() == 2);
    CHECK(back.rows[1].score == 4);

    std::ofstream(dir / "bad.csv") << "sample_id,system,domain,score\nx,base,reviews,7\n";
    CHECK_THROWS_AS(load_human_scores(dir / "bad.csv"), Error);
}

TEST_CASE("human eval sampling is blind, seeded and bounded") {
    Corpus test;
    for (int i = 0; i < 20; ++i) {
        ParallelPair p;
        p.id = "t" + std::to_string(i);
        p.src = "src" + std::to_string(i);
        p.tgt = "tgt" + std::to_string(i);
        p.domain = Domain{"reviews"};
        test.pairs.push_back(p);
    }
    std::map<std::string, std::vector<std::string>> outs;
    for (const std::string sys : {"base", "mdt"}) {
        std::vector<std::string> v;
        for (int i = 0; i < 20; ++i) v.push_back(sys + ":" + std::to_string(i));
        outs[sys] = v;
    }
    auto rows = sample_for_human_eval(test, outs, 10, 3);
    CHECK(rows.size() == 10);
    std::set<std::string> ids;
    for (const auto &r : rows) {
        ids.insert(r.id);
        REQUIRE(r.outputs.size() == 2);
        // key maps slots back to systems correctly
        for (std::size_t k = 0; k < r.key.size(); ++k)
            CHECK(r.outputs[k].rfind(r.key[k] + ":", 0) == 0);
    }
    CHECK(ids.size() == 10);
    auto rows2 = sample_for_human_eval(test, outs, 10, 3);
    for (std::size_t i = 0; i < rows.size(); ++i) CHECK(rows[i].id == rows2[i].id);

    auto all = sample_for_human_eval(test, outs, 20, 9);
    CHECK(all.size() == 20);
    CHECK_THROWS_AS(sample_for_human_eval(test, outs, 21, 0), Error);
}

TEST_CASE("report renders Table-2 style cells") {
    ReportTable human;
    human.title = "Human score";
    human.columns = {"Reviews AR"};
    human.column_groups = {"AR"};
    human.systems = {"Base model", "+top10", "+MDT"};
    human.base_system = "Base model";
    human.human_style_deltas = true;
    human.values[{"Base model", "Reviews AR"}] = 3.65;
    human.values[{"+top10", "Reviews AR"}] = 3.75;
    human.values[{"+MDT", "Reviews AR"}] = 3.72;

    ReportTable bleu;
    bleu.title = "BLEU score";
    bleu.columns = {"Reviews AR"};
    bleu.column_groups = {"AR"};
    bleu.systems = {"Base model", "+top10", "+MDT"};
    bleu.base_system = "Base model";
    bleu.values[{"Base model", "Reviews AR"}] = 42.95;
    bleu.values[{"+top10", "Reviews AR"}] = 42.95;
    bleu.values[{"+MDT", "Reviews AR"}] = 42.61;

    auto md = render_report({human, bleu});
    CHECK(md.find("3.75 (+.10)") != std::string::npos);
    CHECK(md.find("42.95 (+0.00)") != std::string::npos);
    CHECK(md.find("**3.75 (+.10)**") != std::string::npos); // best non-base bolded
    CHECK(md.find("| Base model | 3.65 |") != std::string::npos);
}

TEST_CASE("single system equal to base renders zero deltas, base unbolded") {
    ReportTable t;
    t.title = "BLEU score";
    t.columns = {"Reviews"};
    t.systems = {"base", "sys"};
    t.base_system = "base";
    t.values[{"base", "Reviews"}] = 40.0;
    t.values[{"sys", "Reviews"}] = 40.0;
    auto md = render_report({t});
    CHECK(md.find("40.00 (+0.00)") != std::string::npos);
    CHECK(md.find("**40.00**") == std::string::npos);
}
