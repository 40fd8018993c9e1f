#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "relcap/bleu.hpp"
#include "relcap/vocab.hpp"

#include <cmath>

using namespace relcap;
using Sent = std::vector<std::string>;

namespace {
Sent toks(const std::string& s) { return Vocabulary::tokenize(s); }
} // namespace

TEST_CASE("identity candidate scores 1.0 at every order") {
    auto res = corpus_bleu({toks("a cat sat on the mat")}, {{toks("a cat sat on the mat")}});
    for (int n = 0; n < 4; ++n) CHECK(res.bleu[std::size_t(n)] == doctest::Approx(1.0));
    CHECK(res.brevity_penalty == doctest::Approx(1.0));
}

TEST_CASE("clipped unigram precision") {
    auto res = corpus_bleu({toks("the the the")}, {{toks("the cat")}});
    CHECK(res.precisions[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("brevity penalty on short candidates") {
    // c=2, r=4 -> BP = e^(1 - 4/2); unigram precision 2/2.
    auto res = corpus_bleu({toks("a cat")}, {{toks("a cat on mat")}});
    CHECK(res.brevity_penalty == doctest::Approx(std::exp(1.0 - 4.0 / 2.0)).epsilon(1e-12));
    CHECK(res.bleu[0] == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
}

TEST_CASE("bleu lies in [0,1] and ignores reference order") {
    std::vector<Sent> cands = {toks("a dog above a cat"), toks("a bird below a tree")};
    std::vector<std::vector<Sent>> refs = {{toks("a dog above a cat"), toks("the dog")},
                                           {toks("a bird above a tree"), toks("bird tree")}};
    auto a = corpus_bleu(cands, refs);
    std::vector<std::vector<Sent>> flipped = {{refs[0][1], refs[0][0]}, {refs[1][1], refs[1][0]}};
    auto b = corpus_bleu(cands, flipped);
    for (int n = 0; n < 4; ++n) {
        CHECK(a.bleu[std::size_t(n)] >= 0.0);
        CHECK(a.bleu[std::size_t(n)] <= 1.0);
        CHECK(a.bleu[std::size_t(n)] == doctest::Approx(b.bleu[std::size_t(n)]).epsilon(1e-15));
    }
}

TEST_CASE("empty candidate scores zero with warning") {
    auto res = corpus_bleu({Sent{}}, {{toks("a cat")}});
    CHECK(res.bleu[0] == 0.0);
}

TEST_CASE("five sentence fixture matches the independent scalar oracle") {
    // Fixture shared with the evaluate-subcommand acceptance check.
    std::vector<Sent> cands = {
        toks("a cat above a dog"), toks("a dog leftof a bird"), toks("a tree above a ball"),
        toks("a ball below a cat"), toks("a bird rightof a tree car")};
    std::vector<std::vector<Sent>> refs = {
        {toks("a cat above a dog")},  {toks("a dog rightof a bird")},
        {toks("a tree above a ball chair")}, {toks("a ball above a cat")},
        {toks("a bird rightof a tree")}};

    // Scalar oracle, nested loops only: for each distinct candidate n-gram
    // (first occurrence guard), clip its count by the per-reference maximum.
    auto same_gram = [](const Sent& a, std::size_t i, const Sent& b, std::size_t j, int order) {
        for (int k = 0; k < order; ++k)
            if (a[i + std::size_t(k)] != b[j + std::size_t(k)]) return false;
        return true;
    };
    auto occurrences = [&](const Sent& where, const Sent& gram_src, std::size_t gram_at,
                           int order) {
        long cnt = 0;
        for (std::size_t t = 0; t + std::size_t(order) <= where.size(); ++t)
            if (same_gram(where, t, gram_src, gram_at, order)) ++cnt;
        return cnt;
    };
    auto oracle_precision = [&](int order) {
        long matched = 0, total = 0;
        for (std::size_t i = 0; i < cands.size(); ++i) {
            const auto& c = cands[i];
            if (long(c.size()) >= order) total += long(c.size()) - order + 1;
            for (std::size_t s = 0; s + std::size_t(order) <= c.size(); ++s) {
                bool first = true;
                for (std::size_t t = 0; t < s; ++t)
                    if (same_gram(c, t, c, s, order)) first = false;
                if (!first) continue;
                long ref_max = 0;
                for (const auto& r : refs[i])
                    ref_max = std::max(ref_max, occurrences(r, c, s, order));
                matched += std::min(occurrences(c, c, s, order), ref_max);
            }
        }
        return total == 0 ? 0.0 : double(matched) / double(total);
    };

    double clen = 0, rlen = 0;
    for (std::size_t i = 0; i < cands.size(); ++i) {
        clen += double(cands[i].size());
        long best = long(refs[i][0].size());
        for (const auto& r : refs[i]) {
            long d1 = std::labs(long(r.size()) - long(cands[i].size()));
            long d2 = std::labs(best - long(cands[i].size()));
            if (d1 < d2 || (d1 == d2 && long(r.size()) < best)) best = long(r.size());
        }
        rlen += double(best);
    }

    auto got = corpus_bleu(cands, refs);
    std::array<double, 4> p{};
    for (int n = 1; n <= 4; ++n) {
        p[std::size_t(n - 1)] = oracle_precision(n);
        CHECK(got.precisions[std::size_t(n - 1)] ==
              doctest::Approx(p[std::size_t(n - 1)]).epsilon(1e-12));
    }
    double bp = clen > rlen ? 1.0 : std::exp(1.0 - rlen / clen);
    CHECK(got.brevity_penalty == doctest::Approx(bp).epsilon(1e-12));
    for (int n = 1; n <= 4; ++n) {
        double ls = 0;
        bool zero = false;
        for (int k = 1; k <= n; ++k) {
            if (p[std::size_t(k - 1)] <= 0) zero = true;
            else ls += std::log(p[std::size_t(k - 1)]) / n;
        }
        double want = zero ? 0.0 : bp * std::exp(ls);
        CHECK(got.bleu[std::size_t(n - 1)] == doctest::Approx(want).epsilon(1e-12));
    }
}
