#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "relcap/config.hpp"
#include "relcap/corpus.hpp"
#include "relcap/synthetic.hpp"
#include "relcap/vocab.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>

using namespace relcap;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct TempFile {
    std::string path;
    explicit TempFile(std::string p) : path(std::move(p)) {}
    ~TempFile() { std::remove(path.c_str()); }
};

} // namespace

TEST_CASE("vocabulary build") {
    SUBCASE("all-rare corpus keeps reserved tokens only") {
        auto v = Vocabulary::build({"one two three", "four five six"}, 5);
        CHECK(v.size() == 4);
        CHECK(v.id("one") == Vocabulary::unk_id);
    }
    SUBCASE("min_count=1 keeps every distinct token") {
        auto v = Vocabulary::build({"a b b", "c a"}, 1);
        CHECK(v.size() == 4 + 3);
    }
    SUBCASE("hand count with threshold") {
        // "cat" x5, "dog" x5, "bird" x4, "a" x10 across ten sentences
        std::vector<std::string> caps = {"a cat",  "a cat",  "a cat",  "a cat", "a CAT",
                                         "a dog",  "a dog",  "a dog",  "a dog", "a dog",
                                         "bird bird bird bird"};
        auto v = Vocabulary::build(caps, 5);
        CHECK(v.size() == 4 + 3); // a, cat, dog
        CHECK(v.id("a") == 4);    // most frequent first
        CHECK(v.id("cat") == 5);  // tie with dog broken lexicographically
        CHECK(v.id("dog") == 6);
        CHECK(v.id("bird") == Vocabulary::unk_id);
    }
    SUBCASE("encode decode round trip") {
        auto v = Vocabulary::build({"a cat sat", "a cat sat", "a cat sat", "a cat sat", "a cat sat"}, 5);
        auto ids = v.encode("a cat sat");
        CHECK(ids.front() == Vocabulary::bos_id);
        CHECK(ids.back() == Vocabulary::eos_id);
        CHECK(v.decode(ids) == "a cat sat");
        CHECK(v.encode("a zebra sat")[2] == Vocabulary::unk_id);
    }
    SUBCASE("ids stable across rebuilds") {
        std::vector<std::string> caps(10, "red green blue");
        auto a = Vocabulary::build(caps, 5);
        auto b = Vocabulary::build(caps, 5);
        for (int i = 0; i < a.size(); ++i) CHECK(a.token(i) == b.token(i));
    }
    SUBCASE("file round trip") {
        TempFile f("vocab_test.txt");
        auto v = Vocabulary::build(std::vector<std::string>(6, "cat dog"), 5);
        v.save(f.path);
        auto back = Vocabulary::load(f.path);
        CHECK(back.size() == v.size());
        CHECK(back.id("cat") == v.id("cat"));
    }
}

TEST_CASE("config") {
    Config cfg;
    CHECK(cfg.get_int("k_max") == 36);
    CHECK(cfg.get_double("learning_rate") == doctest::Approx(0.0005));
    CHECK(cfg.get_double("adam_beta1") == doctest::Approx(0.8));
    CHECK(cfg.get_int("max_epochs") == 35);
    CHECK(cfg.get_int("beam") == 3);
    CHECK(cfg.get_int("min_count") == 5);
    CHECK_THROWS_AS(cfg.set("not_a_key", "1"), ValidationError);
    CHECK_THROWS_AS(cfg.get("not_a_key"), ValidationError);

    SUBCASE("file parse with comments") {
        TempFile f("config_test.cfg");
        std::ofstream(f.path) << "# comment\nd_model=64\n  seed = 9 \n";
        cfg.load_file(f.path);
        CHECK(cfg.get_int("d_model") == 64);
        CHECK(cfg.get_int("seed") == 9);
    }
    SUBCASE("unknown key in file rejected") {
        TempFile f("config_bad.cfg");
        std::ofstream(f.path) << "d_mdl=64\n";
        CHECK_THROWS_AS(cfg.load_file(f.path), ValidationError);
    }
    SUBCASE("environment override") {
        setenv("RELCAP_BATCH_SIZE", "17", 1);
        cfg.apply_env();
        unsetenv("RELCAP_BATCH_SIZE");
        CHECK(cfg.get_int("batch_size") == 17);
    }
    SUBCASE("echo covers every key, sorted") {
        auto lines = cfg.echo();
        CHECK(lines.size() > 30);
        CHECK(std::is_sorted(lines.begin(), lines.end()));
    }
}

TEST_CASE("corpus round trip and validation") {
    GeneratorSpec spec;
    spec.n_scenes = 12;
    spec.dv = 8;
    auto records = generate_synthetic(spec, 5);

    TempFile f("corpus_test.jsonl");
    save_corpus(f.path, records);
    auto back = load_corpus(f.path);
    REQUIRE(back.size() == records.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK(back[i].image_id == records[i].image_id);
        CHECK(back[i].captions == records[i].captions);
        REQUIRE(back[i].regions.size() == records[i].regions.size());
        for (std::size_t r = 0; r < back[i].regions.size(); ++r) {
            // bit-exact feature round trip through the text format
            CHECK((back[i].regions[r].feature - records[i].regions[r].feature)
                      .cwiseAbs()
                      .maxCoeff() == 0.0);
            CHECK(back[i].regions[r].box.cx == records[i].regions[r].box.cx);
        }
    }

    SUBCASE("empty file loads as empty corpus") {
        TempFile e("corpus_empty.jsonl");
        std::ofstream(e.path).close();
        CHECK(load_corpus(e.path).empty());
    }
    SUBCASE("malformed line reported with its number") {
        TempFile e("corpus_bad.jsonl");
        std::ofstream(e.path) << R"({"format":"relcap-corpus","version":1})" << "\n"
                              << "{not json}\n";
        CHECK_THROWS_WITH_AS(load_corpus(e.path), doctest::Contains(":2"), ValidationError);
    }
    SUBCASE("over-long region list truncated in confidence order") {
        SceneRecord rec = records[0];
        rec.regions.assign(8, records[0].regions[0]);
        for (int i = 0; i < 8; ++i) rec.regions[std::size_t(i)].class_id = i;
        TempFile e("corpus_trunc.jsonl");
        save_corpus(e.path, {rec});
        auto loaded = load_corpus(e.path, 6);
        REQUIRE(loaded.size() == 1);
        REQUIRE(loaded[0].regions.size() == 6);
        for (int i = 0; i < 6; ++i) CHECK(loaded[0].regions[std::size_t(i)].class_id == i);
    }
}

TEST_CASE("synthetic generator") {
    GeneratorSpec spec;
    spec.n_scenes = 200;
    spec.dv = 16;

    SUBCASE("fixed seed gives byte-identical corpus files") {
        TempFile a("gen_a.jsonl"), b("gen_b.jsonl");
        save_corpus(a.path, generate_synthetic(spec, 99));
        save_corpus(b.path, generate_synthetic(spec, 99));
        CHECK(slurp(a.path) == slurp(b.path));
        TempFile c("gen_c.jsonl");
        save_corpus(c.path, generate_synthetic(spec, 100));
        CHECK(slurp(a.path) != slurp(c.path));
    }

    SUBCASE("geometry satisfies the predicate definition") {
        auto records = generate_synthetic(spec, 7);
        for (const auto& rec : records) {
            int si = rec.meta.at("subject_region").get<int>();
            int oi = rec.meta.at("object_region").get<int>();
            std::string pred = rec.meta.at("predicate").get<std::string>();
            CHECK(predicate_of(rec.regions[std::size_t(si)].box,
                               rec.regions[std::size_t(oi)].box) == pred);
            auto toks = Vocabulary::tokenize(rec.captions[0]);
            CHECK(toks[std::size_t(rec.meta.at("pred_slot").get<int>())] == pred);
        }
    }

    SUBCASE("every predicate covered in at least 1% of scenes") {
        auto records = generate_synthetic(spec, 11);
        std::map<std::string, int> seen;
        for (const auto& rec : records) ++seen[rec.meta.at("predicate").get<std::string>()];
        for (const auto& p : GeneratorSpec::spatial_predicates())
            CHECK(seen[p] >= records.size() / 100);
    }

    SUBCASE("mirrored geometry flips exactly the predicate token") {
        BoundingBox<double> s{0.3, 0.5, 0.1, 0.1}, o{0.6, 0.52, 0.1, 0.1};
        std::string cap = caption_for("cat", "dog", s, o);
        BoundingBox<double> sm{1.0 - s.cx, s.cy, s.width, s.height};
        BoundingBox<double> om{1.0 - o.cx, o.cy, o.width, o.height};
        std::string mirrored = caption_for("cat", "dog", sm, om);
        auto t1 = Vocabulary::tokenize(cap), t2 = Vocabulary::tokenize(mirrored);
        REQUIRE(t1.size() == t2.size());
        int diffs = 0;
        for (std::size_t i = 0; i < t1.size(); ++i)
            if (t1[i] != t2[i]) {
                ++diffs;
                CHECK(i == 2);
            }
        CHECK(diffs == 1);
        CHECK(t1[2] == "leftof");
        CHECK(t2[2] == "rightof");
    }

    SUBCASE("contextual mode biases predicates by superclass") {
        GeneratorSpec ctx = spec;
        ctx.mode = "contextual";
        ctx.n_scenes = 400;
        auto records = generate_synthetic(ctx, 3);
        std::map<std::string, std::map<std::string, int>> table;
        for (const auto& rec : records)
            ++table[rec.superclass][rec.meta.at("predicate").get<std::string>()];
        CHECK(table["indoor"]["above"] > table["indoor"]["below"]);
        CHECK(table["outdoor"]["below"] > table["outdoor"]["above"]);
    }
}
