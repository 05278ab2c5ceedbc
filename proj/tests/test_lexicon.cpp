#include <cstdio>
#include <filesystem>

#include "brasr/errors.hpp"
#include "brasr/lexicon.hpp"
#include "brasr/rng.hpp"
#include "doctest.h"

using namespace brasr;

namespace {

// Independent recursive edit-distance definition, exponential but exact.
std::size_t lev_rec(const PhonemeSeq& a, const PhonemeSeq& b, std::size_t i,
                    std::size_t j) {
  if (i == a.size()) return b.size() - j;
  if (j == b.size()) return a.size() - i;
  std::size_t best = lev_rec(a, b, i + 1, j + 1) + (a[i] == b[j] ? 0 : 1);
  best = std::min(best, lev_rec(a, b, i + 1, j) + 1);
  best = std::min(best, lev_rec(a, b, i, j + 1) + 1);
  return best;
}

PhonemeSeq random_seq(Rng& rng, std::size_t max_len) {
  static const std::vector<std::string> symbols = {"AA", "B", "K", "IY", "T"};
  PhonemeSeq seq(rng.uniform_int(max_len + 1));
  for (auto& p : seq) p = symbols[rng.uniform_int(symbols.size())];
  return seq;
}

}  // namespace

TEST_SUITE_BEGIN("lexicon");

TEST_CASE("g2p uses the lexicon when the word is present") {
  Lexicon lex;
  lex.add("there", {"DH", "EH", "R"});
  CHECK(g2p("there", lex) == PhonemeSeq{"DH", "EH", "R"});
  CHECK(g2p("THERE", lex) == PhonemeSeq{"DH", "EH", "R"});  // case folding
}

TEST_CASE("g2p rejects empty input") {
  Lexicon lex;
  CHECK_THROWS_AS(g2p("", lex), InvalidInputError);
  CHECK_THROWS_AS(g2p("   ", lex), InvalidInputError);
}

TEST_CASE("g2p falls back to the rule table") {
  Lexicon lex;
  // Hand-applied rules: z->Z, z->Z, q->K.
  CHECK(g2p("zzq", lex) == PhonemeSeq{"Z", "Z", "K"});
  // Digraphs win over single letters: ch->CH, ee->IY, ck->K.
  CHECK(g2p("cheeck", lex) == PhonemeSeq{"CH", "IY", "K"});
  CHECK(g2p("zzq", lex) == g2p("zzq", lex));  // deterministic
}

TEST_CASE("rule table output stays inside the inventory") {
  for (const char* w : {"quixotic", "zephyr", "gnarl", "phong"}) {
    for (const auto& p : g2p_rules(w)) CHECK(phoneme_inventory().count(p) == 1);
  }
}

TEST_CASE("phoneme_lev basics") {
  CHECK(phoneme_lev({"DH", "EH", "R"}, {"DH", "EH", "R"}) == 0);
  CHECK(phoneme_lev({"DH", "EH", "R"}, {"DH", "IY", "R"}) == 1);
  CHECK(phoneme_lev({}, {"AA", "B"}) == 2);
}

TEST_CASE("phoneme_lev matches the recursive oracle on random pairs") {
  Rng rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    PhonemeSeq a = random_seq(rng, 6), b = random_seq(rng, 6);
    CHECK(phoneme_lev(a, b) == lev_rec(a, b, 0, 0));
    CHECK(phoneme_lev(a, b) == phoneme_lev(b, a));
  }
}

TEST_CASE("phoneme_lev satisfies the triangle inequality") {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    PhonemeSeq a = random_seq(rng, 6), b = random_seq(rng, 6),
               c = random_seq(rng, 6);
    CHECK(phoneme_lev(a, c) <= phoneme_lev(a, b) + phoneme_lev(b, c));
  }
}

TEST_CASE("homophone graph contains zero-distance pairs") {
  BiasDatabase db;
  db.add({0, "their", {"DH", "EH", "R"}});
  db.add({1, "there", {"DH", "EH", "R"}});
  db.add({2, "cat", {"K", "AE", "T"}});
  HomophoneGraph graph = build_homophone_graph(db, 2);
  CHECK(graph.neighbors(0) == std::vector<std::int64_t>{1});
  CHECK(graph.neighbors(1) == std::vector<std::int64_t>{0});
}

TEST_CASE("theta 0 with distinct phonemes yields empty sets") {
  BiasDatabase db;
  db.add({0, "a", {"AE"}});
  db.add({1, "b", {"B", "IY"}});
  db.add({2, "c", {"K", "IY", "T"}});
  HomophoneGraph graph = build_homophone_graph(db, 0);
  CHECK(graph.sets.empty());
}

TEST_CASE("graph equals the all-pairs oracle and its invariants hold") {
  Rng rng(99);
  BiasDatabase db;
  for (int i = 0; i < 100; ++i)
    db.add({i, "w" + std::to_string(i), random_seq(rng, 5)});

  for (int theta : {0, 1, 2}) {
    HomophoneGraph graph = build_homophone_graph(db, theta);
    for (std::size_t i = 0; i < db.size(); ++i) {
      for (std::size_t j = 0; j < db.size(); ++j) {
        bool expected =
            i != j && phoneme_lev(db.entries[i].phonemes,
                                  db.entries[j].phonemes) <=
                          static_cast<std::size_t>(theta);
        const auto& nbrs = graph.neighbors(db.entries[i].id);
        bool got = std::find(nbrs.begin(), nbrs.end(), db.entries[j].id) !=
                   nbrs.end();
        CHECK(got == expected);
      }
      // irreflexive
      const auto& nbrs = graph.neighbors(db.entries[i].id);
      CHECK(std::find(nbrs.begin(), nbrs.end(), db.entries[i].id) ==
            nbrs.end());
    }
  }
}

TEST_CASE("lexicon and graph files round-trip") {
  Lexicon lex;
  lex.add("alpha", {"AE", "L", "F", "AE"});
  lex.add("beta", {"B", "EH", "T", "AE"});
  auto dir = std::filesystem::temp_directory_path() / "brasr_lexicon_test";
  std::filesystem::create_directories(dir);
  save_lexicon(lex, (dir / "lex.tsv").string());
  Lexicon loaded = load_lexicon((dir / "lex.tsv").string());
  CHECK(loaded.entries == lex.entries);

  BiasDatabase db;
  db.add({0, "their", {"DH", "EH", "R"}});
  db.add({1, "there", {"DH", "EH", "R"}});
  db.add({5, "cat", {"K", "AE", "T"}});
  HomophoneGraph graph = build_homophone_graph(db, 2);
  save_homophone_graph(graph, (dir / "graph.tsv").string());
  HomophoneGraph loaded_graph =
      load_homophone_graph((dir / "graph.tsv").string(), 2);
  CHECK(loaded_graph.sets == graph.sets);
  std::filesystem::remove_all(dir);
}

TEST_SUITE_END();
