#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace brasr {

using PhonemeSeq = std::vector<std::string>;

// ARPAbet-like phoneme inventory shipped with the repo.
const std::set<std::string>& phoneme_inventory();

struct Lexicon {
  // Words are stored case-folded.
  std::map<std::string, PhonemeSeq> entries;

  void add(const std::string& word, PhonemeSeq phonemes);
  // Returns nullptr when the (case-folded) word is absent.
  const PhonemeSeq* find(const std::string& word) const;
};

struct BiasEntry {
  std::int64_t id = -1;
  std::string word;
  PhonemeSeq phonemes;
};

struct BiasDatabase {
  std::vector<BiasEntry> entries;  // ascending id

  void add(BiasEntry entry);
  const BiasEntry* find(std::int64_t id) const;
  std::int64_t id_of(const std::string& word) const;  // -1 when absent
  std::size_t size() const { return entries.size(); }

 private:
  std::unordered_map<std::int64_t, std::size_t> by_id_;
  std::unordered_map<std::string, std::int64_t> by_word_;
};

// Homophone sets: for entry i, all entries j != i whose phoneme sequences are
// within edit distance `threshold` of i's. Symmetric and irreflexive.
struct HomophoneGraph {
  int threshold = 2;
  std::map<std::int64_t, std::vector<std::int64_t>> sets;  // sorted neighbor lists

  const std::vector<std::int64_t>& neighbors(std::int64_t id) const;
};

std::string fold_case(const std::string& word);

// Lexicon lookup with a fixed rule-table fallback for out-of-lexicon words.
// Deterministic; throws InvalidInputError on an empty word.
PhonemeSeq g2p(const std::string& word, const Lexicon& lexicon);

// Rule-table G2P only (no lexicon). Greedy longest-match over a fixed
// letter-to-phoneme table; non-letter characters are skipped.
PhonemeSeq g2p_rules(const std::string& word);

// Unit-cost Levenshtein distance over phoneme symbols.
std::size_t phoneme_lev(const PhonemeSeq& a, const PhonemeSeq& b);

HomophoneGraph build_homophone_graph(const BiasDatabase& db, int threshold);

// File formats:
//   lexicon:  word<TAB>PH1 PH2 PH3     ('#' starts a comment line)
//   graph:    id<TAB>id1,id2,...
void save_lexicon(const Lexicon& lexicon, const std::string& path);
Lexicon load_lexicon(const std::string& path);
void save_homophone_graph(const HomophoneGraph& graph, const std::string& path);
HomophoneGraph load_homophone_graph(const std::string& path, int threshold);

}  // namespace brasr
