#include "brasr/lexicon.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "brasr/errors.hpp"

namespace brasr {

const std::set<std::string>& phoneme_inventory() {
  static const std::set<std::string> inv = {
      "AA", "AE", "AH", "AO", "AW", "AY", "B",  "CH", "D",  "DH",
      "EH", "ER", "EY", "F",  "G",  "HH", "IH", "IY", "JH", "K",
      "L",  "M",  "N",  "NG", "OW", "OY", "P",  "R",  "S",  "SH",
      "T",  "TH", "UH", "UW", "V",  "W",  "Y",  "Z",  "ZH"};
  return inv;
}

std::string fold_case(const std::string& word) {
  std::string out = word;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return out;
}

void Lexicon::add(const std::string& word, PhonemeSeq phonemes) {
  entries[fold_case(word)] = std::move(phonemes);
}

const PhonemeSeq* Lexicon::find(const std::string& word) const {
  auto it = entries.find(fold_case(word));
  return it == entries.end() ? nullptr : &it->second;
}

void BiasDatabase::add(BiasEntry entry) {
  by_id_[entry.id] = entries.size();
  by_word_[fold_case(entry.word)] = entry.id;
  entries.push_back(std::move(entry));
}

const BiasEntry* BiasDatabase::find(std::int64_t id) const {
  auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : &entries[it->second];
}

std::int64_t BiasDatabase::id_of(const std::string& word) const {
  auto it = by_word_.find(fold_case(word));
  return it == by_word_.end() ? -1 : it->second;
}

const std::vector<std::int64_t>& HomophoneGraph::neighbors(
    std::int64_t id) const {
  static const std::vector<std::int64_t> empty;
  auto it = sets.find(id);
  return it == sets.end() ? empty : it->second;
}

namespace {

struct G2pRule {
  const char* graphemes;
  const char* phonemes;  // space separated
};

// Fixed fallback table, applied greedy longest-match left to right.
// Multi-letter rules are listed first and always win over single letters.
constexpr G2pRule kRules[] = {
    {"ch", "CH"}, {"sh", "SH"}, {"th", "TH"}, {"ph", "F"},  {"ck", "K"},
    {"qu", "K W"}, {"ee", "IY"}, {"oo", "UW"}, {"ng", "NG"},
    {"a", "AE"},  {"b", "B"},   {"c", "K"},   {"d", "D"},   {"e", "EH"},
    {"f", "F"},   {"g", "G"},   {"h", "HH"},  {"i", "IH"},  {"j", "JH"},
    {"k", "K"},   {"l", "L"},   {"m", "M"},   {"n", "N"},   {"o", "AA"},
    {"p", "P"},   {"q", "K"},   {"r", "R"},   {"s", "S"},   {"t", "T"},
    {"u", "AH"},  {"v", "V"},   {"w", "W"},   {"x", "K S"}, {"y", "Y"},
    {"z", "Z"}};

void append_phonemes(const char* spaced, PhonemeSeq* out) {
  std::istringstream iss(spaced);
  std::string p;
  while (iss >> p) out->push_back(p);
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

PhonemeSeq g2p_rules(const std::string& word) {
  std::string w = fold_case(word);
  PhonemeSeq out;
  std::size_t i = 0;
  while (i < w.size()) {
    bool matched = false;
    for (const auto& rule : kRules) {
      std::size_t len = std::char_traits<char>::length(rule.graphemes);
      if (w.compare(i, len, rule.graphemes) == 0) {
        append_phonemes(rule.phonemes, &out);
        i += len;
        matched = true;
        break;
      }
    }
    if (!matched) ++i;  // skip non-letter characters
  }
  return out;
}

PhonemeSeq g2p(const std::string& word, const Lexicon& lexicon) {
  std::string w = trim(word);
  if (w.empty()) throw InvalidInputError("g2p: empty word");
  if (const PhonemeSeq* seq = lexicon.find(w)) return *seq;
  return g2p_rules(w);
}

std::size_t phoneme_lev(const PhonemeSeq& a, const PhonemeSeq& b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<std::size_t> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= m; ++j) {
      std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

HomophoneGraph build_homophone_graph(const BiasDatabase& db, int threshold) {
  if (threshold < 0) throw InvalidInputError("homophone threshold must be >= 0");
  HomophoneGraph graph;
  graph.threshold = threshold;

  // Bucket by phoneme length: sequences whose lengths differ by more than the
  // threshold cannot be within it.
  const auto& entries = db.entries;
  std::map<std::size_t, std::vector<std::size_t>> by_len;
  for (std::size_t i = 0; i < entries.size(); ++i)
    by_len[entries[i].phonemes.size()].push_back(i);

  for (std::size_t i = 0; i < entries.size(); ++i) {
    std::size_t len = entries[i].phonemes.size();
    std::size_t lo = len > static_cast<std::size_t>(threshold)
                         ? len - threshold
                         : 0;
    for (std::size_t l = lo; l <= len + static_cast<std::size_t>(threshold);
         ++l) {
      auto it = by_len.find(l);
      if (it == by_len.end()) continue;
      for (std::size_t j : it->second) {
        if (j >= i) break;  // each unordered pair once
        if (phoneme_lev(entries[i].phonemes, entries[j].phonemes) <=
            static_cast<std::size_t>(threshold)) {
          graph.sets[entries[i].id].push_back(entries[j].id);
          graph.sets[entries[j].id].push_back(entries[i].id);
        }
      }
    }
  }
  for (auto& [id, nbrs] : graph.sets) std::sort(nbrs.begin(), nbrs.end());
  return graph;
}

void save_lexicon(const Lexicon& lexicon, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for write: " + path);
  for (const auto& [word, phonemes] : lexicon.entries) {
    out << word << '\t';
    for (std::size_t i = 0; i < phonemes.size(); ++i) {
      if (i) out << ' ';
      out << phonemes[i];
    }
    out << '\n';
  }
}

Lexicon load_lexicon(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  Lexicon lex;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) throw IoError("malformed lexicon line: " + line);
    std::string word = line.substr(0, tab);
    PhonemeSeq seq;
    std::istringstream iss(line.substr(tab + 1));
    std::string p;
    while (iss >> p) seq.push_back(p);
    lex.add(word, std::move(seq));
  }
  return lex;
}

void save_homophone_graph(const HomophoneGraph& graph, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for write: " + path);
  for (const auto& [id, nbrs] : graph.sets) {
    out << id << '\t';
    for (std::size_t i = 0; i < nbrs.size(); ++i) {
      if (i) out << ',';
      out << nbrs[i];
    }
    out << '\n';
  }
}

HomophoneGraph load_homophone_graph(const std::string& path, int threshold) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  HomophoneGraph graph;
  graph.threshold = threshold;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) throw IoError("malformed graph line: " + line);
    std::int64_t id = std::stoll(line.substr(0, tab));
    std::vector<std::int64_t> nbrs;
    std::istringstream iss(line.substr(tab + 1));
    std::string tok;
    while (std::getline(iss, tok, ',')) {
      if (!tok.empty()) nbrs.push_back(std::stoll(tok));
    }
    graph.sets[id] = std::move(nbrs);
  }
  return graph;
}

}  // namespace brasr
