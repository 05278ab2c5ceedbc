#include "brasr/synthcorpus.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "brasr/errors.hpp"

namespace fs = std::filesystem;

namespace brasr {

std::int64_t Vocabulary::add(const std::string& word) {
  std::int64_t id = static_cast<std::int64_t>(words.size());
  words.push_back(word);
  index[word] = id;
  return id;
}

std::int64_t Vocabulary::id_of(const std::string& word) const {
  auto it = index.find(word);
  return it == index.end() ? -1 : it->second;
}

Eigen::VectorXf phoneme_prototype(const std::string& phoneme, int feat_dim) {
  Rng rng(fnv1a("phoneme-prototype:" + phoneme));
  Eigen::VectorXf v(feat_dim);
  for (int i = 0; i < feat_dim; ++i) v[i] = static_cast<float>(rng.gaussian());
  return v;
}

namespace {

std::string random_word(Rng& rng) {
  int len = 3 + static_cast<int>(rng.uniform_int(6));  // 3..8 letters
  std::string w(len, 'a');
  for (char& c : w) c = static_cast<char>('a' + rng.uniform_int(26));
  return w;
}

std::string phoneme_key(const PhonemeSeq& seq) {
  std::string key;
  for (const auto& p : seq) {
    key += p;
    key += ' ';
  }
  return key;
}

// Fresh spelling whose rule-table phonemes are also unseen.
std::string fresh_word(Rng& rng, std::set<std::string>* spellings,
                       std::set<std::string>* phoneme_keys, PhonemeSeq* out_seq) {
  for (int attempt = 0; attempt < 10000; ++attempt) {
    std::string w = random_word(rng);
    if (spellings->count(w)) continue;
    PhonemeSeq seq = g2p_rules(w);
    if (seq.empty() || phoneme_keys->count(phoneme_key(seq))) continue;
    spellings->insert(w);
    phoneme_keys->insert(phoneme_key(seq));
    *out_seq = std::move(seq);
    return w;
  }
  throw ConfigError("gen_vocabulary: could not generate enough unique words");
}

FrameSeq render_frames(const Lexicon& lexicon, const Vocabulary& vocab,
                       const std::vector<std::int64_t>& word_ids,
                       double noise_sigma, int dur_min, int dur_max,
                       int feat_dim, std::uint64_t seed) {
  // Durations first, then noise, each from its own stream, so tests can
  // replay either stream independently.
  Rng dur_rng = Rng::substream(seed, "durations");

  std::vector<const PhonemeSeq*> seqs;
  for (std::int64_t id : word_ids) {
    if (id < 0 || id >= static_cast<std::int64_t>(vocab.words.size()))
      throw InvalidInputError("gen_utterance: unknown word id " +
                              std::to_string(id));
    const PhonemeSeq* seq = lexicon.find(vocab.words[id]);
    if (!seq)
      throw InvalidInputError("gen_utterance: word not in lexicon: " +
                              vocab.words[id]);
    seqs.push_back(seq);
  }

  std::vector<int> durations;
  int total = 0;
  for (const PhonemeSeq* seq : seqs) {
    for (std::size_t p = 0; p < seq->size(); ++p) {
      int k = dur_min +
              static_cast<int>(dur_rng.uniform_int(
                  static_cast<std::uint64_t>(dur_max - dur_min + 1)));
      durations.push_back(k);
      total += k;
    }
  }

  FrameSeq out;
  out.frames.resize(feat_dim, total);
  int col = 0;
  std::size_t di = 0;
  for (const PhonemeSeq* seq : seqs) {
    for (const std::string& phoneme : *seq) {
      Eigen::VectorXf proto = phoneme_prototype(phoneme, feat_dim);
      for (int k = 0; k < durations[di]; ++k) out.frames.col(col++) = proto;
      ++di;
    }
  }

  if (noise_sigma > 0.0) {
    Rng noise_rng = Rng::substream(seed, "noise");
    for (int t = 0; t < total; ++t)
      for (int f = 0; f < feat_dim; ++f)
        out.frames(f, t) +=
            static_cast<float>(noise_sigma * noise_rng.gaussian());
  }
  return out;
}

}  // namespace

std::pair<Lexicon, BiasDatabase> gen_vocabulary(std::uint64_t seed, int n_words,
                                                int n_homophone_pairs) {
  if (n_homophone_pairs * 2 > n_words)
    throw ConfigError("gen_vocabulary: n_homophone_pairs > n_words / 2");
  Rng rng = Rng::substream(seed, "vocabulary");

  Lexicon lexicon;
  BiasDatabase db;
  std::set<std::string> spellings, phoneme_keys;

  int n_base = n_words - n_homophone_pairs;
  std::vector<PhonemeSeq> base_seqs;
  for (int i = 0; i < n_base; ++i) {
    PhonemeSeq seq;
    std::string w = fresh_word(rng, &spellings, &phoneme_keys, &seq);
    lexicon.add(w, seq);
    db.add(BiasEntry{i, w, seq});
    base_seqs.push_back(std::move(seq));
  }
  // Homophone partners: new spellings carrying the phonemes of the first
  // n_homophone_pairs base words.
  for (int p = 0; p < n_homophone_pairs; ++p) {
    PhonemeSeq own;
    std::string w = fresh_word(rng, &spellings, &phoneme_keys, &own);
    phoneme_keys.erase(phoneme_key(own));  // the rule-table reading is unused
    lexicon.add(w, base_seqs[p]);
    db.add(BiasEntry{n_base + p, w, base_seqs[p]});
  }
  return {std::move(lexicon), std::move(db)};
}

Utterance gen_utterance(const Lexicon& lexicon, const Vocabulary& vocab,
                        const std::vector<std::int64_t>& word_ids,
                        const std::vector<bool>& rare, double noise_sigma,
                        int dur_min, int dur_max, int feat_dim,
                        std::uint64_t seed) {
  if (word_ids.empty()) throw InvalidInputError("gen_utterance: empty word list");
  if (noise_sigma < 0.0) throw InvalidInputError("gen_utterance: noise_sigma < 0");
  if (dur_min < 1 || dur_max < dur_min)
    throw InvalidInputError("gen_utterance: bad duration range");
  if (rare.size() != word_ids.size())
    throw InvalidInputError("gen_utterance: rare flags mismatch word ids");

  for (std::int64_t id : word_ids)
    if (id < 0 || id >= static_cast<std::int64_t>(vocab.words.size()))
      throw InvalidInputError("gen_utterance: unknown word id " +
                              std::to_string(id));

  Utterance utt;
  utt.word_ids = word_ids;
  for (std::size_t i = 0; i < word_ids.size(); ++i) {
    utt.transcript.push_back(vocab.words[word_ids[i]]);
    if (rare[i]) utt.oracle_bias.push_back(word_ids[i]);
  }
  std::sort(utt.oracle_bias.begin(), utt.oracle_bias.end());
  utt.oracle_bias.erase(
      std::unique(utt.oracle_bias.begin(), utt.oracle_bias.end()),
      utt.oracle_bias.end());
  utt.frames = render_frames(lexicon, vocab, word_ids, noise_sigma, dur_min,
                             dur_max, feat_dim, seed);
  return utt;
}

Corpus gen_corpus(const CorpusConfig& config, std::uint64_t seed) {
  if (config.n_utterances * config.rare_per_sentence < config.n_rare)
    throw ConfigError("gen_corpus: more rare words than rare word slots");
  if (config.sent_len_min < config.rare_per_sentence + 1 ||
      config.sent_len_max < config.sent_len_min)
    throw ConfigError("gen_corpus: bad sentence length range");

  Corpus corpus;
  auto [lexicon, db] =
      gen_vocabulary(seed, config.n_rare, config.n_homophone_pairs);
  corpus.lexicon = std::move(lexicon);
  corpus.db = std::move(db);
  for (const auto& entry : corpus.db.entries) {
    corpus.vocab.add(entry.word);
    corpus.rare_ids.push_back(entry.id);
  }

  // Common words continue the id space after the rare words.
  Rng common_rng = Rng::substream(seed, "common-words");
  std::set<std::string> spellings, phoneme_keys;
  for (const auto& [w, seq] : corpus.lexicon.entries) {
    spellings.insert(w);
    phoneme_keys.insert(phoneme_key(seq));
  }
  for (int i = 0; i < config.n_common; ++i) {
    PhonemeSeq seq;
    std::string w = fresh_word(common_rng, &spellings, &phoneme_keys, &seq);
    corpus.lexicon.add(w, seq);
    corpus.common_ids.push_back(corpus.vocab.add(w));
  }

  // Per-rare-word preferred context: the signal that separates homophones.
  std::unordered_map<std::int64_t, std::vector<std::int64_t>> context;
  for (std::int64_t rid : corpus.rare_ids) {
    Rng ctx_rng = Rng::substream(seed, "context", static_cast<std::uint64_t>(rid));
    std::vector<std::int64_t> pool;
    while (static_cast<int>(pool.size()) < config.context_pool_size) {
      std::int64_t c =
          corpus.common_ids[ctx_rng.uniform_int(corpus.common_ids.size())];
      if (std::find(pool.begin(), pool.end(), c) == pool.end())
        pool.push_back(c);
    }
    context[rid] = std::move(pool);
  }

  for (int u = 0; u < config.n_utterances; ++u) {
    Rng rng = Rng::substream(seed, "sentence", static_cast<std::uint64_t>(u));
    int len = config.sent_len_min +
              static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(
                  config.sent_len_max - config.sent_len_min + 1)));

    // Rare choices; the first pass over the rare list guarantees coverage.
    std::vector<std::int64_t> rares;
    for (int r = 0; r < config.rare_per_sentence; ++r) {
      std::int64_t rid =
          (u * config.rare_per_sentence + r < config.n_rare)
              ? corpus.rare_ids[u * config.rare_per_sentence + r]
              : corpus.rare_ids[rng.uniform_int(corpus.rare_ids.size())];
      rares.push_back(rid);
    }

    std::vector<std::int64_t> ids(len, -1);
    std::vector<bool> rare_flags(len, false);
    std::set<int> taken;
    for (std::int64_t rid : rares) {
      int pos;
      do {
        pos = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(len)));
      } while (taken.count(pos));
      taken.insert(pos);
      ids[pos] = rid;
      rare_flags[pos] = true;
    }
    const auto& pool = context[rares[0]];
    for (int i = 0; i < len; ++i) {
      if (ids[i] >= 0) continue;
      if (rng.uniform() < config.context_affinity)
        ids[i] = pool[rng.uniform_int(pool.size())];
      else
        ids[i] = corpus.common_ids[rng.uniform_int(corpus.common_ids.size())];
    }

    std::uint64_t utt_seed =
        Rng::substream(seed, "utterance-seed", static_cast<std::uint64_t>(u))
            .next_u64();
    corpus.utterances.push_back(gen_utterance(
        corpus.lexicon, corpus.vocab, ids, rare_flags, config.noise_sigma,
        config.dur_min, config.dur_max, config.feat_dim, utt_seed));
  }
  return corpus;
}

FrameSeq synth_bias_frames(const std::string& word, const Lexicon& lexicon,
                           int feat_dim) {
  const PhonemeSeq* seq = lexicon.find(word);
  if (!seq) throw InvalidInputError("synth_bias_frames: unknown word: " + word);
  FrameSeq out;
  out.frames.resize(feat_dim, static_cast<int>(seq->size()) * 2);
  int col = 0;
  for (const std::string& phoneme : *seq) {
    Eigen::VectorXf proto = phoneme_prototype(phoneme, feat_dim);
    out.frames.col(col++) = proto;
    out.frames.col(col++) = proto;
  }
  return out;
}

void save_frames(const FrameSeq& frames, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for write: " + path);
  const char magic[4] = {'B', 'R', 'F', 'R'};
  std::uint32_t version = 1;
  std::uint32_t f = static_cast<std::uint32_t>(frames.feat_dim());
  std::uint32_t t = static_cast<std::uint32_t>(frames.n_frames());
  out.write(magic, 4);
  out.write(reinterpret_cast<const char*>(&version), 4);
  out.write(reinterpret_cast<const char*>(&f), 4);
  out.write(reinterpret_cast<const char*>(&t), 4);
  out.write(reinterpret_cast<const char*>(frames.frames.data()),
            static_cast<std::streamsize>(sizeof(float)) * f * t);
  if (!out) throw IoError("write failed: " + path);
}

FrameSeq load_frames(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  char magic[4];
  std::uint32_t version = 0, f = 0, t = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&f), 4);
  in.read(reinterpret_cast<char*>(&t), 4);
  if (!in || std::memcmp(magic, "BRFR", 4) != 0 || version != 1)
    throw IoError("bad frames file: " + path);
  FrameSeq out;
  out.frames.resize(f, t);
  in.read(reinterpret_cast<char*>(out.frames.data()),
          static_cast<std::streamsize>(sizeof(float)) * f * t);
  if (!in) throw IoError("truncated frames file: " + path);
  return out;
}

void save_corpus(const Corpus& corpus, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "frames");
  save_lexicon(corpus.lexicon, (fs::path(dir) / "lexicon.tsv").string());

  std::ofstream vout(fs::path(dir) / "vocab.tsv");
  if (!vout) throw IoError("cannot open vocab.tsv for write");
  for (std::size_t id = 0; id < corpus.vocab.words.size(); ++id) {
    bool rare = corpus.is_rare(static_cast<std::int64_t>(id));
    vout << id << '\t' << corpus.vocab.words[id] << '\t'
         << (rare ? "rare" : "common") << '\n';
  }

  std::ofstream cout_(fs::path(dir) / "corpus.tsv");
  if (!cout_) throw IoError("cannot open corpus.tsv for write");
  for (std::size_t u = 0; u < corpus.utterances.size(); ++u) {
    const Utterance& utt = corpus.utterances[u];
    char name[32];
    std::snprintf(name, sizeof(name), "frames/utt_%06zu.bin", u);
    save_frames(utt.frames, (fs::path(dir) / name).string());
    cout_ << u << '\t';
    for (std::size_t i = 0; i < utt.transcript.size(); ++i) {
      if (i) cout_ << ' ';
      cout_ << utt.transcript[i];
    }
    cout_ << '\t';
    if (utt.oracle_bias.empty()) {
      cout_ << '-';
    } else {
      for (std::size_t i = 0; i < utt.oracle_bias.size(); ++i) {
        if (i) cout_ << ',';
        cout_ << utt.oracle_bias[i];
      }
    }
    cout_ << '\t' << name << '\n';
  }
}

Corpus load_corpus(const std::string& dir) {
  Corpus corpus;
  corpus.lexicon = load_lexicon((fs::path(dir) / "lexicon.tsv").string());

  std::ifstream vin(fs::path(dir) / "vocab.tsv");
  if (!vin) throw IoError("cannot open vocab.tsv in " + dir);
  std::string line;
  while (std::getline(vin, line)) {
    if (line.empty()) continue;
    std::istringstream iss(line);
    std::int64_t id;
    std::string word, kind;
    iss >> id >> word >> kind;
    std::int64_t got = corpus.vocab.add(word);
    if (got != id) throw IoError("vocab.tsv ids must be dense and ascending");
    if (kind == "rare") {
      const PhonemeSeq* seq = corpus.lexicon.find(word);
      if (!seq) throw IoError("rare word missing from lexicon: " + word);
      corpus.db.add(BiasEntry{id, word, *seq});
      corpus.rare_ids.push_back(id);
    } else {
      corpus.common_ids.push_back(id);
    }
  }

  std::ifstream cin_(fs::path(dir) / "corpus.tsv");
  if (!cin_) throw IoError("cannot open corpus.tsv in " + dir);
  while (std::getline(cin_, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::istringstream iss(line);
    std::string field;
    while (std::getline(iss, field, '\t')) fields.push_back(field);
    if (fields.size() != 4) throw IoError("malformed corpus.tsv line: " + line);

    Utterance utt;
    std::istringstream toks(fields[1]);
    std::string tok;
    while (toks >> tok) {
      std::int64_t id = corpus.vocab.id_of(tok);
      if (id < 0) throw IoError("transcript token not in vocab: " + tok);
      utt.transcript.push_back(tok);
      utt.word_ids.push_back(id);
    }
    if (fields[2] != "-") {
      std::istringstream oss(fields[2]);
      std::string oid;
      while (std::getline(oss, oid, ','))
        utt.oracle_bias.push_back(std::stoll(oid));
    }
    utt.frames = load_frames((fs::path(dir) / fields[3]).string());
    corpus.utterances.push_back(std::move(utt));
  }
  return corpus;
}

}  // namespace brasr
