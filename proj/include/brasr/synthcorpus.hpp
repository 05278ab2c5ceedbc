#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "brasr/lexicon.hpp"
#include "brasr/rng.hpp"

namespace brasr {

// Frame features, feat_dim x n_frames, column per frame.
struct FrameSeq {
  Eigen::MatrixXf frames;

  int feat_dim() const { return static_cast<int>(frames.rows()); }
  int n_frames() const { return static_cast<int>(frames.cols()); }
};

struct Utterance {
  std::vector<std::string> transcript;
  std::vector<std::int64_t> word_ids;     // aligned with transcript
  std::vector<std::int64_t> oracle_bias;  // sorted, unique rare-word ids
  FrameSeq frames;
};

// Single id space over the whole vocabulary; bias-entry ids are vocabulary ids.
struct Vocabulary {
  std::vector<std::string> words;  // index == id
  std::unordered_map<std::string, std::int64_t> index;

  std::int64_t add(const std::string& word);
  std::int64_t id_of(const std::string& word) const;  // -1 when absent
};

struct Corpus {
  std::vector<Utterance> utterances;
  BiasDatabase db;  // rare words only
  Lexicon lexicon;  // all words
  Vocabulary vocab;
  std::vector<std::int64_t> common_ids;
  std::vector<std::int64_t> rare_ids;

  bool is_rare(std::int64_t id) const { return db.find(id) != nullptr; }
};

struct CorpusConfig {
  int n_rare = 120;
  int n_common = 40;
  int n_homophone_pairs = 10;  // exact-phoneme pairs among the rare words
  int n_utterances = 400;
  int sent_len_min = 6;
  int sent_len_max = 10;
  int rare_per_sentence = 1;
  double noise_sigma = 0.05;
  int dur_min = 2;  // frames per phoneme
  int dur_max = 3;
  int feat_dim = 16;
  // Fraction of common tokens drawn from the rare word's preferred context
  // set; the context is what lets retrieval tell exact homophones apart.
  double context_affinity = 0.9;
  int context_pool_size = 3;
};

// Deterministic acoustic prototype for a phoneme symbol. Keyed by the symbol
// alone, so identical phoneme sequences always render identical frames.
Eigen::VectorXf phoneme_prototype(const std::string& phoneme, int feat_dim);

// Generates `n_words` rare words with unique spellings. Exactly
// `n_homophone_pairs` pairs share identical phoneme sequences with distinct
// spellings; all other phoneme sequences are unique. Ids are 0..n_words-1.
std::pair<Lexicon, BiasDatabase> gen_vocabulary(std::uint64_t seed, int n_words,
                                                int n_homophone_pairs);

// Renders word ids to frames: per phoneme, its prototype repeated k frames
// (k uniform in [dur_min, dur_max]) plus i.i.d. Gaussian noise. `vocab` maps
// ids to spellings; `rare` flags which ids go into oracle_bias.
Utterance gen_utterance(const Lexicon& lexicon, const Vocabulary& vocab,
                        const std::vector<std::int64_t>& word_ids,
                        const std::vector<bool>& rare, double noise_sigma,
                        int dur_min, int dur_max, int feat_dim,
                        std::uint64_t seed);

Corpus gen_corpus(const CorpusConfig& config, std::uint64_t seed);

// Canonical noiseless rendering at 2 frames per phoneme; the stand-in for a
// single fixed TTS voice.
FrameSeq synth_bias_frames(const std::string& word, const Lexicon& lexicon,
                           int feat_dim);

// Frames file: magic 'BRFR', u32 version, u32 F, u32 T, then T frames of
// F little-endian f32 each.
void save_frames(const FrameSeq& frames, const std::string& path);
FrameSeq load_frames(const std::string& path);

// Corpus directory layout: lexicon.tsv, vocab.tsv (id, word, common|rare),
// corpus.tsv (utt index, transcript, oracle ids, frames path), frames/*.bin.
void save_corpus(const Corpus& corpus, const std::string& dir);
Corpus load_corpus(const std::string& dir);

}  // namespace brasr
