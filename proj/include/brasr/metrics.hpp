#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "brasr/encoder.hpp"
#include "brasr/index.hpp"
#include "brasr/lexicon.hpp"
#include "brasr/rng.hpp"
#include "brasr/synthcorpus.hpp"

namespace brasr {

enum class EditOp { kMatch, kSub, kIns, kDel };

struct AlignStep {
  EditOp op;
  std::string ref;  // empty for insertions
  std::string hyp;  // empty for deletions
};

// Minimal unit-cost alignment. At equal cost the backtrace prefers
// match > sub > del > ins, so it is deterministic.
std::vector<AlignStep> align(const std::vector<std::string>& ref,
                             const std::vector<std::string>& hyp);

struct ErrorCounts {
  std::size_t subs = 0, dels = 0, ins = 0, matches = 0;
  std::size_t total() const { return subs + dels + ins; }
};

ErrorCounts count_errors(const std::vector<AlignStep>& steps);

// 100 * (S + D + I) / |ref|.
double wer(const std::vector<std::string>& ref,
           const std::vector<std::string>& hyp);

// WER restricted to bias words: substitutions/deletions whose reference token
// is in bias_vocab plus insertions whose hypothesis token is, over the count
// of reference bias tokens. nullopt when the denominator is zero and no bias
// insertions occur.
std::optional<double> bwer(const std::vector<std::string>& ref,
                           const std::vector<std::string>& hyp,
                           const std::set<std::string>& bias_vocab);

using IdSet = std::set<std::int64_t>;

// 100 * sum |oracle ∩ retrieved| / sum |oracle|; nullopt on empty denominator.
std::optional<double> recall_b(const std::vector<IdSet>& oracle,
                               const std::vector<IdSet>& retrieved);

// Homophone distractor recall. H_sentence is the union of homophone sets of
// the oracle words minus the oracle words themselves.
// Primary reading: 100 * sum |H ∩ retrieved| / sum |H| (nullopt when no
// homophones exist). `literal` gets the alternative denominator
// sum |retrieved| instead.
std::optional<double> recall_h(const std::vector<IdSet>& oracle,
                               const std::vector<IdSet>& retrieved,
                               const HomophoneGraph& graph,
                               double* literal = nullptr);

// Mean over utterances (non-empty oracle only) of the smallest k whose top-k
// prefix covers at least X% of the oracle; ranking length when unreachable.
double recall_at_target(const std::vector<IdSet>& oracle,
                        const std::vector<std::vector<std::int64_t>>& rankings,
                        double target_pct, bool* any_unreached = nullptr);

// Mock contextual decoder standing in for the SpeechLLM: rare tokens outside
// the retrieved set are corrupted with probability corruption_rate (homophone
// spelling when one exists, otherwise a mangled spelling); retrieved rare
// tokens and common tokens pass through.
std::vector<std::string> simulate_contextual_decode(
    const Corpus& corpus, const Utterance& utt, const IdSet& retrieved,
    double corruption_rate, const HomophoneGraph& graph, Rng& rng);

struct EvalOptions {
  int k = 10;
  std::vector<int> recall_ks;          // defaults to {k}
  std::vector<double> recall_targets = {99.0};
  bool decode = true;
  double corruption_rate = 1.0;
  std::uint64_t seed = 0;
  Pooling pooling = Pooling::kAttn;
};

struct EvalReport {
  std::optional<double> wer_pct;
  std::optional<double> bwer_pct;
  std::vector<std::pair<int, double>> recall_b_at_k;
  std::vector<std::pair<int, std::optional<double>>> recall_h_at_k;
  std::vector<std::pair<int, double>> recall_h_literal_at_k;
  std::vector<std::pair<double, double>> recall_at_target;  // (X, mean k)
  double pruning_pct = 0.0;
  std::size_t n_utterances = 0;
  std::size_t ref_words = 0;
  std::size_t bias_ref_words = 0;
  ErrorCounts errors;
  ErrorCounts bias_errors;

  // Per-utterance detail, one line each: utt, |oracle|, hits@K, |H|, H hits@K.
  std::vector<std::string> detail;
};

EvalReport evaluate(const Corpus& corpus, const EncoderParams& params,
                    const RetrievalIndex& index, const HomophoneGraph& graph,
                    const EvalOptions& options);

// Flat key-value record plus the per-utterance detail lines.
void write_report(const EvalReport& report, const std::string& path,
                  const std::string& detail_path);

}  // namespace brasr
