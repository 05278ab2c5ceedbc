#include "brasr/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "brasr/errors.hpp"

namespace brasr {

std::vector<AlignStep> align(const std::vector<std::string>& ref,
                             const std::vector<std::string>& hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::vector<std::size_t>> cost(n + 1,
                                             std::vector<std::size_t>(m + 1));
  std::vector<std::vector<EditOp>> from(n + 1, std::vector<EditOp>(m + 1));
  for (std::size_t i = 0; i <= n; ++i) {
    cost[i][0] = i;
    from[i][0] = EditOp::kDel;
  }
  for (std::size_t j = 0; j <= m; ++j) {
    cost[0][j] = j;
    from[0][j] = EditOp::kIns;
  }
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      bool eq = ref[i - 1] == hyp[j - 1];
      // Candidates in tie-break preference order: match > sub > del > ins.
      std::size_t best;
      EditOp op;
      if (eq) {
        best = cost[i - 1][j - 1];
        op = EditOp::kMatch;
      } else {
        best = cost[i - 1][j - 1] + 1;
        op = EditOp::kSub;
      }
      if (cost[i - 1][j] + 1 < best) {
        best = cost[i - 1][j] + 1;
        op = EditOp::kDel;
      }
      if (cost[i][j - 1] + 1 < best) {
        best = cost[i][j - 1] + 1;
        op = EditOp::kIns;
      }
      cost[i][j] = best;
      from[i][j] = op;
    }
  }
  std::vector<AlignStep> steps;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    EditOp op = from[i][j];
    switch (op) {
      case EditOp::kMatch:
      case EditOp::kSub:
        steps.push_back({op, ref[i - 1], hyp[j - 1]});
        --i;
        --j;
        break;
      case EditOp::kDel:
        steps.push_back({op, ref[i - 1], ""});
        --i;
        break;
      case EditOp::kIns:
        steps.push_back({op, "", hyp[j - 1]});
        --j;
        break;
    }
  }
  std::reverse(steps.begin(), steps.end());
  return steps;
}

ErrorCounts count_errors(const std::vector<AlignStep>& steps) {
  ErrorCounts counts;
  for (const auto& step : steps) {
    switch (step.op) {
      case EditOp::kMatch: ++counts.matches; break;
      case EditOp::kSub: ++counts.subs; break;
      case EditOp::kDel: ++counts.dels; break;
      case EditOp::kIns: ++counts.ins; break;
    }
  }
  return counts;
}

double wer(const std::vector<std::string>& ref,
           const std::vector<std::string>& hyp) {
  if (ref.empty()) {
    if (hyp.empty()) return 0.0;
    throw InvalidInputError("wer: empty reference with non-empty hypothesis");
  }
  ErrorCounts counts = count_errors(align(ref, hyp));
  return 100.0 * static_cast<double>(counts.total()) /
         static_cast<double>(ref.size());
}

namespace {

struct BiasCounts {
  std::size_t errors = 0;
  std::size_t ref_tokens = 0;
};

BiasCounts bias_error_counts(const std::vector<AlignStep>& steps,
                             const std::set<std::string>& bias_vocab) {
  BiasCounts counts;
  for (const auto& step : steps) {
    switch (step.op) {
      case EditOp::kMatch:
        if (bias_vocab.count(step.ref)) ++counts.ref_tokens;
        break;
      case EditOp::kSub:
      case EditOp::kDel:
        if (bias_vocab.count(step.ref)) {
          ++counts.ref_tokens;
          ++counts.errors;
        }
        break;
      case EditOp::kIns:
        if (bias_vocab.count(step.hyp)) ++counts.errors;
        break;
    }
  }
  return counts;
}

}  // namespace

std::optional<double> bwer(const std::vector<std::string>& ref,
                           const std::vector<std::string>& hyp,
                           const std::set<std::string>& bias_vocab) {
  BiasCounts counts = bias_error_counts(align(ref, hyp), bias_vocab);
  if (counts.ref_tokens == 0 && counts.errors == 0) return std::nullopt;
  if (counts.ref_tokens == 0)
    return 100.0 * static_cast<double>(counts.errors);  // pure bias insertions
  return 100.0 * static_cast<double>(counts.errors) /
         static_cast<double>(counts.ref_tokens);
}

std::optional<double> recall_b(const std::vector<IdSet>& oracle,
                               const std::vector<IdSet>& retrieved) {
  if (oracle.size() != retrieved.size())
    throw InvalidInputError("recall_b: list length mismatch");
  std::size_t hits = 0, total = 0;
  for (std::size_t u = 0; u < oracle.size(); ++u) {
    total += oracle[u].size();
    for (std::int64_t id : oracle[u]) hits += retrieved[u].count(id);
  }
  if (total == 0) return std::nullopt;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(total);
}

namespace {

IdSet homophone_sentence_set(const IdSet& oracle, const HomophoneGraph& graph) {
  IdSet h;
  for (std::int64_t id : oracle)
    for (std::int64_t nbr : graph.neighbors(id)) h.insert(nbr);
  for (std::int64_t id : oracle) h.erase(id);
  return h;
}

}  // namespace

std::optional<double> recall_h(const std::vector<IdSet>& oracle,
                               const std::vector<IdSet>& retrieved,
                               const HomophoneGraph& graph, double* literal) {
  if (oracle.size() != retrieved.size())
    throw InvalidInputError("recall_h: list length mismatch");
  std::size_t hits = 0, total_h = 0, total_retrieved = 0;
  for (std::size_t u = 0; u < oracle.size(); ++u) {
    IdSet h = homophone_sentence_set(oracle[u], graph);
    total_h += h.size();
    total_retrieved += retrieved[u].size();
    for (std::int64_t id : h) hits += retrieved[u].count(id);
  }
  if (literal)
    *literal = total_retrieved == 0
                   ? 0.0
                   : 100.0 * static_cast<double>(hits) /
                         static_cast<double>(total_retrieved);
  if (total_h == 0) return std::nullopt;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(total_h);
}

double recall_at_target(const std::vector<IdSet>& oracle,
                        const std::vector<std::vector<std::int64_t>>& rankings,
                        double target_pct, bool* any_unreached) {
  if (oracle.size() != rankings.size())
    throw InvalidInputError("recall_at_target: list length mismatch");
  if (any_unreached) *any_unreached = false;
  double sum_k = 0.0;
  std::size_t counted = 0;
  for (std::size_t u = 0; u < oracle.size(); ++u) {
    if (oracle[u].empty()) continue;
    ++counted;
    std::size_t hits = 0;
    std::size_t needed_k = rankings[u].size();
    bool reached = false;
    for (std::size_t k = 0; k < rankings[u].size(); ++k) {
      if (oracle[u].count(rankings[u][k])) ++hits;
      if (100.0 * static_cast<double>(hits) >=
          target_pct * static_cast<double>(oracle[u].size())) {
        needed_k = k + 1;
        reached = true;
        break;
      }
    }
    if (!reached && any_unreached) *any_unreached = true;
    sum_k += static_cast<double>(needed_k);
  }
  if (counted == 0)
    throw InvalidInputError("recall_at_target: no utterance has oracle words");
  return sum_k / static_cast<double>(counted);
}

std::vector<std::string> simulate_contextual_decode(
    const Corpus& corpus, const Utterance& utt, const IdSet& retrieved,
    double corruption_rate, const HomophoneGraph& graph, Rng& rng) {
  std::vector<std::string> hyp;
  hyp.reserve(utt.transcript.size());
  for (std::size_t i = 0; i < utt.transcript.size(); ++i) {
    std::int64_t id = utt.word_ids.at(i);
    if (!corpus.is_rare(id) || retrieved.count(id)) {
      hyp.push_back(utt.transcript[i]);
      continue;
    }
    if (rng.uniform() >= corruption_rate) {
      hyp.push_back(utt.transcript[i]);
      continue;
    }
    const auto& nbrs = graph.neighbors(id);
    if (!nbrs.empty()) {
      std::int64_t confusable = nbrs[rng.uniform_int(nbrs.size())];
      hyp.push_back(corpus.vocab.words.at(confusable));
    } else {
      // No homophone in the database: mangle the spelling.
      std::string w = utt.transcript[i];
      w.back() = static_cast<char>('a' + (w.back() - 'a' + 1) % 26);
      hyp.push_back(w);
    }
  }
  return hyp;
}

EvalReport evaluate(const Corpus& corpus, const EncoderParams& params,
                    const RetrievalIndex& index, const HomophoneGraph& graph,
                    const EvalOptions& options) {
  if (corpus.utterances.empty())
    throw InvalidInputError("evaluate: empty corpus");
  EvalReport report;
  report.n_utterances = corpus.utterances.size();

  std::vector<int> recall_ks = options.recall_ks;
  if (recall_ks.empty()) recall_ks = {options.k};

  const int n = static_cast<int>(index.size());
  std::vector<IdSet> oracle_sets;
  std::vector<std::vector<std::int64_t>> rankings;
  std::set<std::string> bias_vocab;
  for (const auto& entry : corpus.db.entries) bias_vocab.insert(entry.word);

  std::size_t wer_errors = 0, bias_errs = 0;
  for (std::size_t u = 0; u < corpus.utterances.size(); ++u) {
    const Utterance& utt = corpus.utterances[u];
    Eigen::VectorXd emb =
        normalize(embed_speech(params, utt.frames, options.pooling));
    QueryResult full = query(index, emb, n);
    std::vector<std::int64_t> ranking;
    ranking.reserve(full.size());
    for (const auto& r : full) ranking.push_back(r.id);

    oracle_sets.emplace_back(utt.oracle_bias.begin(), utt.oracle_bias.end());
    rankings.push_back(std::move(ranking));

    if (options.decode) {
      IdSet retrieved(rankings.back().begin(),
                      rankings.back().begin() +
                          std::min<std::size_t>(options.k, rankings.back().size()));
      Rng rng = Rng::substream(options.seed, "simulate-decode", u);
      std::vector<std::string> hyp = simulate_contextual_decode(
          corpus, utt, retrieved, options.corruption_rate, graph, rng);
      auto steps = align(utt.transcript, hyp);
      ErrorCounts counts = count_errors(steps);
      report.errors.subs += counts.subs;
      report.errors.dels += counts.dels;
      report.errors.ins += counts.ins;
      report.errors.matches += counts.matches;
      wer_errors += counts.total();
      report.ref_words += utt.transcript.size();
      BiasCounts bc = bias_error_counts(steps, bias_vocab);
      bias_errs += bc.errors;
      report.bias_ref_words += bc.ref_tokens;
    } else {
      report.ref_words += utt.transcript.size();
    }
  }

  for (int k : recall_ks) {
    std::vector<IdSet> retrieved_sets;
    for (const auto& ranking : rankings)
      retrieved_sets.emplace_back(
          ranking.begin(),
          ranking.begin() + std::min<std::size_t>(k, ranking.size()));
    if (auto rb = recall_b(oracle_sets, retrieved_sets))
      report.recall_b_at_k.emplace_back(k, *rb);
    double literal = 0.0;
    auto rh = recall_h(oracle_sets, retrieved_sets, graph, &literal);
    report.recall_h_at_k.emplace_back(k, rh);
    report.recall_h_literal_at_k.emplace_back(k, literal);
  }
  for (double target : options.recall_targets)
    report.recall_at_target.emplace_back(
        target, recall_at_target(oracle_sets, rankings, target));

  report.pruning_pct = pruning_rate(options.k, n);
  if (options.decode && report.ref_words > 0)
    report.wer_pct = 100.0 * static_cast<double>(wer_errors) /
                     static_cast<double>(report.ref_words);
  if (options.decode && report.bias_ref_words > 0)
    report.bwer_pct = 100.0 * static_cast<double>(bias_errs) /
                      static_cast<double>(report.bias_ref_words);

  for (std::size_t u = 0; u < corpus.utterances.size(); ++u) {
    IdSet topk(rankings[u].begin(),
               rankings[u].begin() +
                   std::min<std::size_t>(options.k, rankings[u].size()));
    IdSet h = homophone_sentence_set(oracle_sets[u], graph);
    std::size_t hits = 0, h_hits = 0;
    for (std::int64_t id : oracle_sets[u]) hits += topk.count(id);
    for (std::int64_t id : h) h_hits += topk.count(id);
    std::ostringstream line;
    line << u << '\t' << oracle_sets[u].size() << '\t' << hits << '\t'
         << h.size() << '\t' << h_hits;
    report.detail.push_back(line.str());
  }
  return report;
}

void write_report(const EvalReport& report, const std::string& path,
                  const std::string& detail_path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for write: " + path);
  auto opt = [](const std::optional<double>& v) {
    return v ? std::to_string(*v) : std::string("NA");
  };
  out << "n_utterances\t" << report.n_utterances << '\n';
  out << "ref_words\t" << report.ref_words << '\n';
  out << "bias_ref_words\t" << report.bias_ref_words << '\n';
  out << "wer_pct\t" << opt(report.wer_pct) << '\n';
  out << "bwer_pct\t" << opt(report.bwer_pct) << '\n';
  out << "errors_sub\t" << report.errors.subs << '\n';
  out << "errors_del\t" << report.errors.dels << '\n';
  out << "errors_ins\t" << report.errors.ins << '\n';
  for (const auto& [k, v] : report.recall_b_at_k)
    out << "recall_b_at_" << k << '\t' << v << '\n';
  for (const auto& [k, v] : report.recall_h_at_k)
    out << "recall_h_at_" << k << '\t' << opt(v) << '\n';
  for (const auto& [k, v] : report.recall_h_literal_at_k)
    out << "recall_h_literal_at_" << k << '\t' << v << '\n';
  for (const auto& [x, v] : report.recall_at_target)
    out << "recall_at_target_" << x << '\t' << v << '\n';
  out << "pruning_pct\t" << report.pruning_pct << '\n';
  if (!out) throw IoError("write failed: " + path);

  std::ofstream det(detail_path);
  if (!det) throw IoError("cannot open for write: " + detail_path);
  det << "# utt\toracle\thits_at_k\thomophones\thomophone_hits_at_k\n";
  for (const auto& line : report.detail) det << line << '\n';
}

}  // namespace brasr
