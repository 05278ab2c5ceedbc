// brasr: bias-retrieval pipeline driver.
//
// Subcommands: gen, train, index, query, eval, bench, ablate.
// Exit codes: 0 ok, 2 configuration error, 3 I/O error, 4 training diverged.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "brasr/contrastive.hpp"
#include "brasr/encoder.hpp"
#include "brasr/errors.hpp"
#include "brasr/index.hpp"
#include "brasr/lexicon.hpp"
#include "brasr/metrics.hpp"
#include "brasr/rng.hpp"
#include "brasr/synthcorpus.hpp"

namespace fs = std::filesystem;
using namespace brasr;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitDiverged = 4;

// Flat dotted-key configuration. File format: `[section]` headers and
// `key = value` lines (or dotted `section.key = value`), `#` comments.
// Precedence: command-line --set overrides > file > built-in defaults.
class Config {
 public:
  void load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config: " + path);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::string s = strip(line.substr(0, line.find('#')));
      if (s.empty()) continue;
      if (s.front() == '[') {
        if (s.back() != ']')
          throw ConfigError(path + ":" + std::to_string(lineno) +
                            ": malformed section header");
        section = strip(s.substr(1, s.size() - 2));
        continue;
      }
      auto eq = s.find('=');
      if (eq == std::string::npos)
        throw ConfigError(path + ":" + std::to_string(lineno) +
                          ": expected key = value");
      std::string key = strip(s.substr(0, eq));
      std::string value = strip(s.substr(eq + 1));
      if (key.empty())
        throw ConfigError(path + ":" + std::to_string(lineno) + ": empty key");
      if (!section.empty() && key.find('.') == std::string::npos)
        key = section + "." + key;
      values_[key] = value;
    }
  }

  void set(const std::string& key, const std::string& value) {
    values_[strip(key)] = strip(value);
  }

  void apply_overrides(const std::vector<std::string>& overrides) {
    for (const std::string& kv : overrides) {
      auto eq = kv.find('=');
      if (eq == std::string::npos)
        throw ConfigError("--set expects key=value, got: " + kv);
      set(kv.substr(0, eq), kv.substr(eq + 1));
    }
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get_str(const std::string& key, const std::string& dflt) const {
    auto it = values_.find(key);
    return it == values_.end() ? dflt : it->second;
  }

  std::int64_t get_int(const std::string& key, std::int64_t dflt) const {
    auto it = values_.find(key);
    if (it == values_.end()) return dflt;
    try {
      std::size_t pos = 0;
      std::int64_t v = std::stoll(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "' is not an integer: " +
                        it->second);
    }
  }

  double get_double(const std::string& key, double dflt) const {
    auto it = values_.find(key);
    if (it == values_.end()) return dflt;
    try {
      std::size_t pos = 0;
      double v = std::stod(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "' is not a number: " +
                        it->second);
    }
  }

  bool get_bool(const std::string& key, bool dflt) const {
    auto it = values_.find(key);
    if (it == values_.end()) return dflt;
    if (it->second == "true" || it->second == "1" || it->second == "on")
      return true;
    if (it->second == "false" || it->second == "0" || it->second == "off")
      return false;
    throw ConfigError("config key '" + key + "' is not a boolean: " +
                      it->second);
  }

  std::vector<int> get_int_list(const std::string& key,
                                const std::vector<int>& dflt) const {
    auto it = values_.find(key);
    if (it == values_.end()) return dflt;
    std::vector<int> out;
    std::stringstream ss(it->second);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = strip(item);
      if (item.empty()) continue;
      out.push_back(static_cast<int>(std::stoll(item)));
    }
    if (out.empty())
      throw ConfigError("config key '" + key + "' is an empty list");
    return out;
  }

  // Stable hash over the sorted key=value pairs; identifies an ablation cell.
  std::string hash() const {
    std::string blob;
    for (const auto& [k, v] : values_) blob += k + "=" + v + "\n";
    std::uint64_t h = fnv1a(blob);
    std::ostringstream out;
    out << std::hex << h;
    return out.str();
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  static std::string strip(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  std::map<std::string, std::string> values_;
};

Pooling parse_pooling(const std::string& s) {
  if (s == "avg") return Pooling::kAvg;
  if (s == "attn") return Pooling::kAttn;
  throw ConfigError("pooling must be 'avg' or 'attn', got: " + s);
}

BiasModality parse_modality(const std::string& s) {
  if (s == "acoustic") return BiasModality::kAcoustic;
  if (s == "textual") return BiasModality::kTextual;
  throw ConfigError("modality must be 'acoustic' or 'textual', got: " + s);
}

RegForm parse_reg_form(const std::string& s) {
  if (s == "hinge") return RegForm::kHinge;
  if (s == "literal") return RegForm::kLiteral;
  throw ConfigError("reg_form must be 'hinge' or 'literal', got: " + s);
}

CorpusConfig corpus_config(const Config& cfg) {
  CorpusConfig c;
  c.n_rare = static_cast<int>(cfg.get_int("corpus.n_rare", c.n_rare));
  c.n_common = static_cast<int>(cfg.get_int("corpus.n_common", c.n_common));
  c.n_homophone_pairs = static_cast<int>(
      cfg.get_int("corpus.n_homophone_pairs", c.n_homophone_pairs));
  c.n_utterances =
      static_cast<int>(cfg.get_int("corpus.n_utterances", c.n_utterances));
  c.sent_len_min =
      static_cast<int>(cfg.get_int("corpus.sent_len_min", c.sent_len_min));
  c.sent_len_max =
      static_cast<int>(cfg.get_int("corpus.sent_len_max", c.sent_len_max));
  c.rare_per_sentence = static_cast<int>(
      cfg.get_int("corpus.rare_per_sentence", c.rare_per_sentence));
  c.noise_sigma = cfg.get_double("corpus.noise_sigma", c.noise_sigma);
  c.dur_min = static_cast<int>(cfg.get_int("corpus.dur_min", c.dur_min));
  c.dur_max = static_cast<int>(cfg.get_int("corpus.dur_max", c.dur_max));
  c.feat_dim = static_cast<int>(cfg.get_int("corpus.feat_dim", c.feat_dim));
  c.context_affinity =
      cfg.get_double("corpus.context_affinity", c.context_affinity);
  c.context_pool_size = static_cast<int>(
      cfg.get_int("corpus.context_pool_size", c.context_pool_size));
  return c;
}

TrainConfig train_config(const Config& cfg, std::uint64_t seed) {
  TrainConfig t;
  t.n_neg = static_cast<int>(cfg.get_int("train.n_neg", t.n_neg));
  t.lambda = cfg.get_double("train.lambda", t.lambda);
  t.lr_max = cfg.get_double("train.lr_max", t.lr_max);
  t.warmup_ratio = cfg.get_double("train.warmup_ratio", t.warmup_ratio);
  t.epochs = static_cast<int>(cfg.get_int("train.epochs", t.epochs));
  t.batch_size = static_cast<int>(cfg.get_int("train.batch_size", t.batch_size));
  t.pooling = parse_pooling(cfg.get_str("train.pooling", "attn"));
  t.modality = parse_modality(cfg.get_str("train.modality", "textual"));
  t.dcl = cfg.get_bool("train.dcl", t.dcl);
  t.seed = seed;
  t.alpha_min = cfg.get_double("train.alpha_min", t.alpha_min);
  t.alpha_max = cfg.get_double("train.alpha_max", t.alpha_max);
  t.gamma = cfg.get_double("train.gamma", t.gamma);
  t.reg_form = parse_reg_form(cfg.get_str("train.reg_form", "hinge"));
  t.margin = cfg.get_double("train.margin", t.margin);
  t.weight_decay = cfg.get_double("train.weight_decay", t.weight_decay);
  t.init_inv_temp = cfg.get_double("train.init_inv_temp", t.init_inv_temp);
  t.frame_layers =
      static_cast<int>(cfg.get_int("train.frame_layers", t.frame_layers));
  t.latent_dim = static_cast<int>(cfg.get_int("train.latent_dim", t.latent_dim));
  t.embed_dim = static_cast<int>(cfg.get_int("train.embed_dim", t.embed_dim));
  return t;
}

int homophone_theta(const Config& cfg) {
  return static_cast<int>(cfg.get_int("homophone.theta", 2));
}

struct GlobalArgs {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_given = false;
  int threads = 1;
  std::string out = "out";
  std::vector<std::string> overrides;
};

Config resolve_config(const GlobalArgs& args) {
  Config cfg;
  if (!args.config_path.empty()) cfg.load_file(args.config_path);
  cfg.apply_overrides(args.overrides);
  if (args.seed_given) cfg.set("seed", std::to_string(args.seed));
  return cfg;
}

std::uint64_t root_seed(const Config& cfg) {
  return static_cast<std::uint64_t>(cfg.get_int("seed", 0));
}

void write_meta(const Config& cfg, const fs::path& path,
                const std::map<std::string, std::string>& extra) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for write: " + path.string());
  out << "config_hash\t" << cfg.hash() << '\n';
  out << "seed\t" << root_seed(cfg) << '\n';
  for (const auto& [k, v] : extra) out << k << '\t' << v << '\n';
  for (const auto& [k, v] : cfg.values()) out << "config." << k << '\t' << v
                                              << '\n';
}

Corpus load_or_fail(const fs::path& out_dir) {
  fs::path dir = out_dir / "corpus";
  if (!fs::exists(dir / "corpus.tsv"))
    throw IoError("no corpus at " + dir.string() + "; run 'brasr gen' first");
  return load_corpus(dir.string());
}

int cmd_gen(const GlobalArgs& args) {
  Config cfg = resolve_config(args);
  CorpusConfig cc = corpus_config(cfg);
  std::uint64_t seed = root_seed(cfg);
  Corpus corpus = gen_corpus(cc, seed);
  HomophoneGraph graph = build_homophone_graph(corpus.db, homophone_theta(cfg));

  fs::create_directories(fs::path(args.out) / "corpus");
  save_corpus(corpus, (fs::path(args.out) / "corpus").string());
  save_homophone_graph(graph, (fs::path(args.out) / "graph.tsv").string());
  write_meta(cfg, fs::path(args.out) / "gen_meta.tsv",
             {{"n_utterances", std::to_string(corpus.utterances.size())},
              {"n_bias_entries", std::to_string(corpus.db.size())}});
  std::cout << "generated " << corpus.utterances.size() << " utterances, "
            << corpus.db.size() << " bias entries -> " << args.out << "\n";
  return 0;
}

int cmd_train(const GlobalArgs& args) {
  Config cfg = resolve_config(args);
  Corpus corpus = load_or_fail(args.out);
  HomophoneGraph graph = build_homophone_graph(corpus.db, homophone_theta(cfg));
  TrainConfig tc = train_config(cfg, root_seed(cfg));

  TrainResult result = train(corpus, graph, tc);
  save_params(result.params, (fs::path(args.out) / "params.bin").string());
  save_history(result.history, (fs::path(args.out) / "history.tsv").string());
  write_meta(cfg, fs::path(args.out) / "train_meta.tsv",
             {{"steps", std::to_string(result.history.size())},
              {"final_loss",
               std::to_string(result.history.back().loss)}});
  std::cout << "trained " << result.history.size() << " steps, final loss "
            << result.history.back().loss << "\n";
  return 0;
}

RetrievalIndex build_bias_index(const Corpus& corpus,
                                const EncoderParams& params,
                                BiasModality modality, Pooling pooling) {
  std::vector<std::pair<std::int64_t, Eigen::VectorXd>> embs;
  embs.reserve(corpus.db.size());
  for (const auto& entry : corpus.db.entries)
    embs.emplace_back(entry.id,
                      encode_bias(params, corpus, entry.id, modality, pooling));
  return build_index(embs);
}

int cmd_index(const GlobalArgs& args) {
  Config cfg = resolve_config(args);
  Corpus corpus = load_or_fail(args.out);
  EncoderParams params =
      load_params((fs::path(args.out) / "params.bin").string());
  BiasModality modality =
      parse_modality(cfg.get_str("train.modality", "textual"));
  Pooling pooling = parse_pooling(cfg.get_str("train.pooling", "attn"));

  RetrievalIndex index = build_bias_index(corpus, params, modality, pooling);
  save_index(index, (fs::path(args.out) / "index.bin").string());
  write_meta(cfg, fs::path(args.out) / "index_meta.tsv",
             {{"n", std::to_string(index.size())},
              {"dim", std::to_string(index.dim)}});
  std::cout << "indexed " << index.size() << " entries, dim " << index.dim
            << "\n";
  return 0;
}

int cmd_query(const GlobalArgs& args, std::int64_t utt, const std::string& frames_path,
              int k) {
  Config cfg = resolve_config(args);
  Corpus corpus = load_or_fail(args.out);
  EncoderParams params =
      load_params((fs::path(args.out) / "params.bin").string());
  RetrievalIndex index =
      load_index((fs::path(args.out) / "index.bin").string());
  Pooling pooling = parse_pooling(cfg.get_str("train.pooling", "attn"));

  FrameSeq frames;
  if (!frames_path.empty()) {
    frames = load_frames(frames_path);
  } else {
    if (utt < 0 || utt >= static_cast<std::int64_t>(corpus.utterances.size()))
      throw ConfigError("--utt out of range");
    frames = corpus.utterances[static_cast<std::size_t>(utt)].frames;
  }
  Eigen::VectorXd emb = normalize(embed_speech(params, frames, pooling));
  QueryResult result = query(index, emb, k);
  for (const auto& r : result) {
    const BiasEntry* entry = corpus.db.find(r.id);
    std::cout << r.id << '\t' << r.score << '\t'
              << (entry ? entry->word : "?") << '\n';
  }
  return 0;
}

int cmd_eval(const GlobalArgs& args) {
  Config cfg = resolve_config(args);
  Corpus corpus = load_or_fail(args.out);
  EncoderParams params =
      load_params((fs::path(args.out) / "params.bin").string());
  RetrievalIndex index =
      load_index((fs::path(args.out) / "index.bin").string());
  HomophoneGraph graph = build_homophone_graph(corpus.db, homophone_theta(cfg));

  EvalOptions options;
  options.k = static_cast<int>(cfg.get_int("eval.k", options.k));
  options.recall_ks = cfg.get_int_list("eval.recall_ks", {options.k});
  options.decode = cfg.get_bool("eval.decode", options.decode);
  options.corruption_rate =
      cfg.get_double("eval.corruption_rate", options.corruption_rate);
  options.seed = root_seed(cfg);
  options.pooling = parse_pooling(cfg.get_str("train.pooling", "attn"));

  EvalReport report = evaluate(corpus, params, index, graph, options);
  write_report(report, (fs::path(args.out) / "report.tsv").string(),
               (fs::path(args.out) / "report_detail.tsv").string());
  write_meta(cfg, fs::path(args.out) / "eval_meta.tsv", {});
  std::cout << "wer "
            << (report.wer_pct ? std::to_string(*report.wer_pct) : "NA")
            << "  bwer "
            << (report.bwer_pct ? std::to_string(*report.bwer_pct) : "NA")
            << "  -> " << (fs::path(args.out) / "report.tsv").string() << "\n";
  return 0;
}

int cmd_bench(const GlobalArgs& args) {
  Config cfg = resolve_config(args);
  std::size_t n = static_cast<std::size_t>(cfg.get_int("bench.n", 200000));
  int dim = static_cast<int>(cfg.get_int("bench.dim", 4096));
  int k = static_cast<int>(cfg.get_int("bench.k", 10));
  int n_queries = static_cast<int>(cfg.get_int("bench.queries", 20));
  int repetitions = static_cast<int>(cfg.get_int("bench.repetitions", 3));
  std::uint64_t seed = root_seed(cfg);
  if (args.threads != 1)
    throw ConfigError("bench is single-threaded; --threads must be 1");

  // Fill the matrix directly: n * dim gaussians through build_index would
  // double peak memory.
  RetrievalIndex index;
  index.dim = dim;
  index.ids.resize(n);
  index.matrix.resize(n * static_cast<std::size_t>(dim));
  Rng rng = Rng::substream(seed, "bench-vectors");
  for (std::size_t i = 0; i < n; ++i) {
    index.ids[i] = static_cast<std::int64_t>(i);
    float* row = index.matrix.data() + i * static_cast<std::size_t>(dim);
    double norm2 = 0.0;
    for (int d = 0; d < dim; ++d) {
      double v = rng.gaussian();
      row[d] = static_cast<float>(v);
      norm2 += v * v;
    }
    float inv = static_cast<float>(1.0 / std::sqrt(norm2));
    for (int d = 0; d < dim; ++d) row[d] *= inv;
  }

  Rng qrng = Rng::substream(seed, "bench-queries");
  std::vector<std::vector<float>> queries(n_queries, std::vector<float>(dim));
  for (auto& q : queries)
    for (auto& v : q) v = static_cast<float>(qrng.gaussian());

  BenchStats stats = bench(index, queries, k, repetitions);

  fs::create_directories(args.out);
  fs::path path = fs::path(args.out) / "bench.tsv";
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for write: " + path.string());
  out << "n\t" << stats.n << "\nd\t" << stats.dim << "\nK\t" << stats.k
      << "\nthreads\t" << stats.threads << "\np50_ms\t" << stats.p50_ms
      << "\np95_ms\t" << stats.p95_ms << "\nmean_ms\t" << stats.mean_ms
      << "\nqps\t" << stats.qps << '\n';
  std::cout << "n=" << stats.n << " d=" << stats.dim << " K=" << stats.k
            << " p50=" << stats.p50_ms << "ms p95=" << stats.p95_ms
            << "ms mean=" << stats.mean_ms << "ms qps=" << stats.qps << "\n";
  return 0;
}

int cmd_ablate(const GlobalArgs& args) {
  Config base = resolve_config(args);
  Corpus corpus = load_or_fail(args.out);
  HomophoneGraph graph =
      build_homophone_graph(corpus.db, homophone_theta(base));

  for (const char* pooling : {"avg", "attn"}) {
    for (const char* modality : {"acoustic", "textual"}) {
      for (const char* dcl : {"on", "off"}) {
        Config cfg = base;
        cfg.set("train.pooling", pooling);
        cfg.set("train.modality", modality);
        cfg.set("train.dcl", dcl);
        std::string cell = std::string("pool-") + pooling + "_mod-" + modality +
                           "_dcl-" + dcl;
        fs::path dir = fs::path(args.out) / "ablate" / cell;
        fs::create_directories(dir);

        TrainConfig tc = train_config(cfg, root_seed(cfg));
        TrainResult result = train(corpus, graph, tc);
        RetrievalIndex index =
            build_bias_index(corpus, result.params, tc.modality, tc.pooling);

        EvalOptions options;
        options.k = static_cast<int>(cfg.get_int("eval.k", options.k));
        options.recall_ks = cfg.get_int_list("eval.recall_ks", {options.k});
        options.seed = root_seed(cfg);
        options.pooling = tc.pooling;
        options.corruption_rate =
            cfg.get_double("eval.corruption_rate", options.corruption_rate);
        EvalReport report = evaluate(corpus, result.params, index, graph,
                                     options);
        write_report(report, (dir / "report.tsv").string(),
                     (dir / "report_detail.tsv").string());
        write_meta(cfg, dir / "meta.tsv", {{"cell", cell}});
        std::cout << cell << ": bwer "
                  << (report.bwer_pct ? std::to_string(*report.bwer_pct)
                                      : "NA")
                  << "\n";
      }
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bias-word retrieval pipeline"};
  app.require_subcommand(1);

  GlobalArgs args;
  app.add_option("--config", args.config_path, "configuration file");
  auto* seed_opt = app.add_option("--seed", args.seed, "root random seed");
  app.add_option("--threads", args.threads, "worker threads")
      ->check(CLI::PositiveNumber);
  app.add_option("--out", args.out, "artifact directory");
  app.add_option("--set", args.overrides,
                 "config override key=value (repeatable)");

  auto* gen = app.add_subcommand("gen", "generate a synthetic corpus");
  auto* train_cmd = app.add_subcommand("train", "train the dual encoder");
  auto* index_cmd = app.add_subcommand("index", "build the retrieval index");
  auto* query_cmd = app.add_subcommand("query", "query the index");
  auto* eval_cmd = app.add_subcommand("eval", "evaluate retrieval quality");
  auto* bench_cmd = app.add_subcommand("bench", "latency benchmark");
  auto* ablate_cmd =
      app.add_subcommand("ablate", "pooling x modality x curriculum grid");
  for (CLI::App* sc : {gen, train_cmd, index_cmd, query_cmd, eval_cmd,
                       bench_cmd, ablate_cmd})
    sc->fallthrough();  // global flags may follow the subcommand

  std::int64_t query_utt = -1;
  std::string query_frames;
  int query_k = 10;
  query_cmd->add_option("--utt", query_utt, "utterance index from the corpus");
  query_cmd->add_option("--frames", query_frames, "frames file to embed");
  query_cmd->add_option("--k", query_k, "results to return");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }
  args.seed_given = seed_opt->count() > 0;

  try {
    if (gen->parsed()) return cmd_gen(args);
    if (train_cmd->parsed()) return cmd_train(args);
    if (index_cmd->parsed()) return cmd_index(args);
    if (query_cmd->parsed())
      return cmd_query(args, query_utt, query_frames, query_k);
    if (eval_cmd->parsed()) return cmd_eval(args);
    if (bench_cmd->parsed()) return cmd_bench(args);
    if (ablate_cmd->parsed()) return cmd_ablate(args);
  } catch (const TrainingDivergedError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
