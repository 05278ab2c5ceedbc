#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "brasr/encoder.hpp"
#include "brasr/lexicon.hpp"
#include "brasr/rng.hpp"
#include "brasr/synthcorpus.hpp"

namespace brasr {

struct CurriculumState {
  std::int64_t step = 0;
  double alpha_min = 0.01;
  double alpha_max = 0.5;
  double gamma = 0.05;
};

// alpha_n = alpha_min + (alpha_max - alpha_min) * (2 / (1 + e^{-gamma n}) - 1).
double alpha_schedule(const CurriculumState& state);

enum class RegForm {
  kHinge,    // max(0, margin - ||b_i - h_j||)^2, pushes homophones apart
  kLiteral,  // +||b_i - h_j||^2 as printed, attracts them
};

struct TrainConfig {
  int n_neg = 16;
  double lambda = 0.1;
  double lr_max = 1e-4;
  double warmup_ratio = 0.05;
  int epochs = 10;
  int batch_size = 32;
  Pooling pooling = Pooling::kAttn;
  BiasModality modality = BiasModality::kTextual;
  bool dcl = true;
  std::uint64_t seed = 0;

  double alpha_min = 0.01;
  double alpha_max = 0.5;
  double gamma = 0.05;
  RegForm reg_form = RegForm::kHinge;
  double margin = 1.0;

  double weight_decay = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  // exp(log_inv_temp) at init; 100 matches the clipped CLAP convention.
  double init_inv_temp = 100.0;
  int frame_layers = 2;
  int latent_dim = 32;
  int embed_dim = 64;
};

// S[i][j] = inv_temp * dot(speech_i, bias_j); rows/columns are embeddings.
Eigen::MatrixXd similarity_logits(const Eigen::MatrixXd& speech_embs,
                                  const Eigen::MatrixXd& bias_embs,
                                  double inv_temp);

// Symmetric cross-entropy with diagonal targets, mean over each axis, halved.
double clap_loss(const Eigen::MatrixXd& s);

// round(alpha * n_neg) homophones of the oracle words (without replacement,
// backfilled from the random pool when short), remainder uniform from
// db \ oracle \ chosen. Never returns oracle ids or duplicates.
std::vector<std::int64_t> sample_negatives(const std::vector<std::int64_t>& oracle,
                                           const BiasDatabase& db,
                                           const HomophoneGraph& graph, int n_neg,
                                           double alpha, Rng& rng);

// lambda * sum over oracle i, j in H_i with an embedding present, of the
// configured dispersion form. Embeddings are the unit-normalized ones.
double reg_loss(const std::map<std::int64_t, Eigen::VectorXd>& embeddings,
                const std::vector<std::int64_t>& oracle,
                const HomophoneGraph& graph, double lambda, RegForm form,
                double margin);

// One optimizer step's inputs, fully determined so loss and grad are pure
// functions of the parameters.
struct TrainingBatch {
  // (utterance index, oracle word id); word ids unique within a batch so the
  // diagonal targets are well defined.
  std::vector<std::pair<int, std::int64_t>> pairs;
  std::vector<std::int64_t> negatives;
};

struct Gradients {
  std::vector<AffineLayer> frame_layers;
  std::vector<AffineLayer> text_layers;
  Eigen::VectorXd attn_query;
  AffineLayer attn_proj;
  AffineLayer avg_proj;
  double log_inv_temp = 0.0;

  static Gradients zeros_like(const EncoderParams& params);
};

double total_loss(const Corpus& corpus, const EncoderParams& params,
                  const TrainConfig& config, const HomophoneGraph& graph,
                  const TrainingBatch& batch);

// Analytic gradients for every trainable tensor, including log_inv_temp with
// the clip treated as a stop-gradient beyond the bound. Frozen components get
// exact-zero slots. Returns the loss.
double total_loss_and_grad(const Corpus& corpus, const EncoderParams& params,
                           const TrainConfig& config, const HomophoneGraph& graph,
                           const TrainingBatch& batch, Gradients* grads);

// Central finite differences at 64-bit precision over a random subsample of
// at least `n_coords` coordinates; returns the max relative error.
double grad_check(const EncoderParams& params, const Corpus& corpus,
                  const TrainConfig& config, const HomophoneGraph& graph,
                  const TrainingBatch& batch, double epsilon, int n_coords,
                  std::uint64_t seed);

struct TrainHistoryRow {
  std::int64_t step;
  int epoch;
  double loss;
  double alpha;
  double lr;
};

struct TrainResult {
  EncoderParams params;
  std::vector<TrainHistoryRow> history;
};

// AdamW with linear warmup then linear decay; the curriculum advances once
// per optimizer step. Deterministic given config.seed. Throws
// TrainingDivergedError on a non-finite loss.
TrainResult train(const Corpus& corpus, const HomophoneGraph& graph,
                  const TrainConfig& config);

// History file: step<TAB>epoch<TAB>loss<TAB>alpha<TAB>lr.
void save_history(const std::vector<TrainHistoryRow>& history,
                  const std::string& path);

// Bias embedding (not yet normalized) for a database entry under the
// configured modality.
Eigen::VectorXd encode_bias(const EncoderParams& params, const Corpus& corpus,
                            std::int64_t id, BiasModality modality,
                            Pooling pooling);

}  // namespace brasr
