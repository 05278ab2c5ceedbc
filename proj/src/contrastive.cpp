#include "brasr/contrastive.hpp"

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <deque>
#include <fstream>
#include <set>

#include "brasr/errors.hpp"

namespace brasr {

double alpha_schedule(const CurriculumState& state) {
  if (state.alpha_min < 0.0 || state.alpha_max > 1.0 ||
      state.alpha_min > state.alpha_max || state.gamma <= 0.0)
    throw ConfigError("alpha_schedule: invalid curriculum state");
  double x = state.gamma * static_cast<double>(state.step);
  double ramp = 2.0 / (1.0 + std::exp(-x)) - 1.0;
  return state.alpha_min + (state.alpha_max - state.alpha_min) * ramp;
}

Eigen::MatrixXd similarity_logits(const Eigen::MatrixXd& speech_embs,
                                  const Eigen::MatrixXd& bias_embs,
                                  double inv_temp) {
  if (speech_embs.cols() != bias_embs.cols())
    throw ConfigError("similarity_logits: embedding dimension mismatch");
  return inv_temp * (speech_embs * bias_embs.transpose());
}

namespace {

double log_sum_exp(const Eigen::VectorXd& v) {
  double mx = v.maxCoeff();
  return mx + std::log((v.array() - mx).exp().sum());
}

}  // namespace

double clap_loss(const Eigen::MatrixXd& s) {
  if (s.rows() == 0 || s.rows() != s.cols())
    throw InvalidInputError("clap_loss: matrix must be square and non-empty");
  const int k = static_cast<int>(s.rows());
  double row_term = 0.0, col_term = 0.0;
  for (int i = 0; i < k; ++i) {
    row_term += -s(i, i) + log_sum_exp(s.row(i).transpose());
    col_term += -s(i, i) + log_sum_exp(s.col(i));
  }
  return 0.5 * (row_term + col_term) / static_cast<double>(k);
}

std::vector<std::int64_t> sample_negatives(const std::vector<std::int64_t>& oracle,
                                           const BiasDatabase& db,
                                           const HomophoneGraph& graph, int n_neg,
                                           double alpha, Rng& rng) {
  if (alpha < 0.0 || alpha > 1.0)
    throw ConfigError("sample_negatives: alpha out of [0,1]");
  std::set<std::int64_t> oracle_set(oracle.begin(), oracle.end());
  std::size_t oracle_in_db = 0;
  for (std::int64_t id : oracle_set) oracle_in_db += db.find(id) != nullptr;
  if (n_neg < 0 ||
      static_cast<std::size_t>(n_neg) > db.size() - oracle_in_db)
    throw ConfigError("sample_negatives: n_neg exceeds available pool");

  std::set<std::int64_t> hom_pool_set;
  for (std::int64_t id : oracle)
    for (std::int64_t nbr : graph.neighbors(id)) hom_pool_set.insert(nbr);
  for (std::int64_t id : oracle_set) hom_pool_set.erase(id);
  std::vector<std::int64_t> hom_pool(hom_pool_set.begin(), hom_pool_set.end());

  // round-half-to-even quota (nearbyint under the default rounding mode)
  int quota = static_cast<int>(
      std::nearbyint(alpha * static_cast<double>(n_neg)));

  std::vector<std::int64_t> chosen;
  auto draw_without_replacement = [&](std::vector<std::int64_t>& pool, int count) {
    for (int c = 0; c < count && !pool.empty(); ++c) {
      std::size_t pick = rng.uniform_int(pool.size());
      chosen.push_back(pool[pick]);
      pool[pick] = pool.back();
      pool.pop_back();
    }
  };
  draw_without_replacement(hom_pool, std::min<int>(quota, n_neg));

  std::set<std::int64_t> chosen_set(chosen.begin(), chosen.end());
  std::vector<std::int64_t> rand_pool;
  for (const auto& entry : db.entries)
    if (!oracle_set.count(entry.id) && !chosen_set.count(entry.id))
      rand_pool.push_back(entry.id);
  draw_without_replacement(rand_pool, n_neg - static_cast<int>(chosen.size()));
  return chosen;
}

namespace {

double reg_pair_loss(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                     RegForm form, double margin) {
  double dist = (a - b).norm();
  if (form == RegForm::kLiteral) return dist * dist;
  double slack = margin - dist;
  return slack > 0.0 ? slack * slack : 0.0;
}

}  // namespace

double reg_loss(const std::map<std::int64_t, Eigen::VectorXd>& embeddings,
                const std::vector<std::int64_t>& oracle,
                const HomophoneGraph& graph, double lambda, RegForm form,
                double margin) {
  if (lambda == 0.0) return 0.0;
  double sum = 0.0;
  std::set<std::int64_t> seen(oracle.begin(), oracle.end());
  for (std::int64_t i : seen) {
    auto it_i = embeddings.find(i);
    if (it_i == embeddings.end()) continue;
    for (std::int64_t j : graph.neighbors(i)) {
      auto it_j = embeddings.find(j);
      if (it_j == embeddings.end()) continue;
      sum += reg_pair_loss(it_i->second, it_j->second, form, margin);
    }
  }
  return lambda * sum;
}

Gradients Gradients::zeros_like(const EncoderParams& params) {
  Gradients g;
  for (const auto& layer : params.frame_layers)
    g.frame_layers.push_back(
        {Eigen::MatrixXd::Zero(layer.W.rows(), layer.W.cols()),
         Eigen::VectorXd::Zero(layer.b.size())});
  for (const auto& layer : params.text_layers)
    g.text_layers.push_back(
        {Eigen::MatrixXd::Zero(layer.W.rows(), layer.W.cols()),
         Eigen::VectorXd::Zero(layer.b.size())});
  g.attn_query = Eigen::VectorXd::Zero(params.attn_query.size());
  g.attn_proj = {Eigen::MatrixXd::Zero(params.attn_proj.W.rows(),
                                       params.attn_proj.W.cols()),
                 Eigen::VectorXd::Zero(params.attn_proj.b.size())};
  g.avg_proj = {Eigen::MatrixXd::Zero(params.avg_proj.W.rows(),
                                      params.avg_proj.W.cols()),
                Eigen::VectorXd::Zero(params.avg_proj.b.size())};
  return g;
}

Eigen::VectorXd encode_bias(const EncoderParams& params, const Corpus& corpus,
                            std::int64_t id, BiasModality modality,
                            Pooling pooling) {
  const BiasEntry* entry = corpus.db.find(id);
  if (!entry)
    throw InvalidInputError("encode_bias: unknown bias id " + std::to_string(id));
  return modality == BiasModality::kTextual
             ? encode_bias_textual(params, entry->word)
             : encode_bias_acoustic(params, entry->word, corpus.lexicon, pooling);
}

namespace {

// Forward caches for the hand-derived backward pass.

struct SpeechCache {
  std::vector<Eigen::MatrixXd> acts;  // acts[0] = input frames, then per layer
  Eigen::VectorXd attn_w;             // attention weights (attn pooling)
  Eigen::VectorXd pooled;             // attention-pooled or column mean
  Eigen::VectorXd raw;                // pre-normalization embedding
  Eigen::VectorXd unit;
  double raw_norm = 0.0;
};

struct TextCache {
  Eigen::VectorXd features;
  std::vector<Eigen::VectorXd> acts;  // post-tanh per layer
  Eigen::VectorXd unit;
  double raw_norm = 0.0;
};

struct BiasCache {
  bool textual = true;
  TextCache text;
  SpeechCache speech;
  const Eigen::VectorXd& unit() const {
    return textual ? text.unit : speech.unit;
  }
};

SpeechCache speech_forward(const EncoderParams& params, const FrameSeq& frames,
                           Pooling pooling) {
  SpeechCache cache;
  cache.acts.push_back(frames.frames.cast<double>());
  for (const AffineLayer& layer : params.frame_layers)
    cache.acts.push_back(((layer.W * cache.acts.back()).colwise() + layer.b)
                             .array()
                             .tanh()
                             .matrix());
  const Eigen::MatrixXd& latent = cache.acts.back();
  if (pooling == Pooling::kAvg) {
    cache.pooled = latent.rowwise().mean();
    cache.raw = params.avg_proj.W * cache.pooled + params.avg_proj.b;
  } else {
    double scale = 1.0 / std::sqrt(static_cast<double>(latent.rows()));
    Eigen::VectorXd logits =
        (params.attn_query.transpose() * latent).transpose() * scale;
    Eigen::VectorXd w = (logits.array() - logits.maxCoeff()).exp();
    w /= w.sum();
    cache.attn_w = w;
    cache.pooled = latent * w;
    cache.raw = params.attn_proj.W * cache.pooled + params.attn_proj.b;
  }
  cache.raw_norm = cache.raw.norm();
  if (!(cache.raw_norm > 1e-12))
    throw DegenerateInputError("speech embedding collapsed to zero");
  cache.unit = cache.raw / cache.raw_norm;
  return cache;
}

TextCache text_forward(const EncoderParams& params, const std::string& word) {
  TextCache cache;
  cache.features = text_features(word);
  Eigen::VectorXd x = cache.features;
  for (const AffineLayer& layer : params.text_layers) {
    x = (layer.W * x + layer.b).array().tanh().matrix();
    cache.acts.push_back(x);
  }
  cache.raw_norm = x.norm();
  if (!(cache.raw_norm > 1e-12))
    throw DegenerateInputError("text embedding collapsed to zero");
  cache.unit = x / cache.raw_norm;
  return cache;
}

// d(unit)/d(raw) applied to an upstream gradient.
Eigen::VectorXd normalize_backward(const Eigen::VectorXd& unit, double raw_norm,
                                   const Eigen::VectorXd& d_unit) {
  return (d_unit - unit.dot(d_unit) * unit) / raw_norm;
}

void speech_backward(const EncoderParams& params, const SpeechCache& cache,
                     Pooling pooling, const Eigen::VectorXd& d_unit,
                     Gradients* grads) {
  Eigen::VectorXd d_raw = normalize_backward(cache.unit, cache.raw_norm, d_unit);
  const Eigen::MatrixXd& latent = cache.acts.back();
  const int t_frames = static_cast<int>(latent.cols());
  Eigen::MatrixXd d_latent;

  if (pooling == Pooling::kAvg) {
    grads->avg_proj.W += d_raw * cache.pooled.transpose();
    grads->avg_proj.b += d_raw;
    Eigen::VectorXd d_mean = params.avg_proj.W.transpose() * d_raw;
    d_latent = (d_mean / static_cast<double>(t_frames))
                   .replicate(1, t_frames);
  } else {
    grads->attn_proj.W += d_raw * cache.pooled.transpose();
    grads->attn_proj.b += d_raw;
    Eigen::VectorXd d_pooled = params.attn_proj.W.transpose() * d_raw;
    Eigen::VectorXd d_w = latent.transpose() * d_pooled;
    d_latent = d_pooled * cache.attn_w.transpose();
    // softmax backward
    Eigen::VectorXd d_logits =
        cache.attn_w.array() * (d_w.array() - cache.attn_w.dot(d_w));
    double scale = 1.0 / std::sqrt(static_cast<double>(latent.rows()));
    grads->attn_query += scale * (latent * d_logits);
    d_latent += scale * (params.attn_query * d_logits.transpose());
  }

  Eigen::MatrixXd d_act = d_latent;
  for (int l = static_cast<int>(params.frame_layers.size()) - 1; l >= 0; --l) {
    const Eigen::MatrixXd& act = cache.acts[l + 1];
    Eigen::MatrixXd d_z =
        (d_act.array() * (1.0 - act.array().square())).matrix();
    grads->frame_layers[l].W += d_z * cache.acts[l].transpose();
    grads->frame_layers[l].b += d_z.rowwise().sum();
    if (l > 0) d_act = params.frame_layers[l].W.transpose() * d_z;
  }
}

void text_backward(const EncoderParams& params, const TextCache& cache,
                   const Eigen::VectorXd& d_unit, Gradients* grads) {
  Eigen::VectorXd d_act =
      normalize_backward(cache.unit, cache.raw_norm, d_unit);
  for (int l = static_cast<int>(params.text_layers.size()) - 1; l >= 0; --l) {
    const Eigen::VectorXd& act = cache.acts[l];
    Eigen::VectorXd d_z =
        (d_act.array() * (1.0 - act.array().square())).matrix();
    const Eigen::VectorXd& input =
        l == 0 ? cache.features : cache.acts[l - 1];
    grads->text_layers[l].W += d_z * input.transpose();
    grads->text_layers[l].b += d_z;
    if (l > 0) d_act = params.text_layers[l].W.transpose() * d_z;
  }
}

BiasCache bias_forward(const EncoderParams& params, const Corpus& corpus,
                       std::int64_t id, const TrainConfig& config) {
  const BiasEntry* entry = corpus.db.find(id);
  if (!entry)
    throw InvalidInputError("bias_forward: unknown bias id " +
                            std::to_string(id));
  BiasCache cache;
  if (config.modality == BiasModality::kTextual) {
    cache.textual = true;
    cache.text = text_forward(params, entry->word);
  } else {
    cache.textual = false;
    FrameSeq frames =
        synth_bias_frames(entry->word, corpus.lexicon, params.feat_dim);
    cache.speech = speech_forward(params, frames, config.pooling);
  }
  return cache;
}

}  // namespace

double total_loss_and_grad(const Corpus& corpus, const EncoderParams& params,
                           const TrainConfig& config, const HomophoneGraph& graph,
                           const TrainingBatch& batch, Gradients* grads) {
  const int k = static_cast<int>(batch.pairs.size());
  const int m = static_cast<int>(batch.negatives.size());
  if (k == 0) throw InvalidInputError("total_loss: empty batch");
  {
    std::set<std::int64_t> words;
    for (const auto& [u, w] : batch.pairs) {
      if (u < 0 || u >= static_cast<int>(corpus.utterances.size()))
        throw InvalidInputError("total_loss: bad utterance index");
      if (!words.insert(w).second)
        throw InvalidInputError("total_loss: duplicate oracle word in batch");
    }
    for (std::int64_t n : batch.negatives)
      if (words.count(n))
        throw InvalidInputError("total_loss: negative overlaps batch oracle");
  }

  const bool use_reg = config.dcl && config.lambda > 0.0;

  // Forward: speech side per pair, bias side per unique id.
  std::vector<SpeechCache> speech(k);
  for (int i = 0; i < k; ++i)
    speech[i] = speech_forward(
        params, corpus.utterances[batch.pairs[i].first].frames, config.pooling);

  std::vector<std::int64_t> column_ids;
  for (const auto& [u, w] : batch.pairs) column_ids.push_back(w);
  for (std::int64_t n : batch.negatives) column_ids.push_back(n);

  std::map<std::int64_t, BiasCache> bias;
  for (std::int64_t id : column_ids)
    if (!bias.count(id)) bias.emplace(id, bias_forward(params, corpus, id, config));
  if (use_reg) {
    for (const auto& [u, w] : batch.pairs)
      for (std::int64_t j : graph.neighbors(w))
        if (!bias.count(j) && corpus.db.find(j))
          bias.emplace(j, bias_forward(params, corpus, j, config));
  }

  const double inv_temp = params.inv_temp();
  Eigen::MatrixXd s(k, k + m);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k + m; ++j)
      s(i, j) = inv_temp * speech[i].unit.dot(bias.at(column_ids[j]).unit());

  // Symmetric cross-entropy: rows over all columns, columns over the square
  // positive block.
  double row_term = 0.0, col_term = 0.0;
  Eigen::MatrixXd p_row(k, k + m), p_col = Eigen::MatrixXd::Zero(k, k);
  for (int i = 0; i < k; ++i) {
    Eigen::VectorXd row = s.row(i).transpose();
    double lse = log_sum_exp(row);
    row_term += -s(i, i) + lse;
    p_row.row(i) = (row.array() - lse).exp().transpose();
  }
  for (int j = 0; j < k; ++j) {
    Eigen::VectorXd col = s.col(j);
    double lse = log_sum_exp(col);
    col_term += -s(j, j) + lse;
    p_col.col(j) = (col.array() - lse).exp();
  }
  double loss = 0.5 * (row_term + col_term) / static_cast<double>(k);

  // Dispersion regularizer over the batch's oracle words.
  double reg = 0.0;
  if (use_reg) {
    std::map<std::int64_t, Eigen::VectorXd> embs;
    for (const auto& [id, cache] : bias) embs[id] = cache.unit();
    std::vector<std::int64_t> oracle;
    for (const auto& [u, w] : batch.pairs) oracle.push_back(w);
    reg = reg_loss(embs, oracle, graph, config.lambda, config.reg_form,
                   config.margin);
    loss += reg;
  }

  if (!grads) return loss;
  *grads = Gradients::zeros_like(params);

  Eigen::MatrixXd d_s = p_row;
  for (int i = 0; i < k; ++i) d_s(i, i) -= 1.0;
  for (int j = 0; j < k; ++j) {
    d_s.col(j) += p_col.col(j);
    d_s(j, j) -= 1.0;
  }
  d_s *= 0.5 / static_cast<double>(k);

  std::map<std::int64_t, Eigen::VectorXd> d_bias_unit;
  for (const auto& [id, cache] : bias)
    d_bias_unit[id] = Eigen::VectorXd::Zero(cache.unit().size());

  double d_inv_temp = 0.0;
  for (int i = 0; i < k; ++i) {
    Eigen::VectorXd d_speech_unit = Eigen::VectorXd::Zero(params.embed_dim);
    for (int j = 0; j < k + m; ++j) {
      const Eigen::VectorXd& e = bias.at(column_ids[j]).unit();
      d_speech_unit += d_s(i, j) * inv_temp * e;
      d_bias_unit[column_ids[j]] += d_s(i, j) * inv_temp * speech[i].unit;
      d_inv_temp += d_s(i, j) * speech[i].unit.dot(e);
    }
    speech_backward(params, speech[i], config.pooling, d_speech_unit, grads);
  }

  if (use_reg) {
    std::set<std::int64_t> oracle;
    for (const auto& [u, w] : batch.pairs) oracle.insert(w);
    for (std::int64_t i : oracle) {
      for (std::int64_t j : graph.neighbors(i)) {
        auto it = bias.find(j);
        if (it == bias.end()) continue;
        Eigen::VectorXd diff = bias.at(i).unit() - it->second.unit();
        double dist = diff.norm();
        if (config.reg_form == RegForm::kLiteral) {
          d_bias_unit[i] += 2.0 * config.lambda * diff;
          d_bias_unit[j] -= 2.0 * config.lambda * diff;
        } else if (dist < config.margin && dist > 1e-12) {
          double coef = -2.0 * config.lambda * (config.margin - dist) / dist;
          d_bias_unit[i] += coef * diff;
          d_bias_unit[j] -= coef * diff;
        }
      }
    }
  }

  for (const auto& [id, cache] : bias) {
    const Eigen::VectorXd& d_unit = d_bias_unit.at(id);
    if (cache.textual)
      text_backward(params, cache.text, d_unit, grads);
    else
      speech_backward(params, cache.speech, config.pooling, d_unit, grads);
  }

  // Clip as stop-gradient: no flow once exp(log_inv_temp) reaches the bound.
  double raw_exp = std::exp(params.log_inv_temp);
  grads->log_inv_temp =
      raw_exp < params.inv_temp_clip ? d_inv_temp * raw_exp : 0.0;

  if (params.freeze.frame)
    for (auto& layer : grads->frame_layers) {
      layer.W.setZero();
      layer.b.setZero();
    }
  if (params.freeze.text)
    for (auto& layer : grads->text_layers) {
      layer.W.setZero();
      layer.b.setZero();
    }
  if (params.freeze.attn) {
    grads->attn_query.setZero();
    grads->attn_proj.W.setZero();
    grads->attn_proj.b.setZero();
  }
  if (params.freeze.avg) {
    grads->avg_proj.W.setZero();
    grads->avg_proj.b.setZero();
  }
  if (params.freeze.temp) grads->log_inv_temp = 0.0;
  return loss;
}

double total_loss(const Corpus& corpus, const EncoderParams& params,
                  const TrainConfig& config, const HomophoneGraph& graph,
                  const TrainingBatch& batch) {
  return total_loss_and_grad(corpus, params, config, graph, batch, nullptr);
}

namespace {

// Flat coordinate view over the trainable tensors of EncoderParams.
struct CoordView {
  std::vector<double*> coords;

  static CoordView trainable(EncoderParams& p) {
    CoordView v;
    auto add_layer = [&](AffineLayer& layer) {
      for (int j = 0; j < layer.W.cols(); ++j)
        for (int i = 0; i < layer.W.rows(); ++i) v.coords.push_back(&layer.W(i, j));
      for (int i = 0; i < layer.b.size(); ++i) v.coords.push_back(&layer.b[i]);
    };
    if (!p.freeze.frame)
      for (auto& layer : p.frame_layers) add_layer(layer);
    if (!p.freeze.text)
      for (auto& layer : p.text_layers) add_layer(layer);
    if (!p.freeze.attn) {
      for (int i = 0; i < p.attn_query.size(); ++i)
        v.coords.push_back(&p.attn_query[i]);
      add_layer(p.attn_proj);
    }
    if (!p.freeze.avg) add_layer(p.avg_proj);
    if (!p.freeze.temp && std::exp(p.log_inv_temp) < p.inv_temp_clip * 0.999)
      v.coords.push_back(&p.log_inv_temp);
    return v;
  }
};

// Same coordinate order as CoordView::trainable.
std::vector<double> flatten_grads(const EncoderParams& p, const Gradients& g) {
  std::vector<double> out;
  auto add_layer = [&](const AffineLayer& layer) {
    for (int j = 0; j < layer.W.cols(); ++j)
      for (int i = 0; i < layer.W.rows(); ++i) out.push_back(layer.W(i, j));
    for (int i = 0; i < layer.b.size(); ++i) out.push_back(layer.b[i]);
  };
  if (!p.freeze.frame)
    for (const auto& layer : g.frame_layers) add_layer(layer);
  if (!p.freeze.text)
    for (const auto& layer : g.text_layers) add_layer(layer);
  if (!p.freeze.attn) {
    for (int i = 0; i < g.attn_query.size(); ++i) out.push_back(g.attn_query[i]);
    add_layer(g.attn_proj);
  }
  if (!p.freeze.avg) add_layer(g.avg_proj);
  if (!p.freeze.temp && std::exp(p.log_inv_temp) < p.inv_temp_clip * 0.999)
    out.push_back(g.log_inv_temp);
  return out;
}

}  // namespace

double grad_check(const EncoderParams& params, const Corpus& corpus,
                  const TrainConfig& config, const HomophoneGraph& graph,
                  const TrainingBatch& batch, double epsilon, int n_coords,
                  std::uint64_t seed) {
  EncoderParams work = params;
  Gradients grads;
  total_loss_and_grad(corpus, work, config, graph, batch, &grads);
  std::vector<double> analytic = flatten_grads(work, grads);
  CoordView view = CoordView::trainable(work);

  Rng rng = Rng::substream(seed, "grad-check");
  std::vector<std::size_t> picks;
  if (static_cast<int>(view.coords.size()) <= n_coords) {
    for (std::size_t i = 0; i < view.coords.size(); ++i) picks.push_back(i);
  } else {
    std::set<std::size_t> set;
    while (static_cast<int>(set.size()) < n_coords)
      set.insert(rng.uniform_int(view.coords.size()));
    picks.assign(set.begin(), set.end());
  }

  double max_rel_err = 0.0;
  for (std::size_t idx : picks) {
    double* coord = view.coords[idx];
    double original = *coord;
    auto loss_at = [&](double x) {
      *coord = x;
      return total_loss(corpus, work, config, graph, batch);
    };
    // Fourth-order central difference. The O(eps^4) truncation lets eps be
    // large enough that cancellation roundoff stays well below the gradient
    // even on near-flat coordinates (e.g. rarely hit text hash buckets).
    double numeric = (8.0 * (loss_at(original + epsilon) -
                             loss_at(original - epsilon)) -
                      (loss_at(original + 2.0 * epsilon) -
                       loss_at(original - 2.0 * epsilon))) /
                     (12.0 * epsilon);
    *coord = original;
    double rel = std::abs(analytic[idx] - numeric) /
                 std::max(1e-8, std::abs(numeric));
    max_rel_err = std::max(max_rel_err, rel);
  }
  return max_rel_err;
}

namespace {

struct AdamSlot {
  Eigen::MatrixXd m, v;
};

class AdamW {
 public:
  AdamW(const TrainConfig& config, const EncoderParams& params)
      : config_(config) {
    auto slot = [](const Eigen::MatrixXd& t) {
      return AdamSlot{Eigen::MatrixXd::Zero(t.rows(), t.cols()),
                      Eigen::MatrixXd::Zero(t.rows(), t.cols())};
    };
    for (const auto& layer : params.frame_layers) {
      slots_.push_back(slot(layer.W));
      slots_.push_back(slot(layer.b));
    }
    for (const auto& layer : params.text_layers) {
      slots_.push_back(slot(layer.W));
      slots_.push_back(slot(layer.b));
    }
    slots_.push_back(slot(params.attn_query));
    slots_.push_back(slot(params.attn_proj.W));
    slots_.push_back(slot(params.attn_proj.b));
    slots_.push_back(slot(params.avg_proj.W));
    slots_.push_back(slot(params.avg_proj.b));
    temp_slot_ = AdamSlot{Eigen::MatrixXd::Zero(1, 1),
                          Eigen::MatrixXd::Zero(1, 1)};
  }

  void step(EncoderParams* params, const Gradients& grads, double lr) {
    ++t_;
    std::size_t s = 0;
    auto update = [&](Eigen::MatrixXd& p, const Eigen::MatrixXd& g,
                      bool decay) {
      AdamSlot& slot = slots_[s++];
      apply(slot, p, g, lr, decay);
    };
    auto update_vec = [&](Eigen::VectorXd& p, const Eigen::VectorXd& g,
                          bool decay) {
      AdamSlot& slot = slots_[s++];
      Eigen::MatrixXd pm = p, gm = g;
      apply(slot, pm, gm, lr, decay);
      p = pm.col(0);
    };
    for (std::size_t l = 0; l < params->frame_layers.size(); ++l) {
      update(params->frame_layers[l].W, grads.frame_layers[l].W, true);
      update_vec(params->frame_layers[l].b, grads.frame_layers[l].b, true);
    }
    for (std::size_t l = 0; l < params->text_layers.size(); ++l) {
      update(params->text_layers[l].W, grads.text_layers[l].W, true);
      update_vec(params->text_layers[l].b, grads.text_layers[l].b, true);
    }
    // No decay on the attention query: it is a gain-type parameter whose
    // per-frame gradients are O(1/T), so decay would pin it at zero and
    // silently turn attention pooling into plain averaging.
    update_vec(params->attn_query, grads.attn_query, false);
    update(params->attn_proj.W, grads.attn_proj.W, true);
    update_vec(params->attn_proj.b, grads.attn_proj.b, true);
    update(params->avg_proj.W, grads.avg_proj.W, true);
    update_vec(params->avg_proj.b, grads.avg_proj.b, true);

    Eigen::MatrixXd pt(1, 1), gt(1, 1);
    pt(0, 0) = params->log_inv_temp;
    gt(0, 0) = grads.log_inv_temp;
    apply(temp_slot_, pt, gt, lr, false);
    params->log_inv_temp = pt(0, 0);
  }

 private:
  void apply(AdamSlot& slot, Eigen::MatrixXd& p, const Eigen::MatrixXd& g,
             double lr, bool decay) {
    slot.m = config_.adam_beta1 * slot.m + (1.0 - config_.adam_beta1) * g;
    slot.v = config_.adam_beta2 * slot.v.array().matrix() +
             (1.0 - config_.adam_beta2) * g.array().square().matrix();
    double bc1 = 1.0 - std::pow(config_.adam_beta1, t_);
    double bc2 = 1.0 - std::pow(config_.adam_beta2, t_);
    Eigen::ArrayXXd mhat = slot.m.array() / bc1;
    Eigen::ArrayXXd vhat = slot.v.array() / bc2;
    p.array() -= lr * (mhat / (vhat.sqrt() + config_.adam_eps));
    if (decay) p.array() -= lr * config_.weight_decay * p.array();
  }

  TrainConfig config_;
  std::vector<AdamSlot> slots_;
  AdamSlot temp_slot_;
  int t_ = 0;
};

double lr_at(const TrainConfig& config, std::int64_t step,
             std::int64_t total_steps) {
  std::int64_t warmup = static_cast<std::int64_t>(
      std::nearbyint(config.warmup_ratio * static_cast<double>(total_steps)));
  if (warmup > 0 && step < warmup)
    return config.lr_max * static_cast<double>(step + 1) /
           static_cast<double>(warmup);
  if (total_steps == warmup) return config.lr_max;
  return config.lr_max *
         static_cast<double>(total_steps - step) /
         static_cast<double>(total_steps - warmup);
}

}  // namespace

TrainResult train(const Corpus& corpus, const HomophoneGraph& graph,
                  const TrainConfig& config) {
  if (corpus.utterances.empty()) throw InvalidInputError("train: empty corpus");
  if (config.n_neg < 1 || config.batch_size < 1 || config.epochs < 1)
    throw ConfigError("train: n_neg, batch_size and epochs must be positive");
  if (config.warmup_ratio < 0.0 || config.warmup_ratio > 1.0)
    throw ConfigError("train: warmup_ratio out of [0,1]");

  std::vector<std::pair<int, std::int64_t>> pool;
  for (std::size_t u = 0; u < corpus.utterances.size(); ++u)
    for (std::int64_t w : corpus.utterances[u].oracle_bias)
      pool.emplace_back(static_cast<int>(u), w);
  if (pool.empty()) throw InvalidInputError("train: no oracle bias pairs");

  int feat_dim = corpus.utterances.front().frames.feat_dim();
  TrainResult result;
  result.params =
      EncoderParams::init(feat_dim, config.latent_dim, config.embed_dim,
                          config.frame_layers, config.init_inv_temp, config.seed);

  // Partition every epoch into batches up front so the lr schedule sees the
  // true step count (displaced duplicates can add batches beyond
  // ceil(pool / batch_size)).
  std::vector<std::vector<TrainingBatch>> epoch_batches(config.epochs);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng shuffle_rng = Rng::substream(config.seed, "epoch-shuffle",
                                     static_cast<std::uint64_t>(epoch));
    std::vector<std::pair<int, std::int64_t>> shuffled = pool;
    for (std::size_t i = shuffled.size(); i > 1; --i)
      std::swap(shuffled[i - 1], shuffled[shuffle_rng.uniform_int(i)]);

    // Greedy batching keeping word ids unique per batch; displaced pairs are
    // retried first on the next batch.
    std::deque<std::pair<int, std::int64_t>> stream(shuffled.begin(),
                                                    shuffled.end());
    while (!stream.empty()) {
      TrainingBatch batch;
      std::set<std::int64_t> words;
      std::deque<std::pair<int, std::int64_t>> displaced;
      while (!stream.empty() &&
             static_cast<int>(batch.pairs.size()) < config.batch_size) {
        auto pair = stream.front();
        stream.pop_front();
        if (words.insert(pair.second).second)
          batch.pairs.push_back(pair);
        else
          displaced.push_back(pair);
      }
      for (auto it = displaced.rbegin(); it != displaced.rend(); ++it)
        stream.push_front(*it);
      epoch_batches[epoch].push_back(std::move(batch));
    }
  }
  std::int64_t total_steps = 0;
  for (const auto& batches : epoch_batches)
    total_steps += static_cast<std::int64_t>(batches.size());
  AdamW optimizer(config, result.params);

  std::int64_t step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (TrainingBatch& batch : epoch_batches[epoch]) {
      double alpha = 0.0;
      if (config.dcl)
        alpha = alpha_schedule(
            {step, config.alpha_min, config.alpha_max, config.gamma});
      Rng neg_rng = Rng::substream(config.seed, "negatives",
                                   static_cast<std::uint64_t>(step));
      std::vector<std::int64_t> oracle;
      for (const auto& [u, w] : batch.pairs) oracle.push_back(w);
      batch.negatives = sample_negatives(oracle, corpus.db, graph, config.n_neg,
                                         alpha, neg_rng);

      Gradients grads;
      double loss = total_loss_and_grad(corpus, result.params, config, graph,
                                        batch, &grads);
      if (!std::isfinite(loss))
        throw TrainingDivergedError("train: non-finite loss", step);

      double lr = lr_at(config, step, total_steps);
      optimizer.step(&result.params, grads, lr);
      result.history.push_back({step, epoch, loss, alpha, lr});
      ++step;
    }
  }
  return result;
}

void save_history(const std::vector<TrainHistoryRow>& history,
                  const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for write: " + path);
  out << "# step\tepoch\tloss\talpha\tlr\n";
  out.precision(17);
  for (const auto& row : history)
    out << row.step << '\t' << row.epoch << '\t' << row.loss << '\t'
        << row.alpha << '\t' << row.lr << '\n';
}

}  // namespace brasr
