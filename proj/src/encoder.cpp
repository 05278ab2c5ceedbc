#include "brasr/encoder.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "brasr/errors.hpp"
#include "brasr/rng.hpp"

namespace brasr {

double EncoderParams::inv_temp() const {
  return std::min(std::exp(log_inv_temp), inv_temp_clip);
}

namespace {

AffineLayer init_layer(int rows, int cols, Rng& rng) {
  AffineLayer layer;
  layer.W.resize(rows, cols);
  double scale = 1.0 / std::sqrt(static_cast<double>(cols));
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) layer.W(i, j) = scale * rng.gaussian();
  layer.b = Eigen::VectorXd::Zero(rows);
  return layer;
}

}  // namespace

EncoderParams EncoderParams::init(int feat_dim, int latent_dim, int embed_dim,
                                  int n_frame_layers, double init_inv_temp,
                                  std::uint64_t seed) {
  if (n_frame_layers < 1 || n_frame_layers > 2)
    throw ConfigError("frame encoder supports 1 or 2 layers");
  if (feat_dim < 1 || latent_dim < 1 || embed_dim < 1)
    throw ConfigError("encoder dimensions must be positive");
  EncoderParams p;
  p.feat_dim = feat_dim;
  p.latent_dim = latent_dim;
  p.embed_dim = embed_dim;

  Rng rng = Rng::substream(seed, "encoder-init");
  p.frame_layers.push_back(init_layer(latent_dim, feat_dim, rng));
  if (n_frame_layers == 2)
    p.frame_layers.push_back(init_layer(latent_dim, latent_dim, rng));
  p.text_layers.push_back(init_layer(embed_dim, kTextFeatureDim, rng));
  // Zero query => uniform attention at init, so the attention path starts as
  // plain averaging and only sharpens where the loss rewards it.
  p.attn_query = Eigen::VectorXd::Zero(latent_dim);
  p.attn_proj = init_layer(embed_dim, latent_dim, rng);
  p.avg_proj = init_layer(embed_dim, latent_dim, rng);
  p.log_inv_temp = std::log(std::min(init_inv_temp, p.inv_temp_clip));
  return p;
}

Eigen::MatrixXd encode_speech(const EncoderParams& params,
                              const FrameSeq& frames) {
  if (frames.feat_dim() != params.feat_dim)
    throw ConfigError("encode_speech: feature dim mismatch");
  if (frames.n_frames() < 1)
    throw InvalidInputError("encode_speech: empty frame sequence");
  Eigen::MatrixXd H = frames.frames.cast<double>();
  for (const AffineLayer& layer : params.frame_layers)
    H = ((layer.W * H).colwise() + layer.b).array().tanh().matrix();
  return H;
}

Eigen::VectorXd pool_avg(const EncoderParams& params,
                         const Eigen::MatrixXd& H) {
  Eigen::VectorXd mean = H.rowwise().mean();
  return params.avg_proj.W * mean + params.avg_proj.b;
}

Eigen::VectorXd pool_attn(const EncoderParams& params,
                          const Eigen::MatrixXd& H) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(H.rows()));
  Eigen::VectorXd logits = (params.attn_query.transpose() * H).transpose() * scale;
  Eigen::VectorXd w = (logits.array() - logits.maxCoeff()).exp();
  w /= w.sum();
  Eigen::VectorXd pooled = H * w;
  return params.attn_proj.W * pooled + params.attn_proj.b;
}

Eigen::VectorXd pool(const EncoderParams& params, const Eigen::MatrixXd& H,
                     Pooling pooling) {
  return pooling == Pooling::kAvg ? pool_avg(params, H) : pool_attn(params, H);
}

Eigen::VectorXd text_features(const std::string& word) {
  if (word.empty()) throw InvalidInputError("text_features: empty word");
  std::string w = fold_case(word);
  Eigen::VectorXd f = Eigen::VectorXd::Zero(kTextFeatureDim);
  for (int n = 1; n <= 3; ++n) {
    if (static_cast<int>(w.size()) < n) break;
    for (std::size_t i = 0; i + n <= w.size(); ++i) {
      std::uint64_t h = fnv1a(std::string_view(w).substr(i, n));
      f[static_cast<int>(h % kTextFeatureDim)] += 1.0;
    }
  }
  return f;
}

Eigen::VectorXd encode_bias_textual(const EncoderParams& params,
                                    const std::string& word) {
  Eigen::VectorXd x = text_features(word);
  Eigen::VectorXd out;
  for (const AffineLayer& layer : params.text_layers) {
    out = (layer.W * x + layer.b).array().tanh().matrix();
    x = out;
  }
  return x;
}

Eigen::VectorXd encode_bias_acoustic(const EncoderParams& params,
                                     const std::string& word,
                                     const Lexicon& lexicon, Pooling pooling) {
  FrameSeq frames = synth_bias_frames(word, lexicon, params.feat_dim);
  return pool(params, encode_speech(params, frames), pooling);
}

Eigen::VectorXd embed_speech(const EncoderParams& params,
                             const FrameSeq& frames, Pooling pooling) {
  return pool(params, encode_speech(params, frames), pooling);
}

Eigen::VectorXd normalize(const Eigen::VectorXd& e) {
  double norm = e.norm();
  if (!(norm > 1e-12))
    throw DegenerateInputError("normalize: zero vector");
  return e / norm;
}

namespace {

void write_tensor(std::ofstream& out, const Eigen::MatrixXd& m) {
  for (int j = 0; j < m.cols(); ++j)
    for (int i = 0; i < m.rows(); ++i) {
      float v = static_cast<float>(m(i, j));
      out.write(reinterpret_cast<const char*>(&v), 4);
    }
}

void read_tensor(std::ifstream& in, Eigen::MatrixXd& m) {
  for (int j = 0; j < m.cols(); ++j)
    for (int i = 0; i < m.rows(); ++i) {
      float v;
      in.read(reinterpret_cast<char*>(&v), 4);
      m(i, j) = v;
    }
}

void write_vec(std::ofstream& out, const Eigen::VectorXd& v) {
  Eigen::MatrixXd m = v;
  write_tensor(out, m);
}

void read_vec(std::ifstream& in, Eigen::VectorXd& v) {
  Eigen::MatrixXd m(v.size(), 1);
  read_tensor(in, m);
  v = m.col(0);
}

}  // namespace

void save_params(const EncoderParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for write: " + path);
  const char magic[4] = {'B', 'R', 'E', 'P'};
  out.write(magic, 4);
  std::uint32_t header[6] = {
      1u,  // version
      static_cast<std::uint32_t>(params.feat_dim),
      static_cast<std::uint32_t>(params.latent_dim),
      static_cast<std::uint32_t>(params.embed_dim),
      static_cast<std::uint32_t>(params.frame_layers.size()),
      static_cast<std::uint32_t>(params.text_layers.size())};
  out.write(reinterpret_cast<const char*>(header), sizeof(header));
  for (const auto& layer : params.frame_layers) {
    write_tensor(out, layer.W);
    write_vec(out, layer.b);
  }
  for (const auto& layer : params.text_layers) {
    write_tensor(out, layer.W);
    write_vec(out, layer.b);
  }
  write_vec(out, params.attn_query);
  write_tensor(out, params.attn_proj.W);
  write_vec(out, params.attn_proj.b);
  write_tensor(out, params.avg_proj.W);
  write_vec(out, params.avg_proj.b);
  float lit = static_cast<float>(params.log_inv_temp);
  float clip = static_cast<float>(params.inv_temp_clip);
  out.write(reinterpret_cast<const char*>(&lit), 4);
  out.write(reinterpret_cast<const char*>(&clip), 4);
  if (!out) throw IoError("write failed: " + path);
}

EncoderParams load_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  char magic[4];
  std::uint32_t header[6];
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(header), sizeof(header));
  if (!in || std::memcmp(magic, "BREP", 4) != 0 || header[0] != 1)
    throw IoError("bad parameter file: " + path);

  EncoderParams p;
  p.feat_dim = static_cast<int>(header[1]);
  p.latent_dim = static_cast<int>(header[2]);
  p.embed_dim = static_cast<int>(header[3]);
  std::uint32_t n_frame = header[4], n_text = header[5];

  auto layer_dims_frame = [&](std::uint32_t idx) {
    return idx == 0 ? p.feat_dim : p.latent_dim;
  };
  for (std::uint32_t l = 0; l < n_frame; ++l) {
    AffineLayer layer;
    layer.W.resize(p.latent_dim, layer_dims_frame(l));
    layer.b.resize(p.latent_dim);
    read_tensor(in, layer.W);
    read_vec(in, layer.b);
    p.frame_layers.push_back(std::move(layer));
  }
  for (std::uint32_t l = 0; l < n_text; ++l) {
    AffineLayer layer;
    layer.W.resize(p.embed_dim, kTextFeatureDim);
    layer.b.resize(p.embed_dim);
    read_tensor(in, layer.W);
    read_vec(in, layer.b);
    p.text_layers.push_back(std::move(layer));
  }
  p.attn_query.resize(p.latent_dim);
  read_vec(in, p.attn_query);
  p.attn_proj.W.resize(p.embed_dim, p.latent_dim);
  p.attn_proj.b.resize(p.embed_dim);
  read_tensor(in, p.attn_proj.W);
  read_vec(in, p.attn_proj.b);
  p.avg_proj.W.resize(p.embed_dim, p.latent_dim);
  p.avg_proj.b.resize(p.embed_dim);
  read_tensor(in, p.avg_proj.W);
  read_vec(in, p.avg_proj.b);
  float lit, clip;
  in.read(reinterpret_cast<char*>(&lit), 4);
  in.read(reinterpret_cast<char*>(&clip), 4);
  if (!in) throw IoError("truncated parameter file: " + path);
  p.log_inv_temp = lit;
  p.inv_temp_clip = clip;
  return p;
}

}  // namespace brasr
