#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "brasr/lexicon.hpp"
#include "brasr/synthcorpus.hpp"

namespace brasr {

enum class Pooling { kAvg, kAttn };
enum class BiasModality { kAcoustic, kTextual };

// Hashed character n-gram (n = 1..3) feature dimension. Fixed; the hash is
// FNV-1a over the n-gram bytes, reduced modulo this dimension.
constexpr int kTextFeatureDim = 512;

struct AffineLayer {
  Eigen::MatrixXd W;
  Eigen::VectorXd b;
};

struct FreezeFlags {
  bool frame = false;
  bool text = false;
  bool attn = false;  // query + projection
  bool avg = false;   // projection
  bool temp = false;
};

// Every trainable tensor of the dual encoder. Computation is double
// precision; the on-disk format is float32 (see save_params).
struct EncoderParams {
  int feat_dim = 16;    // F
  int latent_dim = 32;  // D
  int embed_dim = 64;   // d

  std::vector<AffineLayer> frame_layers;  // F -> D, tanh after each layer
  std::vector<AffineLayer> text_layers;   // 512 -> d, tanh after each layer
  Eigen::VectorXd attn_query;             // D
  AffineLayer attn_proj;                  // D -> d
  AffineLayer avg_proj;                   // D -> d
  double log_inv_temp = 0.0;
  double inv_temp_clip = 100.0;
  FreezeFlags freeze;

  // exp(log_inv_temp) clipped to inv_temp_clip; the value applied to logits.
  double inv_temp() const;

  static EncoderParams init(int feat_dim, int latent_dim, int embed_dim,
                            int n_frame_layers, double init_inv_temp,
                            std::uint64_t seed);
};

// Frame-level latents H, latent_dim x T (no temporal subsampling).
Eigen::MatrixXd encode_speech(const EncoderParams& params,
                              const FrameSeq& frames);

// Column mean of H followed by the avg projection.
Eigen::VectorXd pool_avg(const EncoderParams& params, const Eigen::MatrixXd& H);

// Softmax attention over time with a learnable query, scaled by sqrt(D),
// followed by the attn projection.
Eigen::VectorXd pool_attn(const EncoderParams& params, const Eigen::MatrixXd& H);

Eigen::VectorXd pool(const EncoderParams& params, const Eigen::MatrixXd& H,
                     Pooling pooling);

// Hashed bag of character n-grams, n in {1,2,3}, raw counts.
Eigen::VectorXd text_features(const std::string& word);

Eigen::VectorXd encode_bias_textual(const EncoderParams& params,
                                    const std::string& word);

// synth_bias_frames -> encode_speech -> pool; shares the speech-path tensors.
Eigen::VectorXd encode_bias_acoustic(const EncoderParams& params,
                                     const std::string& word,
                                     const Lexicon& lexicon, Pooling pooling);

// Not-yet-normalized speech embedding of an utterance.
Eigen::VectorXd embed_speech(const EncoderParams& params,
                             const FrameSeq& frames, Pooling pooling);

// e / ||e||2; throws DegenerateInputError on (near-)zero input.
Eigen::VectorXd normalize(const Eigen::VectorXd& e);

// Parameter file: magic 'BREP', u32 version, u32 F/D/d/n_frame/n_text,
// then named tensors as little-endian f32 in a fixed order.
void save_params(const EncoderParams& params, const std::string& path);
EncoderParams load_params(const std::string& path);

}  // namespace brasr
