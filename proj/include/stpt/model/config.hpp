#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace stpt::model {

// FSE routes the encoder-only speech subtasks through the speech encoder and
// then the shared encoder; PSE stops them at the speech encoder.
enum class Variant { FSE, PSE };

std::string variant_name(Variant v);
Variant parse_variant(const std::string& s);

struct ModelConfig {
  Variant variant = Variant::FSE;
  int conv_channels = 32;
  std::vector<int> conv_strides = {2, 2};
  std::vector<int> conv_kernels = {2, 2};
  int n_speech_layers = 2;
  int n_shared_layers = 2;
  int n_decoder_layers = 2;
  int model_dim = 64;
  int ffn_dim = 128;
  int n_heads = 4;
  int phoneme_vocab_size = 63;
  int token_vocab_size = 56;
  int max_positions = 512;
  int frame_dim = 8;  // input feature width; 1 for raw-sample presets
  double dropout = 0.0;
  double ln_eps = 1e-8;

  // Small enough for finite-difference sweeps over every parameter.
  static ModelConfig micro();
  static ModelConfig desk_scale();
  // Full-size preset: 7 conv blocks, 512 channels, 6+6+6 layers, dim 768.
  static ModelConfig paper_scale();

  void validate() const;

  // Composed per-layer floor((L-k)/s)+1; throws when the input is shorter
  // than the stack's receptive field.
  std::int64_t context_length(std::int64_t frames) const;
  std::int64_t min_input_length() const;
  int downsample_factor() const;
};

}  // namespace stpt::model
