#include "stpt/model/config.hpp"

#include <stdexcept>

namespace stpt::model {

std::string variant_name(Variant v) { return v == Variant::FSE ? "fse" : "pse"; }

Variant parse_variant(const std::string& s) {
  if (s == "fse") return Variant::FSE;
  if (s == "pse") return Variant::PSE;
  throw std::invalid_argument("unknown architecture variant '" + s + "' (expected fse or pse)");
}

ModelConfig ModelConfig::micro() {
  ModelConfig c;
  c.conv_channels = 4;
  c.conv_strides = {2};
  c.conv_kernels = {2};
  c.n_speech_layers = 1;
  c.n_shared_layers = 1;
  c.n_decoder_layers = 1;
  c.model_dim = 8;
  c.ffn_dim = 16;
  c.n_heads = 2;
  c.phoneme_vocab_size = 9;
  c.token_vocab_size = 11;
  c.max_positions = 64;
  c.frame_dim = 3;
  return c;
}

ModelConfig ModelConfig::desk_scale() { return ModelConfig{}; }

ModelConfig ModelConfig::paper_scale() {
  ModelConfig c;
  c.conv_channels = 512;
  c.conv_strides = {5, 2, 2, 2, 2, 2, 2};
  c.conv_kernels = {10, 3, 3, 3, 3, 2, 2};
  c.n_speech_layers = 6;
  c.n_shared_layers = 6;
  c.n_decoder_layers = 6;
  c.model_dim = 768;
  c.ffn_dim = 3072;
  c.n_heads = 8;
  c.phoneme_vocab_size = 134;
  c.token_vocab_size = 10000;
  c.max_positions = 4096;
  c.frame_dim = 1;  // raw audio samples
  return c;
}

void ModelConfig::validate() const {
  if (conv_strides.size() != conv_kernels.size()) {
    throw std::invalid_argument("model config: conv_strides and conv_kernels lengths differ");
  }
  if (conv_strides.empty()) throw std::invalid_argument("model config: empty conv stack");
  for (std::size_t i = 0; i < conv_strides.size(); ++i) {
    if (conv_strides[i] <= 0 || conv_kernels[i] <= 0) {
      throw std::invalid_argument("model config: conv strides and kernels must be positive");
    }
  }
  if (model_dim <= 0 || n_heads <= 0 || model_dim % n_heads != 0) {
    throw std::invalid_argument("model config: model_dim must be a positive multiple of n_heads");
  }
  if (ffn_dim <= 0 || conv_channels <= 0 || frame_dim <= 0) {
    throw std::invalid_argument("model config: dimensions must be positive");
  }
  if (n_speech_layers < 0 || n_shared_layers < 0 || n_decoder_layers < 0) {
    throw std::invalid_argument("model config: layer counts must be non-negative");
  }
  if (phoneme_vocab_size < 2 || token_vocab_size < 4) {
    throw std::invalid_argument("model config: vocabulary too small");
  }
  if (max_positions < 2) throw std::invalid_argument("model config: max_positions too small");
  if (dropout < 0.0 || dropout >= 1.0) {
    throw std::invalid_argument("model config: dropout must be in [0, 1)");
  }
}

std::int64_t ModelConfig::context_length(std::int64_t frames) const {
  std::int64_t len = frames;
  for (std::size_t i = 0; i < conv_strides.size(); ++i) {
    if (len < conv_kernels[i]) {
      throw std::invalid_argument("input length " + std::to_string(frames) +
                                  " is shorter than the feature extractor receptive field " +
                                  std::to_string(min_input_length()));
    }
    len = (len - conv_kernels[i]) / conv_strides[i] + 1;
  }
  return len;
}

std::int64_t ModelConfig::min_input_length() const {
  // Smallest input producing one output frame: invert the length formula.
  std::int64_t len = 1;
  for (std::size_t i = conv_strides.size(); i-- > 0;) {
    len = (len - 1) * conv_strides[i] + conv_kernels[i];
  }
  return len;
}

int ModelConfig::downsample_factor() const {
  int f = 1;
  for (int s : conv_strides) f *= s;
  return f;
}

}  // namespace stpt::model
