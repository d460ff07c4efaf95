#pragma once

#include <optional>
#include <span>
#include <vector>

#include "stpt/common.hpp"
#include "stpt/model/config.hpp"
#include "stpt/num/ops.hpp"
#include "stpt/num/rng.hpp"
#include "stpt/num/tensor.hpp"

namespace stpt::model {

enum class StackKind { Speech, Shared };

// Indices of rows to replace with the learned mask embedding; produced by the
// masking module (kept as plain indices here to avoid a dependency cycle).
using MaskedRows = std::vector<std::int64_t>;

// Encoder-decoder network with a convolutional feature extractor, a speech
// encoder, a shared encoder and a shared decoder. One phoneme embedding table
// backs the text-input path and both frame-level target comparisons; a single
// LayerNorm instance normalizes every shared-encoder input.
class STPTModel {
 public:
  STPTModel(ModelConfig cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }

  std::vector<std::pair<std::string, Tensor>>& parameters() { return params_; }
  const std::vector<std::pair<std::string, Tensor>>& parameters() const { return params_; }
  Tensor param(const std::string& name) const;
  void zero_grads();

  Tensor phoneme_embedding_table() const { return param("emb.phoneme"); }
  Tensor speech_mask_embedding() const { return param("fe.mask_embedding"); }

  // Training-mode flag gates dropout; seeded per forward call.
  void set_train_mode(bool on, std::uint64_t dropout_seed = 0);
  bool train_mode() const { return train_mode_; }

  // --- forward pieces ---

  // [T, frame_dim] -> [T', model_dim]; conv blocks with GELU, then a linear
  // projection and LayerNorm. Throws when T is under the receptive field.
  Tensor feature_extract(const Tensor& frames) const;

  // Pre-LN transformer self-attention stack. An empty key_mask (or all-true)
  // attends everywhere; key_mask[j] == 0 removes position j from attention.
  Tensor encode(StackKind stack, const Tensor& x,
                std::span<const std::uint8_t> key_mask = {}) const;

  // Causally masked self-attention plus cross-attention into memory.
  // targets_in must begin with BOS; returns [N, token_vocab] logits.
  Tensor decode(std::span<const int> targets_in, const Tensor& memory,
                std::span<const std::uint8_t> memory_mask = {}) const;

  // Raw dot-product scores context . E^T; consumers apply softmax over the
  // phoneme axis.
  Tensor phoneme_logits(const Tensor& context) const;

  Tensor input_layer_norm(const Tensor& x) const;

  // --- routed paths (Fig-style wiring) ---

  // Speech context output for the encoder-only subtasks: feature extraction,
  // optional span corruption, positions, speech encoder, and under FSE the
  // input LayerNorm plus shared encoder.
  Tensor speech_context(const Tensor& frames, const MaskedRows* corrupt = nullptr) const;

  // Decoder memory for the speech-to-text path (always through the shared
  // encoder, whatever the variant).
  Tensor s2t_memory(const Tensor& frames, const MaskedRows* corrupt = nullptr) const;

  // Decoder memory for the text path: phoneme embeddings, positions, input
  // LayerNorm, shared encoder.
  Tensor t2t_memory(std::span<const int> phoneme_ids) const;

  Tensor positional_encoding(std::int64_t length) const;

 private:
  Tensor add_positions(const Tensor& x) const;
  Tensor encoder_block(const std::string& prefix, const Tensor& x,
                       std::span<const std::uint8_t> key_mask) const;
  Tensor attention(const std::string& prefix, const Tensor& q_in, const Tensor& kv_in,
                   const Tensor& extra_bias) const;
  Tensor ffn(const std::string& prefix, const Tensor& x) const;
  Tensor ln(const std::string& prefix, const Tensor& x) const;
  Tensor maybe_dropout(const Tensor& x) const;
  Tensor attn_bias(std::int64_t rows, std::int64_t cols, bool causal,
                   std::span<const std::uint8_t> key_mask) const;

  ModelConfig cfg_;
  std::vector<std::pair<std::string, Tensor>> params_;
  Tensor pos_table_;  // constant sinusoidal table [max_positions, d]
  bool train_mode_ = false;
  mutable Rng dropout_rng_{0};
};

// Batch routing input: exactly the tensors one subtask consumes for a single
// batch item. route_forward applies the wiring for the batch task and returns
// per-item task outputs (context matrices or decoder logits).
struct RoutedItem {
  Tensor context;     // SSL / S2P
  Tensor dec_logits;  // T2T / S2T
};

}  // namespace stpt::model
