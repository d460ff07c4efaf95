#include "stpt/model/net.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace stpt::model {

namespace {

constexpr double kMaskBias = -1e30;

}  // namespace

STPTModel::STPTModel(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  Rng rng(seed);
  const int d = cfg_.model_dim;

  auto add_param = [&](const std::string& name, Shape shape, auto&& init) {
    Arr v(shape_numel(shape));
    init(v);
    params_.emplace_back(name, Tensor::from_array(std::move(shape), std::move(v), true));
  };
  auto xavier = [&](std::int64_t fan_in, std::int64_t fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    return [&rng, limit](Arr& v) {
      for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.uniform(-limit, limit);
    };
  };
  auto gaussian = [&](double sd) {
    return [&rng, sd](Arr& v) {
      for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.gauss(0.0, sd);
    };
  };
  auto zeros = [](Arr& v) { v.setZero(); };
  auto ones = [](Arr& v) { v.setOnes(); };

  auto add_linear = [&](const std::string& name, std::int64_t in, std::int64_t out) {
    add_param(name + ".w", {in, out}, xavier(in, out));
    add_param(name + ".b", {out}, zeros);
  };
  auto add_ln = [&](const std::string& name) {
    add_param(name + ".gain", {d}, ones);
    add_param(name + ".bias", {d}, zeros);
  };
  auto add_attn = [&](const std::string& name) {
    add_linear(name + ".q", d, d);
    add_linear(name + ".k", d, d);
    add_linear(name + ".v", d, d);
    add_linear(name + ".o", d, d);
  };
  auto add_encoder_layer = [&](const std::string& prefix) {
    add_ln(prefix + ".ln1");
    add_attn(prefix + ".attn");
    add_ln(prefix + ".ln2");
    add_linear(prefix + ".ffn.1", d, cfg_.ffn_dim);
    add_linear(prefix + ".ffn.2", cfg_.ffn_dim, d);
  };

  // Feature extractor: temporal conv blocks, projection, LayerNorm, and the
  // learned embedding that replaces masked feature frames.
  int in_ch = cfg_.frame_dim;
  for (std::size_t i = 0; i < cfg_.conv_strides.size(); ++i) {
    const std::int64_t win = static_cast<std::int64_t>(cfg_.conv_kernels[i]) * in_ch;
    add_linear("fe.conv" + std::to_string(i), win, cfg_.conv_channels);
    in_ch = cfg_.conv_channels;
  }
  add_linear("fe.proj", cfg_.conv_channels, d);
  add_ln("fe.ln");
  add_param("fe.mask_embedding", {d}, gaussian(1.0 / std::sqrt(d)));

  for (int i = 0; i < cfg_.n_speech_layers; ++i) add_encoder_layer("enc.speech." + std::to_string(i));
  if (cfg_.n_speech_layers > 0) add_ln("enc.speech.final_ln");
  for (int i = 0; i < cfg_.n_shared_layers; ++i) add_encoder_layer("enc.shared." + std::to_string(i));
  if (cfg_.n_shared_layers > 0) add_ln("enc.shared.final_ln");

  // One LayerNorm for every shared-encoder input, text or speech.
  add_ln("input_ln");

  for (int i = 0; i < cfg_.n_decoder_layers; ++i) {
    const std::string prefix = "dec." + std::to_string(i);
    add_ln(prefix + ".ln1");
    add_attn(prefix + ".self_attn");
    add_ln(prefix + ".ln2");
    add_attn(prefix + ".cross_attn");
    add_ln(prefix + ".ln3");
    add_linear(prefix + ".ffn.1", d, cfg_.ffn_dim);
    add_linear(prefix + ".ffn.2", cfg_.ffn_dim, d);
  }
  if (cfg_.n_decoder_layers > 0) add_ln("dec.final_ln");

  add_param("emb.phoneme", {cfg_.phoneme_vocab_size, d}, gaussian(1.0 / std::sqrt(d)));
  add_param("emb.token", {cfg_.token_vocab_size, d}, gaussian(1.0 / std::sqrt(d)));
  // Output projection starts small so untrained logits stay near uniform.
  add_param("out.w", {d, cfg_.token_vocab_size}, gaussian(0.5 / std::sqrt(d)));
  add_param("out.b", {cfg_.token_vocab_size}, zeros);

  // Fixed sinusoidal position table.
  {
    Arr pe(static_cast<std::int64_t>(cfg_.max_positions) * d);
    for (int pos = 0; pos < cfg_.max_positions; ++pos) {
      for (int i = 0; i < d; i += 2) {
        const double angle = pos / std::pow(10000.0, static_cast<double>(i) / d);
        pe[static_cast<std::int64_t>(pos) * d + i] = std::sin(angle);
        if (i + 1 < d) pe[static_cast<std::int64_t>(pos) * d + i + 1] = std::cos(angle);
      }
    }
    pos_table_ = Tensor::from_array({cfg_.max_positions, d}, std::move(pe), false);
  }
}

Tensor STPTModel::param(const std::string& name) const {
  for (const auto& [n, t] : params_) {
    if (n == name) return t;
  }
  throw std::out_of_range("model: unknown parameter '" + name + "'");
}

void STPTModel::zero_grads() {
  for (auto& [n, t] : params_) t.zero_grad();
}

void STPTModel::set_train_mode(bool on, std::uint64_t dropout_seed) {
  train_mode_ = on;
  dropout_rng_ = Rng(dropout_seed);
}

Tensor STPTModel::maybe_dropout(const Tensor& x) const {
  if (!train_mode_ || cfg_.dropout <= 0.0) return x;
  const double keep = 1.0 - cfg_.dropout;
  Arr mask(x.numel());
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    mask[i] = dropout_rng_.uniform() < keep ? 1.0 / keep : 0.0;
  }
  return mul(x, Tensor::from_array(x.shape(), std::move(mask), false));
}

Tensor STPTModel::positional_encoding(std::int64_t length) const {
  if (length > cfg_.max_positions) {
    throw std::invalid_argument("sequence length " + std::to_string(length) +
                                " exceeds max_positions " + std::to_string(cfg_.max_positions));
  }
  return slice_rows(pos_table_, 0, length);
}

Tensor STPTModel::add_positions(const Tensor& x) const {
  return add(x, positional_encoding(x.rows()));
}

Tensor STPTModel::ln(const std::string& prefix, const Tensor& x) const {
  return layer_norm(x, param(prefix + ".gain"), param(prefix + ".bias"), cfg_.ln_eps);
}

Tensor STPTModel::input_layer_norm(const Tensor& x) const { return ln("input_ln", x); }

Tensor STPTModel::feature_extract(const Tensor& frames) const {
  if (frames.rank() != 2 || frames.cols() != cfg_.frame_dim) {
    throw std::invalid_argument("feature_extract: expected [T," + std::to_string(cfg_.frame_dim) +
                                "] frames, got " + shape_str(frames.shape()));
  }
  cfg_.context_length(frames.rows());  // throws the receptive-field error early
  Tensor x = frames;
  for (std::size_t i = 0; i < cfg_.conv_strides.size(); ++i) {
    const std::string name = "fe.conv" + std::to_string(i);
    Tensor u = unfold_rows(x, cfg_.conv_kernels[i], cfg_.conv_strides[i]);
    x = gelu(add_rowwise(matmul(u, param(name + ".w")), param(name + ".b")));
  }
  x = add_rowwise(matmul(x, param("fe.proj.w")), param("fe.proj.b"));
  return ln("fe.ln", x);
}

Tensor STPTModel::attn_bias(std::int64_t rows, std::int64_t cols, bool causal,
                            std::span<const std::uint8_t> key_mask) const {
  bool any_masked = false;
  if (!key_mask.empty()) {
    if (static_cast<std::int64_t>(key_mask.size()) != cols) {
      throw std::invalid_argument("attention: key mask length mismatch");
    }
    for (auto m : key_mask) {
      if (!m) any_masked = true;
    }
  }
  if (!causal && !any_masked) return Tensor();
  Arr bias = Arr::Zero(rows * cols);
  for (std::int64_t i = 0; i < rows; ++i) {
    for (std::int64_t j = 0; j < cols; ++j) {
      const bool causal_blocked = causal && j > i;
      const bool key_blocked = !key_mask.empty() && !key_mask[static_cast<std::size_t>(j)];
      if (causal_blocked || key_blocked) bias[i * cols + j] = kMaskBias;
    }
  }
  return Tensor::from_array({rows, cols}, std::move(bias), false);
}

Tensor STPTModel::attention(const std::string& prefix, const Tensor& q_in, const Tensor& kv_in,
                            const Tensor& extra_bias) const {
  const int d = cfg_.model_dim;
  const int dh = d / cfg_.n_heads;
  Tensor Q = add_rowwise(matmul(q_in, param(prefix + ".q.w")), param(prefix + ".q.b"));
  Tensor K = add_rowwise(matmul(kv_in, param(prefix + ".k.w")), param(prefix + ".k.b"));
  Tensor V = add_rowwise(matmul(kv_in, param(prefix + ".v.w")), param(prefix + ".v.b"));
  std::vector<Tensor> heads;
  heads.reserve(cfg_.n_heads);
  for (int h = 0; h < cfg_.n_heads; ++h) {
    Tensor Qh = slice_cols(Q, h * dh, (h + 1) * dh);
    Tensor Kh = slice_cols(K, h * dh, (h + 1) * dh);
    Tensor Vh = slice_cols(V, h * dh, (h + 1) * dh);
    Tensor scores = scale(matmul(Qh, transpose(Kh)), 1.0 / std::sqrt(static_cast<double>(dh)));
    if (extra_bias.defined()) scores = add(scores, extra_bias);
    heads.push_back(matmul(softmax(scores), Vh));
  }
  Tensor ctx = concat_cols(heads);
  return add_rowwise(matmul(ctx, param(prefix + ".o.w")), param(prefix + ".o.b"));
}

Tensor STPTModel::ffn(const std::string& prefix, const Tensor& x) const {
  Tensor h = gelu(add_rowwise(matmul(x, param(prefix + ".1.w")), param(prefix + ".1.b")));
  return add_rowwise(matmul(h, param(prefix + ".2.w")), param(prefix + ".2.b"));
}

Tensor STPTModel::encoder_block(const std::string& prefix, const Tensor& x,
                                std::span<const std::uint8_t> key_mask) const {
  Tensor bias = attn_bias(x.rows(), x.rows(), false, key_mask);
  Tensor normed = ln(prefix + ".ln1", x);
  Tensor h = add(x, maybe_dropout(attention(prefix + ".attn", normed, normed, bias)));
  return add(h, maybe_dropout(ffn(prefix + ".ffn", ln(prefix + ".ln2", h))));
}

Tensor STPTModel::encode(StackKind stack, const Tensor& x,
                         std::span<const std::uint8_t> key_mask) const {
  if (x.rank() != 2 || x.cols() != cfg_.model_dim) {
    throw std::invalid_argument("encode: expected [L," + std::to_string(cfg_.model_dim) +
                                "], got " + shape_str(x.shape()));
  }
  if (x.rows() > cfg_.max_positions) {
    throw std::invalid_argument("encode: sequence length " + std::to_string(x.rows()) +
                                " exceeds max_positions " + std::to_string(cfg_.max_positions));
  }
  const int n_layers = stack == StackKind::Speech ? cfg_.n_speech_layers : cfg_.n_shared_layers;
  const std::string base = stack == StackKind::Speech ? "enc.speech." : "enc.shared.";
  if (n_layers == 0) return x;
  Tensor h = x;
  for (int i = 0; i < n_layers; ++i) h = encoder_block(base + std::to_string(i), h, key_mask);
  return ln(base + "final_ln", h);
}

Tensor STPTModel::decode(std::span<const int> targets_in, const Tensor& memory,
                         std::span<const std::uint8_t> memory_mask) const {
  if (targets_in.empty()) throw std::invalid_argument("decode: empty target sequence");
  if (targets_in[0] != kBosToken) {
    throw std::invalid_argument("decode: target sequence must begin with BOS");
  }
  const std::int64_t N = static_cast<std::int64_t>(targets_in.size());
  if (N > cfg_.max_positions) {
    throw std::invalid_argument("decode: sequence length exceeds max_positions");
  }
  Tensor x = scale(embedding(param("emb.token"), targets_in), std::sqrt(static_cast<double>(cfg_.model_dim)));
  x = add_positions(x);
  Tensor causal = attn_bias(N, N, true, {});
  Tensor mem_bias = attn_bias(N, memory.rows(), false, memory_mask);
  for (int i = 0; i < cfg_.n_decoder_layers; ++i) {
    const std::string prefix = "dec." + std::to_string(i);
    Tensor normed = ln(prefix + ".ln1", x);
    x = add(x, maybe_dropout(attention(prefix + ".self_attn", normed, normed, causal)));
    x = add(x, maybe_dropout(attention(prefix + ".cross_attn", ln(prefix + ".ln2", x), memory, mem_bias)));
    x = add(x, maybe_dropout(ffn(prefix + ".ffn", ln(prefix + ".ln3", x))));
  }
  if (cfg_.n_decoder_layers > 0) x = ln("dec.final_ln", x);
  return add_rowwise(matmul(x, param("out.w")), param("out.b"));
}

Tensor STPTModel::phoneme_logits(const Tensor& context) const {
  return matmul(context, transpose(param("emb.phoneme")));
}

Tensor STPTModel::speech_context(const Tensor& frames, const MaskedRows* corrupt) const {
  Tensor z = feature_extract(frames);
  if (corrupt && !corrupt->empty()) z = mask_rows(z, *corrupt, param("fe.mask_embedding"));
  Tensor o = encode(StackKind::Speech, add_positions(z));
  if (cfg_.variant == Variant::FSE) o = encode(StackKind::Shared, input_layer_norm(o));
  return o;
}

Tensor STPTModel::s2t_memory(const Tensor& frames, const MaskedRows* corrupt) const {
  Tensor z = feature_extract(frames);
  if (corrupt && !corrupt->empty()) z = mask_rows(z, *corrupt, param("fe.mask_embedding"));
  Tensor o = encode(StackKind::Speech, add_positions(z));
  return encode(StackKind::Shared, input_layer_norm(o));
}

Tensor STPTModel::t2t_memory(std::span<const int> phoneme_ids) const {
  Tensor e = scale(embedding(param("emb.phoneme"), phoneme_ids),
                   std::sqrt(static_cast<double>(cfg_.model_dim)));
  return encode(StackKind::Shared, input_layer_norm(add_positions(e)));
}

}  // namespace stpt::model
