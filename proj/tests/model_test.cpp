#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "stpt/data/corpus.hpp"
#include "stpt/model/checkpoint.hpp"
#include "stpt/model/config.hpp"
#include "stpt/model/net.hpp"
#include "stpt/model/routing.hpp"
#include "stpt/num/rng.hpp"

using namespace stpt;
using namespace stpt::model;

namespace {

Tensor random_frames(std::int64_t t, int f, Rng& rng) {
  Arr v(t * f);
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.gauss();
  return Tensor::from_array({t, f}, std::move(v), false);
}

}  // namespace

TEST_CASE("conv downsampling follows the closed-form length formula") {
  auto paper = ModelConfig::paper_scale();
  CHECK(paper.context_length(16000) == 49);

  auto desk = ModelConfig::desk_scale();
  CHECK(desk.context_length(8) == 2);
  CHECK(desk.downsample_factor() == 4);
  CHECK(desk.min_input_length() == 4);

  // random lengths vs an independent per-layer fold
  Rng rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    const std::int64_t t = 4000 + rng.uniform_int(20000);
    std::int64_t expect = t;
    for (std::size_t i = 0; i < paper.conv_strides.size(); ++i) {
      expect = (expect - paper.conv_kernels[i]) / paper.conv_strides[i] + 1;
    }
    CHECK(paper.context_length(t) == expect);
  }

  CHECK_THROWS_WITH_AS(desk.context_length(3), doctest::Contains("receptive field"),
                       std::invalid_argument);
}

TEST_CASE("full-size preset pins the reference dimensions") {
  auto p = ModelConfig::paper_scale();
  CHECK(p.conv_channels == 512);
  CHECK(p.conv_strides == std::vector<int>{5, 2, 2, 2, 2, 2, 2});
  CHECK(p.conv_kernels == std::vector<int>{10, 3, 3, 3, 3, 2, 2});
  CHECK(p.n_speech_layers == 6);
  CHECK(p.n_shared_layers == 6);
  CHECK(p.n_decoder_layers == 6);
  CHECK(p.model_dim == 768);
  CHECK(p.ffn_dim == 3072);
  CHECK(p.n_heads == 8);
  CHECK(p.phoneme_vocab_size == 134);
  CHECK_NOTHROW(p.validate());
}

TEST_CASE("dropout is seeded, train-only and off by default") {
  auto cfg = ModelConfig::micro();
  cfg.dropout = 0.5;
  STPTModel m(cfg, 7);
  Rng rng(1);
  auto x = random_frames(5, cfg.model_dim, rng);

  auto eval_out = m.encode(StackKind::Speech, x);
  m.set_train_mode(true, 99);
  auto train_a = m.encode(StackKind::Speech, x);
  m.set_train_mode(true, 99);
  auto train_b = m.encode(StackKind::Speech, x);
  m.set_train_mode(false);
  auto eval_again = m.encode(StackKind::Speech, x);

  CHECK((train_a.array() == train_b.array()).all());   // same seed, same mask
  CHECK(!(train_a.array() == eval_out.array()).all()); // dropout actually fired
  CHECK((eval_again.array() == eval_out.array()).all());
}

TEST_CASE("feature extractor output shape and short-input error") {
  auto cfg = ModelConfig::desk_scale();
  STPTModel m(cfg, 7);
  Rng rng(1);
  auto frames = random_frames(12, cfg.frame_dim, rng);
  auto z = m.feature_extract(frames);
  CHECK(z.rows() == cfg.context_length(12));
  CHECK(z.cols() == cfg.model_dim);
  CHECK_THROWS_AS(m.feature_extract(random_frames(2, cfg.frame_dim, rng)), std::invalid_argument);
}

TEST_CASE("zero-layer encoder stack is the identity") {
  auto cfg = ModelConfig::micro();
  cfg.n_speech_layers = 0;
  STPTModel m(cfg, 3);
  Rng rng(2);
  auto x = random_frames(5, cfg.model_dim, rng);
  auto y = m.encode(StackKind::Speech, x);
  CHECK(y.node_id() == x.node_id());
}

TEST_CASE("padding mask semantics") {
  auto cfg = ModelConfig::micro();
  STPTModel m(cfg, 11);
  Rng rng(5);
  const std::int64_t real = 6, pad = 3;
  auto x_real = random_frames(real, cfg.model_dim, rng);

  // padded copy with garbage in the pad rows
  Arr padded(static_cast<std::int64_t>(real + pad) * cfg.model_dim);
  padded.setZero();
  padded.segment(0, real * cfg.model_dim) = x_real.array();
  for (Eigen::Index i = real * cfg.model_dim; i < padded.size(); ++i) padded[i] = rng.gauss(0, 5);
  auto x_pad = Tensor::from_array({real + pad, cfg.model_dim}, padded, false);

  std::vector<std::uint8_t> mask(real + pad, 1);
  for (std::int64_t i = real; i < real + pad; ++i) mask[static_cast<std::size_t>(i)] = 0;

  auto y_real = m.encode(StackKind::Speech, x_real);
  auto y_pad = m.encode(StackKind::Speech, x_pad, mask);
  for (std::int64_t r = 0; r < real; ++r) {
    for (int c = 0; c < cfg.model_dim; ++c) {
      CHECK(std::abs(y_real.at(r, c) - y_pad.at(r, c)) < 1e-10);
    }
  }

  // permuting two padding rows leaves real positions unchanged
  Arr swapped = padded;
  swapped.segment(real * cfg.model_dim, cfg.model_dim)
      .swap(swapped.segment((real + 1) * cfg.model_dim, cfg.model_dim));
  auto x_swap = Tensor::from_array({real + pad, cfg.model_dim}, swapped, false);
  auto y_swap = m.encode(StackKind::Speech, x_swap, mask);
  for (std::int64_t r = 0; r < real; ++r) {
    for (int c = 0; c < cfg.model_dim; ++c) {
      CHECK(y_swap.at(r, c) == y_pad.at(r, c));
    }
  }
}

TEST_CASE("encoder rejects over-length input") {
  auto cfg = ModelConfig::micro();
  STPTModel m(cfg, 1);
  Rng rng(1);
  CHECK_THROWS_WITH_AS(m.encode(StackKind::Shared, random_frames(cfg.max_positions + 1, cfg.model_dim, rng)),
                       doctest::Contains("max_positions"), std::invalid_argument);
}

TEST_CASE("decoder causality via perturbation sweep") {
  auto cfg = ModelConfig::micro();
  STPTModel m(cfg, 17);
  Rng rng(8);
  auto memory = random_frames(4, cfg.model_dim, rng);

  std::vector<int> tokens{kBosToken, 4, 5, 6, 3, 7};
  auto base = m.decode(tokens, memory);
  const std::int64_t V = cfg.token_vocab_size;
  for (std::size_t j = 1; j < tokens.size(); ++j) {
    auto perturbed = tokens;
    perturbed[j] = perturbed[j] == 4 ? 5 : 4;
    auto out = m.decode(perturbed, memory);
    for (std::size_t r = 0; r < tokens.size(); ++r) {
      double diff = 0.0;
      for (std::int64_t c = 0; c < V; ++c) {
        diff = std::max(diff, std::abs(out.at(static_cast<std::int64_t>(r), c) -
                                       base.at(static_cast<std::int64_t>(r), c)));
      }
      if (r < j) {
        CHECK(diff == 0.0);  // earlier positions must not see the change
      }
      if (r == j) CHECK(diff > 0.0);
    }
  }
}

TEST_CASE("decoder contract checks and smoke case") {
  auto cfg = ModelConfig::micro();
  STPTModel m(cfg, 23);
  auto zero_memory = Tensor::zeros({3, static_cast<std::int64_t>(cfg.model_dim)});
  std::vector<int> tokens{kBosToken, 4};
  auto logits = m.decode(tokens, zero_memory);
  CHECK(logits.rows() == 2);
  CHECK(logits.cols() == cfg.token_vocab_size);
  CHECK(logits.array().isFinite().all());
  auto logits2 = m.decode(tokens, zero_memory);
  CHECK((logits.array() == logits2.array()).all());

  CHECK_THROWS_AS(m.decode(std::vector<int>{}, zero_memory), std::invalid_argument);
  CHECK_THROWS_WITH_AS(m.decode(std::vector<int>{4, 5}, zero_memory), doctest::Contains("BOS"),
                       std::invalid_argument);
}

TEST_CASE("phoneme scores are context times embedding transpose") {
  ModelConfig cfg = ModelConfig::micro();
  STPTModel m(cfg, 9);
  const int d = cfg.model_dim;

  // orthonormal-ish table: basis rows
  auto table = m.phoneme_embedding_table();
  auto& tv = table.mutable_array();
  tv.setZero();
  for (int i = 0; i < std::min(cfg.phoneme_vocab_size, d); ++i) tv[i * d + i] = 1.0;

  Arr ctx = Arr::Zero(d);
  ctx[3] = 1.0;  // equals e_3
  auto scores = m.phoneme_logits(Tensor::from_array({1, d}, ctx, false));
  std::int64_t argmax = 0;
  for (std::int64_t i = 1; i < scores.cols(); ++i) {
    if (scores.at(0, i) > scores.at(0, argmax)) argmax = i;
  }
  CHECK(argmax == 3);

  // zero context row: uniform distribution after softmax
  auto zero_scores = m.phoneme_logits(Tensor::zeros({1, d}));
  auto probs = softmax(zero_scores);
  for (std::int64_t i = 0; i < probs.cols(); ++i) {
    CHECK(probs.at(0, i) == doctest::Approx(1.0 / cfg.phoneme_vocab_size).epsilon(1e-12));
  }

  // two-phoneme analytic case
  auto a = Tensor::from_values({1, 2}, {1.0, 0.0});
  auto E = Tensor::from_values({2, 2}, {1.0, 0.0, 0.0, 1.0});
  auto s = matmul(a, transpose(E));
  CHECK(s.at(0, 0) == 1.0);
  CHECK(s.at(0, 1) == 0.0);
  auto p = softmax(s);
  const double e = std::exp(1.0);
  CHECK(p.at(0, 0) == doctest::Approx(e / (1 + e)).epsilon(1e-12));
  CHECK(p.at(0, 1) == doctest::Approx(1 / (1 + e)).epsilon(1e-12));
}

TEST_CASE("wiring isolation between variants") {
  Rng rng(31);
  for (auto variant : {Variant::PSE, Variant::FSE}) {
    auto cfg = ModelConfig::micro();
    cfg.variant = variant;
    STPTModel m(cfg, 41);
    auto frames = random_frames(8, cfg.frame_dim, rng);
    MaskedRows corrupt{1, 2};
    auto context = m.speech_context(frames, &corrupt);
    auto loss = mean(mul(context, context));
    backward(loss);

    double shared_norm = 0.0;
    bool shared_touched = false;
    double speech_norm = 0.0;
    for (const auto& [name, p] : m.parameters()) {
      if (name.rfind("enc.shared.", 0) == 0) {
        if (p.has_grad()) {
          shared_touched = true;
          shared_norm += p.grad_array().square().sum();
        }
      }
      if (name.rfind("enc.speech.", 0) == 0 && p.has_grad()) {
        speech_norm += p.grad_array().square().sum();
      }
    }
    CHECK(speech_norm > 0.0);
    if (variant == Variant::PSE) {
      CHECK(!shared_touched);  // structurally disconnected, so exactly zero
    } else {
      CHECK(shared_touched);
      CHECK(shared_norm > 0.0);
    }
    m.zero_grads();
  }
}

TEST_CASE("one phoneme table and one input LayerNorm serve all paths") {
  auto cfg = ModelConfig::micro();
  STPTModel m(cfg, 51);
  Rng rng(3);

  // text path
  std::vector<int> phonemes{3, 4, 5};
  auto mem = m.t2t_memory(phonemes);
  backward(mean(mul(mem, mem)));
  CHECK(m.phoneme_embedding_table().has_grad());
  CHECK(m.param("input_ln.gain").has_grad());
  m.zero_grads();

  // speech context path: the same table receives gradient through the scores
  auto frames = random_frames(8, cfg.frame_dim, rng);
  auto scores = m.phoneme_logits(m.speech_context(frames));
  backward(mean(mul(scores, scores)));
  CHECK(m.phoneme_embedding_table().has_grad());
  m.zero_grads();

  // speech-to-text memory uses the same LayerNorm instance
  auto smem = m.s2t_memory(frames);
  backward(mean(mul(smem, smem)));
  CHECK(m.param("input_ln.gain").has_grad());
  CHECK(m.param("input_ln.gain").node_id() == m.param("input_ln.gain").node_id());
  m.zero_grads();
}

TEST_CASE("batch routing follows the task wiring") {
  namespace fs = std::filesystem;
  const auto dir = (fs::temp_directory_path() / "stpt_model_routing").string();
  fs::remove_all(dir);
  data::CorpusConfig cc;
  cc.n_unlabeled = 6;
  cc.n_supervised = 6;
  cc.n_text = 6;
  cc.n_dev = 2;
  cc.n_test = 2;
  cc.n_words = 8;
  cc.n_base_phonemes = 6;
  cc.frame_dim = 3;
  cc.utterance.downsample_factor = 2;  // micro conv stack
  data::gen_corpus(cc, 3, dir);

  data::CorpusPaths paths{dir};
  auto inv = data::PhonemeInventory::load(paths.inventory());
  data::FrameStore store(paths.frames_bin(), paths.frames_index());
  data::TokenVocab vocab;
  auto unlabeled = data::Manifest::load(paths.manifest("unlabeled"));
  auto supervised = data::Manifest::load(paths.manifest("supervised"));
  auto text = data::Manifest::load(paths.manifest("text"));

  auto cfg = ModelConfig::micro();
  cfg.phoneme_vocab_size = inv.size();
  cfg.token_vocab_size = vocab.size();
  data::BatchOptions bopt;

  auto grad_norm_for = [](STPTModel& m, const char* prefix) {
    double norm = 0.0;
    bool touched = false;
    for (const auto& [name, p] : m.parameters()) {
      if (name.rfind(prefix, 0) == 0 && p.has_grad()) {
        touched = true;
        norm += p.grad_array().square().sum();
      }
    }
    return std::make_pair(touched, norm);
  };

  SUBCASE("speech-only route reaches the shared stack only under full sharing") {
    auto ssl = data::build_batch(Task::SSL, unlabeled, 2, &store, inv, vocab, cfg, bopt, 1);
    for (auto variant : {Variant::PSE, Variant::FSE}) {
      auto vcfg = cfg;
      vcfg.variant = variant;
      STPTModel m(vcfg, 5);
      auto routed = route_forward(m, ssl);
      REQUIRE(routed.context.size() == 2);
      Tensor acc = mean(mul(routed.context[0], routed.context[0]));
      backward(acc);
      auto [touched, norm] = grad_norm_for(m, "enc.shared.");
      if (variant == Variant::PSE) {
        CHECK(!touched);
      } else {
        CHECK(touched);
        CHECK(norm > 0.0);
      }
      m.zero_grads();
    }
  }

  SUBCASE("both sequence routes pass through the single input LayerNorm") {
    STPTModel m(cfg, 5);
    auto t2t = data::build_batch(Task::T2T, text, 2, nullptr, inv, vocab, cfg, bopt, 2);
    auto routed_t2t = route_forward(m, t2t);
    REQUIRE(routed_t2t.dec_logits.size() == 2);
    backward(mean(mul(routed_t2t.dec_logits[0], routed_t2t.dec_logits[0])));
    CHECK(m.param("input_ln.gain").has_grad());
    m.zero_grads();

    auto s2t = data::build_batch(Task::S2T, supervised, 2, &store, inv, vocab, cfg, bopt, 3);
    auto routed_s2t = route_forward(m, s2t);
    REQUIRE(routed_s2t.dec_logits.size() == 2);
    CHECK(routed_s2t.dec_logits[0].cols() == cfg.token_vocab_size);
    backward(mean(mul(routed_s2t.dec_logits[0], routed_s2t.dec_logits[0])));
    CHECK(m.param("input_ln.gain").has_grad());
    m.zero_grads();
  }

  fs::remove_all(dir);
}

TEST_CASE("checkpoint round-trip is bit exact") {
  auto cfg = ModelConfig::micro();
  STPTModel m(cfg, 77);
  AdamOptimizer opt(m.parameters(), {});

  // take one step so optimizer state is non-trivial
  Rng rng(6);
  auto frames = random_frames(8, cfg.frame_dim, rng);
  backward(mean(mul(m.speech_context(frames), m.speech_context(frames))));
  opt.step();

  auto path = std::filesystem::temp_directory_path() / "stpt_ckpt_test.bin";
  auto ck = Checkpoint::capture(m, &opt, {{"model.seed", "77"}}, 42);
  ck.save(path.string());
  auto loaded = Checkpoint::load(path.string());
  CHECK(loaded.update_counter == 42);
  CHECK(loaded.config.at("model.seed") == "77");

  STPTModel m2(cfg, 1234);
  AdamOptimizer opt2(m2.parameters(), {});
  loaded.restore(m2, &opt2);
  for (std::size_t i = 0; i < m.parameters().size(); ++i) {
    const auto& a = m.parameters()[i].second.array();
    const auto& b = m2.parameters()[i].second.array();
    CHECK((a == b).all());
  }
  for (const auto& [name, st] : opt.states()) {
    const auto& st2 = opt2.states().at(name);
    CHECK(st2.t == st.t);
    CHECK((st2.m == st.m).all());
    CHECK((st2.v == st.v).all());
  }
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint reader rejects unknown versions") {
  auto path = std::filesystem::temp_directory_path() / "stpt_ckpt_badver.bin";
  {
    std::FILE* f = std::fopen(path.string().c_str(), "wb");
    const unsigned char bad[] = {9, 0, 0, 0, 0, 0, 0, 0, 0};
    std::fwrite(bad, 1, sizeof(bad), f);
    std::fclose(f);
  }
  CHECK_THROWS_WITH_AS(Checkpoint::load(path.string()), doctest::Contains("version"),
                       std::runtime_error);
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint averaging") {
  auto cfg = ModelConfig::micro();
  STPTModel m(cfg, 13);
  auto base = Checkpoint::capture(m, nullptr, {{"k", "v"}}, 0);

  SUBCASE("identical inputs give the identity") {
    auto avg = average_checkpoints({base, base, base});
    for (const auto& [name, rec] : base.records) {
      CHECK((avg.find(name)->second == rec.second).all());
    }
  }

  SUBCASE("midpoint of 0 and 2 is 1") {
    auto zero = base, two = base;
    for (auto& [n, rec] : zero.records) rec.second.setZero();
    for (auto& [n, rec] : two.records) rec.second.setConstant(2.0);
    auto avg = average_checkpoints({zero, two});
    for (const auto& [n, rec] : avg.records) CHECK((rec.second == 1.0).all());
  }

  SUBCASE("input order does not matter") {
    STPTModel m2(cfg, 14);
    auto other = Checkpoint::capture(m2, nullptr, {{"k", "v"}}, 0);
    auto ab = average_checkpoints({base, other});
    auto ba = average_checkpoints({other, base});
    for (const auto& [n, rec] : ab.records) {
      CHECK((ba.find(n)->second == rec.second).all());
    }
  }

  SUBCASE("config mismatch is a contract error") {
    auto other = base;
    other.config["k"] = "w";
    CHECK_THROWS_AS(average_checkpoints({base, other}), std::invalid_argument);
  }
}
