#pragma once

#include <vector>

#include "stpt/data/batch.hpp"
#include "stpt/model/net.hpp"

namespace stpt::model {

// Per-item task outputs of one routed batch: context matrices for the
// encoder-only subtasks, decoder logits for the sequence subtasks.
struct RoutedBatch {
  Task task = Task::T2T;
  std::vector<Tensor> context;     // SSL / S2P: [L_i, d]
  std::vector<Tensor> dec_logits;  // T2T / S2T: [N_i + 1, V]
};

// Applies the data-flow wiring of the batch's subtask to every item:
//   t2t  phoneme embeddings -> input LayerNorm -> shared encoder -> decoder
//   ssl  speech -> feature extractor -> speech encoder
//        [fully shared wiring only: -> input LayerNorm -> shared encoder]
//   s2p  as ssl
//   s2t  speech -> feature extractor -> speech encoder -> input LayerNorm
//        -> shared encoder -> decoder
// Inputs are taken uncorrupted; the loss layer owns masking.
RoutedBatch route_forward(STPTModel& m, const data::TaskBatch& batch);

}  // namespace stpt::model
