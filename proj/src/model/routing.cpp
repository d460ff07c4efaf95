#include "stpt/model/routing.hpp"

#include <stdexcept>

namespace stpt::model {

RoutedBatch route_forward(STPTModel& m, const data::TaskBatch& batch) {
  RoutedBatch out;
  out.task = batch.task;
  const std::int64_t B = batch.size();
  if (B == 0) throw std::invalid_argument("route_forward: empty batch");

  switch (batch.task) {
    case Task::T2T:
      for (std::int64_t b = 0; b < B; ++b) {
        auto src = batch.source.sequence(b);
        auto tgt = batch.target.sequence(b);
        std::vector<int> dec_in{kBosToken};
        dec_in.insert(dec_in.end(), tgt.begin(), tgt.end());
        out.dec_logits.push_back(m.decode(dec_in, m.t2t_memory(src)));
      }
      return out;
    case Task::SSL:
    case Task::S2P:
      for (std::int64_t b = 0; b < B; ++b) {
        out.context.push_back(m.speech_context(batch.item_frames(b)));
      }
      return out;
    case Task::S2T:
      for (std::int64_t b = 0; b < B; ++b) {
        auto tgt = batch.target.sequence(b);
        std::vector<int> dec_in{kBosToken};
        dec_in.insert(dec_in.end(), tgt.begin(), tgt.end());
        out.dec_logits.push_back(m.decode(dec_in, m.s2t_memory(batch.item_frames(b))));
      }
      return out;
  }
  throw std::invalid_argument("route_forward: unknown task tag");
}

}  // namespace stpt::model
