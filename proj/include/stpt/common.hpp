#pragma once

#include <stdexcept>
#include <string>

namespace stpt {

enum class Task { T2T, SSL, S2P, S2T };

inline std::string task_name(Task t) {
  switch (t) {
    case Task::T2T: return "t2t";
    case Task::SSL: return "ssl";
    case Task::S2P: return "s2p";
    case Task::S2T: return "s2t";
  }
  return "?";
}

inline Task parse_task(const std::string& s) {
  if (s == "t2t") return Task::T2T;
  if (s == "ssl") return Task::SSL;
  if (s == "s2p") return Task::S2P;
  if (s == "s2t") return Task::S2T;
  throw std::invalid_argument("unknown task '" + s + "'");
}

constexpr int kNumTasks = 4;

// Fixed synthetic tokenizer conventions, shared by the model and the data
// pipeline.
constexpr int kPadToken = 0;
constexpr int kBosToken = 1;
constexpr int kEosToken = 2;

}  // namespace stpt
