#include "planlab/fixtures.hpp"

namespace planlab {

ChainMdp::ChainMdp(int length, int horizon) : length_(length), horizon_(horizon > 0 ? horizon : length) {
  if (length < 1) throw UsageError("chain length must be >= 1");
}

StateKey ChainMdp::link(int i) { return StateKey("chain" + std::to_string(i)); }

StateKey ChainMdp::stuck() { return StateKey("stuck"); }

int ChainMdp::position(const StateKey& s) const {
  if (s == stuck()) return -1;
  const auto& b = s.bytes();
  if (b.rfind("chain", 0) != 0) throw UsageError("not a chain state: " + b);
  const int i = std::stoi(b.substr(5));
  if (i < 0 || i > length_) throw UsageError("chain link out of range: " + b);
  return i;
}

std::vector<ActionId> ChainMdp::valid_actions(const StateKey& s) const {
  const int i = position(s);
  if (i < 0 || i == length_) return {kNoop};
  return {kAdvance, kNoop};
}

StateKey ChainMdp::transition(const StateKey& s, ActionId a) const {
  const int i = position(s);
  if (i < 0) return stuck();
  if (i == length_) return s;
  return a == kAdvance ? link(i + 1) : stuck();
}

bool ChainMdp::completion(const StateKey& s, ActionId a) const {
  return a == kAdvance && position(s) == length_ - 1;
}

std::string ChainMdp::action_name(ActionId a) const {
  return a == kAdvance ? "advance" : "noop";
}

std::vector<ActionId> TwoPathMdp::valid_actions(const StateKey& s) const {
  if (s.bytes() == "start") return {kLeft, kRight};
  return {kFinish};
}

StateKey TwoPathMdp::transition(const StateKey& s, ActionId a) const {
  if (s.bytes() == "start") return StateKey(a == kLeft ? "left" : "right");
  return StateKey("done");
}

bool TwoPathMdp::completion(const StateKey& s, ActionId a) const {
  return a == kFinish && (s.bytes() == "left" || s.bytes() == "right");
}

std::string TwoPathMdp::action_name(ActionId a) const {
  switch (index_of(a)) {
    case 0: return "left";
    case 1: return "right";
    default: return "finish";
  }
}

}  // namespace planlab
