#pragma once

#include "planlab/env_core.hpp"

namespace planlab {

// Chain of `length` decision states chain0 .. chain{length-1}. `advance` moves
// one link forward and completes the task from the last link; `noop` drops the
// agent into an absorbing dead end. The post-completion state chain{length}
// only admits `noop`, which keeps it in place.
class ChainMdp final : public TaskMdp {
 public:
  static constexpr ActionId kAdvance = make_action(0);
  static constexpr ActionId kNoop = make_action(1);

  explicit ChainMdp(int length, int horizon = 0);

  static StateKey link(int i);
  static StateKey stuck();

  StateKey initial_state() const override { return link(0); }
  int horizon() const override { return horizon_; }
  std::vector<ActionId> valid_actions(const StateKey& s) const override;
  StateKey transition(const StateKey& s, ActionId a) const override;
  bool completion(const StateKey& s, ActionId a) const override;
  std::string action_name(ActionId a) const override;
  std::size_t num_actions() const override { return 2; }

  int length() const { return length_; }

 private:
  int position(const StateKey& s) const;  // -1 for stuck

  int length_;
  int horizon_;
};

// start -> {left, right} -> finish. Two optimal trajectories of equal length.
class TwoPathMdp final : public TaskMdp {
 public:
  static constexpr ActionId kLeft = make_action(0);
  static constexpr ActionId kRight = make_action(1);
  static constexpr ActionId kFinish = make_action(2);

  StateKey initial_state() const override { return StateKey("start"); }
  int horizon() const override { return 4; }
  std::vector<ActionId> valid_actions(const StateKey& s) const override;
  StateKey transition(const StateKey& s, ActionId a) const override;
  bool completion(const StateKey& s, ActionId a) const override;
  std::string action_name(ActionId a) const override;
  std::size_t num_actions() const override { return 3; }
};

}  // namespace planlab
