#pragma once

// MDP models, labeled reward machines and their product.
//
// States, actions, machine nodes and propositions are 1-based throughout the
// public interface: node 1 is the initial node and the proposition of state 1
// is proposition 1.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rmi {

using StateId = int;
using ActionId = int;
using NodeId = int;
using PropId = int;

inline constexpr double kProbTol = 1e-9;

class MdpModel {
 public:
  MdpModel() = default;

  /// kernel is laid out as [(s-1) * n_actions + (a-1)] * n_states + (s'-1).
  MdpModel(int n_states, int n_actions, std::vector<double> kernel, std::vector<double> initial,
           double discount);

  int num_states() const { return n_states_; }
  int num_actions() const { return n_actions_; }
  double discount() const { return discount_; }
  const std::vector<double>& initial() const { return initial_; }

  double prob(StateId s, ActionId a, StateId next) const {
    return kernel_[row_offset(s, a) + static_cast<std::size_t>(next - 1)];
  }
  /// Distribution over next states, indexed 0..n_states-1.
  std::span<const double> row(StateId s, ActionId a) const {
    return {kernel_.data() + row_offset(s, a), static_cast<std::size_t>(n_states_)};
  }

  /// States reachable in one step from s under some action (sorted).
  const std::vector<StateId>& successors(StateId s) const {
    return successors_[static_cast<std::size_t>(s - 1)];
  }
  const std::vector<StateId>& initial_states() const { return initial_states_; }

  bool has_edge(StateId s, StateId next) const;
  /// Positive-probability start and positive-probability transitions.
  bool feasible(std::span<const StateId> tau) const;

 private:
  std::size_t row_offset(StateId s, ActionId a) const {
    return (static_cast<std::size_t>(s - 1) * static_cast<std::size_t>(n_actions_) +
            static_cast<std::size_t>(a - 1)) *
           static_cast<std::size_t>(n_states_);
  }

  int n_states_ = 0;
  int n_actions_ = 0;
  std::vector<double> kernel_;
  std::vector<double> initial_;
  double discount_ = 0.0;
  std::vector<std::vector<StateId>> successors_;
  std::vector<StateId> initial_states_;
};

/// A reward machine model paired with a labeling function: (delta_u, L).
/// This is also what the learner produces, so it carries no rewards.
struct LabeledMachineModel {
  int num_nodes = 0;
  int num_props = 0;
  std::vector<NodeId> delta_u;  // [(u-1) * num_props + (p-1)]
  std::vector<PropId> labeling;  // [s-1]

  int num_states() const { return static_cast<int>(labeling.size()); }
  NodeId next(NodeId u, PropId p) const {
    return delta_u[static_cast<std::size_t>((u - 1) * num_props + (p - 1))];
  }
  NodeId& next(NodeId u, PropId p) {
    return delta_u[static_cast<std::size_t>((u - 1) * num_props + (p - 1))];
  }
  PropId label(StateId s) const { return labeling[static_cast<std::size_t>(s - 1)]; }
  /// One machine step on entering state s.
  NodeId step(NodeId u, StateId s) const { return next(u, label(s)); }

  bool operator==(const LabeledMachineModel&) const = default;

  /// Checks totality, ranges and the anchoring convention (label(1) == 1).
  void validate() const;
};

struct LabeledRewardMachine {
  LabeledMachineModel model;
  std::optional<std::vector<double>> delta_r;  // [(u-1) * num_props + (p-1)]
  std::vector<std::string> prop_names;

  int num_nodes() const { return model.num_nodes; }
  int num_props() const { return model.num_props; }
  double reward(NodeId u, PropId p) const;
};

/// Node reached from node 1 after consuming the labels of tau.
NodeId rm_run(const LabeledMachineModel& m, std::span<const StateId> tau);
inline NodeId rm_run(const LabeledRewardMachine& rm, std::span<const StateId> tau) {
  return rm_run(rm.model, tau);
}
/// Continues a run from an arbitrary node.
NodeId rm_run_from(const LabeledMachineModel& m, NodeId u, std::span<const StateId> tau);

class ProductMdp {
 public:
  ProductMdp(MdpModel mdp, LabeledRewardMachine machine);

  const MdpModel& mdp() const { return mdp_; }
  const LabeledRewardMachine& machine() const { return machine_; }

  /// Accessible (state, node) pairs in BFS discovery order.
  const std::vector<std::pair<StateId, NodeId>>& accessible() const { return accessible_; }
  bool is_accessible(StateId s, NodeId u) const { return index_of(s, u) >= 0; }
  /// Dense index into accessible(), or -1.
  int index_of(StateId s, NodeId u) const {
    return index_[static_cast<std::size_t>((s - 1) * machine_.num_nodes() + (u - 1))];
  }

  /// r'(s,u,a,s',u') = delta_r(u, L(s')).
  double reward(StateId /*s*/, NodeId u, ActionId /*a*/, StateId next, NodeId /*next_u*/) const {
    return machine_.reward(u, machine_.model.label(next));
  }

 private:
  MdpModel mdp_;
  LabeledRewardMachine machine_;
  std::vector<std::pair<StateId, NodeId>> accessible_;
  std::vector<int> index_;
};

struct GridConfig {
  std::vector<std::string> layout;   // one character per cell
  double slip_prob = 0.1;
  double gamma = 0.95;
  double lambda = 0.1;
  std::vector<StateId> initial_cells;  // 1-based, row-major

  int rows() const { return static_cast<int>(layout.size()); }
  int cols() const { return layout.empty() ? 0 : static_cast<int>(layout.front().size()); }
  StateId cell(int row, int col) const { return row * cols() + col + 1; }
};

enum class GridAction : int { north = 1, east = 2, south = 3, west = 4 };

/// One state per cell; four cardinal actions; lateral slips; clamped at the
/// boundary.
MdpModel build_grid_mdp(const GridConfig& config);

/// Edge of a machine description, `u --p/r--> v`. An empty prop means "every
/// proposition not listed explicitly for this source node".
struct MachineEdge {
  NodeId from = 0;
  std::string prop;
  double reward = 0.0;
  NodeId to = 0;
  int line = 0;
};

struct MachineDescription {
  int num_nodes = 0;
  std::vector<MachineEdge> edges;
  /// Proposition name per state (index s-1).
  std::vector<std::string> state_labels;
};

/// Re-indexes propositions by first appearance over states 1..n, so the
/// label of state 1 is always proposition 1.
LabeledRewardMachine build_ground_truth_rm(const MachineDescription& desc);

}  // namespace rmi
