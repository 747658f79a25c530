#include "rmi/env.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <set>

#include <fmt/format.h>

#include "rmi/errors.hpp"

namespace rmi {

MdpModel::MdpModel(int n_states, int n_actions, std::vector<double> kernel,
                   std::vector<double> initial, double discount)
    : n_states_(n_states),
      n_actions_(n_actions),
      kernel_(std::move(kernel)),
      initial_(std::move(initial)),
      discount_(discount) {
  if (n_states <= 0 || n_actions <= 0) throw InvalidArgument("MDP needs at least one state and action");
  const auto ns = static_cast<std::size_t>(n_states);
  const auto na = static_cast<std::size_t>(n_actions);
  if (kernel_.size() != ns * na * ns)
    throw InvalidArgument(fmt::format("kernel has {} entries, expected {}", kernel_.size(), ns * na * ns));
  if (initial_.size() != ns) throw InvalidArgument("initial distribution has wrong length");
  if (!(discount >= 0.0 && discount < 1.0)) throw InvalidArgument("discount must lie in [0, 1)");

  for (StateId s = 1; s <= n_states; ++s) {
    for (ActionId a = 1; a <= n_actions; ++a) {
      double total = 0.0;
      for (double p : row(s, a)) {
        if (p < 0.0) throw InvalidArgument(fmt::format("negative probability in row ({}, {})", s, a));
        total += p;
      }
      if (std::abs(total - 1.0) > kProbTol)
        throw InvalidArgument(fmt::format("kernel row ({}, {}) sums to {}", s, a, total));
    }
  }
  double mass = 0.0;
  for (double p : initial_) {
    if (p < 0.0) throw InvalidArgument("negative initial probability");
    mass += p;
  }
  if (std::abs(mass - 1.0) > kProbTol) throw InvalidArgument("initial distribution does not sum to 1");

  successors_.resize(ns);
  for (StateId s = 1; s <= n_states; ++s) {
    auto& succ = successors_[static_cast<std::size_t>(s - 1)];
    for (StateId t = 1; t <= n_states; ++t) {
      for (ActionId a = 1; a <= n_actions; ++a) {
        if (prob(s, a, t) > 0.0) {
          succ.push_back(t);
          break;
        }
      }
    }
  }
  for (StateId s = 1; s <= n_states; ++s)
    if (initial_[static_cast<std::size_t>(s - 1)] > 0.0) initial_states_.push_back(s);
}

bool MdpModel::has_edge(StateId s, StateId next) const {
  const auto& succ = successors(s);
  return std::binary_search(succ.begin(), succ.end(), next);
}

bool MdpModel::feasible(std::span<const StateId> tau) const {
  if (tau.empty()) return true;
  for (StateId s : tau)
    if (s < 1 || s > n_states_) return false;
  if (initial_[static_cast<std::size_t>(tau.front() - 1)] <= 0.0) return false;
  for (std::size_t i = 1; i < tau.size(); ++i)
    if (!has_edge(tau[i - 1], tau[i])) return false;
  return true;
}

void LabeledMachineModel::validate() const {
  if (num_nodes < 1 || num_props < 1) throw InvalidArgument("machine needs nodes and propositions");
  if (delta_u.size() != static_cast<std::size_t>(num_nodes * num_props))
    throw InvalidArgument("transition function is not total");
  for (NodeId v : delta_u)
    if (v < 1 || v > num_nodes) throw InvalidArgument("transition target out of range");
  if (labeling.empty()) throw InvalidArgument("labeling function is empty");
  for (PropId p : labeling)
    if (p < 1 || p > num_props) throw InvalidArgument("label out of range");
  if (labeling.front() != 1) throw InvalidArgument("anchoring violated: label of state 1 must be 1");
}

double LabeledRewardMachine::reward(NodeId u, PropId p) const {
  if (!delta_r) throw InvalidArgument("reward machine has no output function");
  return (*delta_r)[static_cast<std::size_t>((u - 1) * model.num_props + (p - 1))];
}

NodeId rm_run_from(const LabeledMachineModel& m, NodeId u, std::span<const StateId> tau) {
  for (StateId s : tau) {
    if (s < 1 || s > m.num_states())
      throw InvalidArgument(fmt::format("state {} out of range 1..{}", s, m.num_states()));
    u = m.step(u, s);
  }
  return u;
}

NodeId rm_run(const LabeledMachineModel& m, std::span<const StateId> tau) {
  return rm_run_from(m, 1, tau);
}

ProductMdp::ProductMdp(MdpModel mdp, LabeledRewardMachine machine)
    : mdp_(std::move(mdp)), machine_(std::move(machine)) {
  if (!machine_.delta_r) throw InvalidArgument("product construction requires an output function");
  if (machine_.model.num_states() != mdp_.num_states())
    throw InvalidArgument("labeling is not defined on every MDP state");
  machine_.model.validate();

  const int n_nodes = machine_.num_nodes();
  index_.assign(static_cast<std::size_t>(mdp_.num_states() * n_nodes), -1);
  std::deque<std::pair<StateId, NodeId>> queue;
  auto visit = [&](StateId s, NodeId u) {
    auto& slot = index_[static_cast<std::size_t>((s - 1) * n_nodes + (u - 1))];
    if (slot >= 0) return;
    slot = static_cast<int>(accessible_.size());
    accessible_.emplace_back(s, u);
    queue.emplace_back(s, u);
  };
  for (StateId s0 : mdp_.initial_states()) visit(s0, machine_.model.step(1, s0));
  while (!queue.empty()) {
    const auto [s, u] = queue.front();
    queue.pop_front();
    for (StateId t : mdp_.successors(s)) visit(t, machine_.model.step(u, t));
  }
}

MdpModel build_grid_mdp(const GridConfig& config) {
  if (config.layout.empty() || config.layout.front().empty()) throw InvalidArgument("grid layout is empty");
  const int rows = config.rows();
  const int cols = config.cols();
  for (const auto& line : config.layout)
    if (static_cast<int>(line.size()) != cols) throw InvalidArgument("grid layout is not rectangular");
  if (!(config.slip_prob >= 0.0 && config.slip_prob < 1.0)) throw InvalidArgument("slip probability must lie in [0, 1)");
  if (config.initial_cells.empty()) throw InvalidArgument("no initial cells");

  const int n = rows * cols;
  constexpr int n_actions = 4;
  // north, east, south, west
  constexpr int dr[4] = {-1, 0, 1, 0};
  constexpr int dc[4] = {0, 1, 0, -1};

  std::vector<double> kernel(static_cast<std::size_t>(n * n_actions * n), 0.0);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const StateId s = config.cell(r, c);
      auto target = [&](int dir) {
        const int rr = r + dr[dir];
        const int cc = c + dc[dir];
        if (rr < 0 || rr >= rows || cc < 0 || cc >= cols) return s;
        return config.cell(rr, cc);
      };
      for (int a = 0; a < n_actions; ++a) {
        const std::size_t base = (static_cast<std::size_t>(s - 1) * n_actions + static_cast<std::size_t>(a)) *
                                 static_cast<std::size_t>(n);
        kernel[base + static_cast<std::size_t>(target(a) - 1)] += 1.0 - config.slip_prob;
        kernel[base + static_cast<std::size_t>(target((a + 1) % 4) - 1)] += config.slip_prob / 2.0;
        kernel[base + static_cast<std::size_t>(target((a + 3) % 4) - 1)] += config.slip_prob / 2.0;
      }
    }
  }

  std::vector<double> initial(static_cast<std::size_t>(n), 0.0);
  std::set<StateId> cells(config.initial_cells.begin(), config.initial_cells.end());
  for (StateId s : cells) {
    if (s < 1 || s > n) throw InvalidArgument(fmt::format("initial cell {} out of range", s));
    initial[static_cast<std::size_t>(s - 1)] = 1.0 / static_cast<double>(cells.size());
  }
  return MdpModel(n, n_actions, std::move(kernel), std::move(initial), config.gamma);
}

LabeledRewardMachine build_ground_truth_rm(const MachineDescription& desc) {
  if (desc.num_nodes < 1) throw InvalidArgument("machine needs at least one node");
  if (desc.state_labels.empty()) throw InvalidArgument("machine has no state labels");

  LabeledRewardMachine rm;
  std::map<std::string, PropId> prop_index;
  for (const auto& name : desc.state_labels) {
    if (prop_index.emplace(name, static_cast<PropId>(prop_index.size() + 1)).second)
      rm.prop_names.push_back(name);
  }
  auto& m = rm.model;
  m.num_nodes = desc.num_nodes;
  m.num_props = static_cast<int>(rm.prop_names.size());
  for (const auto& name : desc.state_labels) m.labeling.push_back(prop_index.at(name));

  const auto slots = static_cast<std::size_t>(m.num_nodes * m.num_props);
  m.delta_u.assign(slots, 0);
  std::vector<double> rewards(slots, 0.0);
  std::vector<const MachineEdge*> fallback(static_cast<std::size_t>(m.num_nodes), nullptr);

  for (const auto& e : desc.edges) {
    if (e.from < 1 || e.from > m.num_nodes || e.to < 1 || e.to > m.num_nodes)
      throw InvalidArgument(fmt::format("line {}: node out of range 1..{}", e.line, m.num_nodes));
    if (e.prop.empty()) {
      auto& slot = fallback[static_cast<std::size_t>(e.from - 1)];
      if (slot) throw InvalidArgument(fmt::format("line {}: second wildcard edge for node {}", e.line, e.from));
      slot = &e;
      continue;
    }
    const auto it = prop_index.find(e.prop);
    if (it == prop_index.end())
      throw InvalidArgument(fmt::format("line {}: proposition '{}' labels no state", e.line, e.prop));
    const auto idx = static_cast<std::size_t>((e.from - 1) * m.num_props + (it->second - 1));
    if (m.delta_u[idx] != 0)
      throw InvalidArgument(fmt::format("line {}: duplicate edge for ({}, {})", e.line, e.from, e.prop));
    m.delta_u[idx] = e.to;
    rewards[idx] = e.reward;
  }
  for (NodeId u = 1; u <= m.num_nodes; ++u) {
    for (PropId p = 1; p <= m.num_props; ++p) {
      const auto idx = static_cast<std::size_t>((u - 1) * m.num_props + (p - 1));
      if (m.delta_u[idx] != 0) continue;
      const MachineEdge* fb = fallback[static_cast<std::size_t>(u - 1)];
      if (!fb)
        throw InvalidArgument(fmt::format("partial transition function: no edge for node {} on '{}'", u,
                                          rm.prop_names[static_cast<std::size_t>(p - 1)]));
      m.delta_u[idx] = fb->to;
      rewards[idx] = fb->reward;
    }
  }
  rm.delta_r = std::move(rewards);
  m.validate();
  return rm;
}

}  // namespace rmi
