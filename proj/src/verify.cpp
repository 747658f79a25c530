#include "rmi/verify.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <set>

#include <fmt/format.h>

#include "rmi/errors.hpp"

namespace rmi {

std::uint64_t brute_force_space(int u_max, int n_ap, int n_states) {
  constexpr auto kMax = std::numeric_limits<std::uint64_t>::max();
  std::uint64_t total = 1;
  auto mul = [&](std::uint64_t base, int times) {
    for (int i = 0; i < times; ++i) {
      if (total > kMax / std::max<std::uint64_t>(base, 1)) {
        total = kMax;
        return;
      }
      total *= base;
    }
  };
  mul(static_cast<std::uint64_t>(u_max), u_max * n_ap);
  mul(static_cast<std::uint64_t>(n_ap), n_states - 1);
  return total;
}

bool is_non_stuttering(const Hypothesis& h) {
  for (NodeId i = 1; i <= h.num_nodes; ++i)
    for (PropId p = 1; p <= h.num_props; ++p) {
      const NodeId j = h.next(i, p);
      if (h.next(j, p) != j) return false;
    }
  return true;
}

namespace {

// Calls keep(h) for every anchored (delta_u, L); odometer order, labels
// varying fastest.
template <typename Keep>
HypothesisSet enumerate_space(int u_max, int n_ap, int n_states, bool non_stuttering, std::uint64_t cap, Keep keep) {
  if (u_max < 1 || n_ap < 1 || n_states < 1) throw InvalidArgument("brute force needs positive sizes");
  const auto space = brute_force_space(u_max, n_ap, n_states);
  if (space > cap)
    throw CapExceeded(fmt::format("brute-force space of {} candidates exceeds the cap of {}", space, cap));
  Hypothesis h;
  h.num_nodes = u_max;
  h.num_props = n_ap;
  h.delta_u.assign(static_cast<std::size_t>(u_max * n_ap), 1);
  h.labeling.assign(static_cast<std::size_t>(n_states), 1);
  HypothesisSet out;
  while (true) {
    if ((!non_stuttering || is_non_stuttering(h)) && keep(h)) out.models.push_back(h);
    std::size_t k = 1;  // labeling[0] stays anchored
    for (; k < h.labeling.size(); ++k) {
      if (++h.labeling[k] <= n_ap) break;
      h.labeling[k] = 1;
    }
    if (k < h.labeling.size()) continue;
    std::size_t d = 0;
    for (; d < h.delta_u.size(); ++d) {
      if (++h.delta_u[d] <= u_max) break;
      h.delta_u[d] = 1;
    }
    if (d == h.delta_u.size()) break;
  }
  return out;
}

}  // namespace

HypothesisSet brute_force_feasible(std::span<const TrajectoryPair> pairs, int u_max, int n_ap, int n_states,
                                   bool non_stuttering, std::uint64_t cap) {
  return enumerate_space(u_max, n_ap, n_states, non_stuttering, cap, [&](const Hypothesis& h) {
    return std::all_of(pairs.begin(), pairs.end(),
                       [&](const TrajectoryPair& p) { return rm_run(h, p.first) != rm_run(h, p.second); });
  });
}

HypothesisSet brute_force_feasible(const PrefixTree& tree, const SignaturePartition& part, int u_max, int n_ap,
                                   int n_states, bool non_stuttering, std::uint64_t cap) {
  const std::size_t k = part.num_classes();
  std::vector<NodeId> node_of(tree.size() + 1);
  std::vector<std::uint8_t> occupied(k * static_cast<std::size_t>(u_max));
  return enumerate_space(u_max, n_ap, n_states, non_stuttering, cap, [&](const Hypothesis& h) {
    node_of[PrefixTree::kRoot] = 1;
    std::fill(occupied.begin(), occupied.end(), 0);
    // Parents precede children in index order.
    for (std::size_t n = 1; n <= tree.size(); ++n) {
      const auto idx = static_cast<PrefixTree::Index>(n);
      node_of[n] = h.step(node_of[tree.parent(idx)], tree.state(idx));
      occupied[static_cast<std::size_t>(part.class_of[n]) * static_cast<std::size_t>(u_max) +
               static_cast<std::size_t>(node_of[n] - 1)] = 1;
    }
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = a + 1; b < k; ++b) {
        if (!part.separates(a, b)) continue;
        for (int i = 0; i < u_max; ++i)
          if (occupied[a * static_cast<std::size_t>(u_max) + static_cast<std::size_t>(i)] &&
              occupied[b * static_cast<std::size_t>(u_max) + static_cast<std::size_t>(i)])
            return false;
      }
    return true;
  });
}

bool same_hypotheses(const HypothesisSet& a, const HypothesisSet& b) {
  std::multiset<std::vector<int>> ca, cb;
  for (const auto& h : a.models) ca.insert(hypothesis_code(h));
  for (const auto& h : b.models) cb.insert(hypothesis_code(h));
  return ca == cb;
}

SyncMachine build_sync(const LabeledMachineModel& g1, const LabeledMachineModel& g2) {
  if (g1.num_states() != g2.num_states()) throw InvalidArgument("synchronized machines need the same state set");
  SyncMachine out;
  out.n1 = g1.num_nodes;
  out.n2 = g2.num_nodes;
  out.p1 = g1.num_props;
  out.p2 = g2.num_props;
  auto& m = out.model;
  m.num_nodes = out.n1 * out.n2;
  m.num_props = out.p1 * out.p2;
  m.delta_u.resize(static_cast<std::size_t>(m.num_nodes * m.num_props));
  for (NodeId u1 = 1; u1 <= out.n1; ++u1)
    for (NodeId u2 = 1; u2 <= out.n2; ++u2)
      for (PropId l1 = 1; l1 <= out.p1; ++l1)
        for (PropId l2 = 1; l2 <= out.p2; ++l2)
          m.next(out.join(u1, u2), (l1 - 1) * out.p2 + l2) = out.join(g1.next(u1, l1), g2.next(u2, l2));
  m.labeling.resize(g1.labeling.size());
  for (StateId s = 1; s <= g1.num_states(); ++s)
    m.labeling[static_cast<std::size_t>(s - 1)] = (g1.label(s) - 1) * out.p2 + g2.label(s);
  return out;
}

std::vector<StateId> remove_cycles(std::span<const StateId> tau, const MdpModel& mdp, const LabeledMachineModel& g) {
  if (!mdp.feasible(tau)) throw InvalidArgument("remove_cycles needs a feasible trajectory");
  std::vector<StateId> out(tau.begin(), tau.end());
  while (true) {
    std::map<std::pair<StateId, NodeId>, std::size_t> first;
    NodeId u = 1;
    bool cut = false;
    for (std::size_t j = 0; j < out.size(); ++j) {
      u = g.step(u, out[j]);
      const auto [it, fresh] = first.emplace(std::make_pair(out[j], u), j);
      if (!fresh) {
        out.erase(out.begin() + static_cast<std::ptrdiff_t>(it->second) + 1,
                  out.begin() + static_cast<std::ptrdiff_t>(j) + 1);
        cut = true;
        break;
      }
    }
    if (!cut) return out;
  }
}

HypothesisSet feasible_at_depth(const Fixture& fixture, const HistoryOracle& oracle, int depth, int u_max, int n_ap,
                                double eps) {
  const PrefixTree tree = enumerate_prefix_tree(fixture.mdp, depth, false);
  const SignaturePartition part = compute_signatures(tree, oracle, eps);
  return brute_force_feasible(tree, part, u_max, n_ap, fixture.mdp.num_states(), fixture.non_stuttering);
}

bool check_depth_stabilization(const Fixture& fixture, const HistoryOracle& oracle, int u_max, int n_ap, int depth) {
  const int l = depth > 0 ? depth : sufficient_depth(fixture.mdp.num_states(), u_max);
  return same_hypotheses(feasible_at_depth(fixture, oracle, l, u_max, n_ap),
                         feasible_at_depth(fixture, oracle, l + 1, u_max, n_ap));
}

bool node_partition_equivalent(const LabeledMachineModel& g1, const LabeledMachineModel& g2, const MdpModel& mdp,
                               int depth) {
  const int needed = sufficient_depth(mdp.num_states(), std::max(g1.num_nodes, g2.num_nodes));
  if (depth < needed)
    throw InvalidArgument(fmt::format("depth {} is below the sufficient depth {}", depth, needed));
  const SyncMachine sync = build_sync(g1, g2);
  // Breadth-first over (state, sync node) up to `depth` states.
  const auto n_sync = static_cast<std::size_t>(sync.model.num_nodes);
  std::vector<std::uint8_t> seen(static_cast<std::size_t>(mdp.num_states()) * n_sync, 0);
  std::vector<std::pair<StateId, NodeId>> frontier, next;
  std::set<std::pair<NodeId, NodeId>> related;
  auto visit = [&](StateId s, NodeId u, std::vector<std::pair<StateId, NodeId>>& into) {
    auto& flag = seen[static_cast<std::size_t>(s - 1) * n_sync + static_cast<std::size_t>(u - 1)];
    if (flag) return;
    flag = 1;
    related.insert(sync.split(u));
    into.emplace_back(s, u);
  };
  for (StateId s : mdp.initial_states()) visit(s, sync.model.step(1, s), frontier);
  for (int len = 2; len <= depth && !frontier.empty(); ++len) {
    next.clear();
    for (const auto& [s, u] : frontier)
      for (StateId t : mdp.successors(s)) visit(t, sync.model.step(u, t), next);
    frontier.swap(next);
  }
  std::map<NodeId, NodeId> forward, backward;
  for (const auto& [u1, u2] : related) {
    if (!forward.emplace(u1, u2).second) return false;
    if (!backward.emplace(u2, u1).second) return false;
  }
  return true;
}

}  // namespace rmi
