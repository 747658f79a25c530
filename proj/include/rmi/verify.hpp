#pragma once

// Independent reference implementations used to cross-check the SAT
// pipeline: exhaustive hypothesis search, synchronized machines, cycle
// removal and node-partition equivalence.

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "rmi/env.hpp"
#include "rmi/fixture.hpp"
#include "rmi/policy.hpp"
#include "rmi/satsynth.hpp"
#include "rmi/traces.hpp"

namespace rmi {

using TrajectoryPair = std::pair<std::vector<StateId>, std::vector<StateId>>;

inline constexpr std::uint64_t kBruteForceCap = 50'000'000;

/// Number of (delta_u, L) candidates with L(1) = 1; saturates at UINT64_MAX.
std::uint64_t brute_force_space(int u_max, int n_ap, int n_states);

/// Every (delta_u, L) with L(1) = 1 under which each pair ends in distinct
/// nodes, in enumeration order. Throws CapExceeded above `cap` candidates.
HypothesisSet brute_force_feasible(std::span<const TrajectoryPair> pairs, int u_max, int n_ap, int n_states,
                                   bool non_stuttering, std::uint64_t cap = kBruteForceCap);

/// Same search against a whole signature partition: no machine node may be
/// reached by prefixes of two separated classes.
HypothesisSet brute_force_feasible(const PrefixTree& tree, const SignaturePartition& part, int u_max, int n_ap,
                                   int n_states, bool non_stuttering, std::uint64_t cap = kBruteForceCap);

bool is_non_stuttering(const Hypothesis& h);

/// Both sets hold the same hypotheses, ignoring order.
bool same_hypotheses(const HypothesisSet& a, const HypothesisSet& b);

/// Two labeled machine models run in lockstep. The product is again a
/// labeled machine model: node (u1,u2) has index (u1-1)*n2 + u2 and the
/// paired label (l1,l2) has index (l1-1)*p2 + l2.
struct SyncMachine {
  LabeledMachineModel model;
  int n1 = 0, n2 = 0;
  int p1 = 0, p2 = 0;

  NodeId join(NodeId u1, NodeId u2) const { return (u1 - 1) * n2 + u2; }
  std::pair<NodeId, NodeId> split(NodeId u) const { return {(u - 1) / n2 + 1, (u - 1) % n2 + 1}; }
  std::pair<NodeId, NodeId> run(std::span<const StateId> tau) const { return split(rm_run(model, tau)); }
};

SyncMachine build_sync(const LabeledMachineModel& g1, const LabeledMachineModel& g2);

/// Deletes cycles s_{i+1..j} with s_i = s_j and equal machine nodes after
/// prefixes i and j until none is left.
std::vector<StateId> remove_cycles(std::span<const StateId> tau, const MdpModel& mdp, const LabeledMachineModel& g);

/// Feasible set from exhaustive evidence (all separated prefix pairs) at a
/// depth, by brute force.
HypothesisSet feasible_at_depth(const Fixture& fixture, const HistoryOracle& oracle, int depth, int u_max, int n_ap,
                                double eps = kEpsPolicy);

/// Feasible sets at depth l and l+1 coincide; l defaults to the sufficient
/// depth |S| u_max^2.
bool check_depth_stabilization(const Fixture& fixture, const HistoryOracle& oracle, int u_max, int n_ap,
                               int depth = 0);

/// For all feasible trajectories up to `depth`, g1 merges two trajectories
/// iff g2 does. Throws InvalidArgument below the sufficient depth.
bool node_partition_equivalent(const LabeledMachineModel& g1, const LabeledMachineModel& g2, const MdpModel& mdp,
                               int depth);

}  // namespace rmi
