#pragma once

// Active extension: grow the evidence one depth at a time by querying the
// trajectory pairs that best split the current hypothesis set.

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rmi/fixture.hpp"
#include "rmi/policy.hpp"
#include "rmi/satsynth.hpp"
#include "rmi/traces.hpp"

namespace rmi {

struct ActiveConfig {
  int burn_in_depth = 6;
  std::size_t n_active = 200;
  std::size_t budget = 250;
  std::size_t candidate_cap = 10000;
  std::size_t dfs_node_budget = 200000;
  std::uint64_t seed = 0;
  int max_depth = 13;
  /// Enumeration cap for the hypothesis set.
  std::size_t enum_cap = 10000;
  /// Node and proposition budgets; 0 takes the ground truth's sizes.
  int u_max = 0;
  int n_ap = 0;
  double eps_policy = kEpsPolicy;
  /// Burn-in evidence: every separated pair, or a per-terminal-group sample.
  NegativeMode burn_in_negatives = NegativeMode::everything();
  std::size_t tree_cap = kDefaultTreeCap;
  std::int64_t conflict_budget = -1;
  /// Random decision signs during enumeration (see EncodingParams::phase_seed).
  bool random_phase = false;

  void validate() const;
};

struct CandidatePair {
  std::vector<StateId> tau;
  std::vector<StateId> tau_prime;
  std::size_t proposer = 0;
  NodeId target_node = 0;
};

/// n hypotheses drawn uniformly without replacement (all when |set| <= n).
std::vector<Hypothesis> subsample(const HypothesisSet& set, std::size_t n, std::mt19937_64& rng);

/// Randomized depth-first descents over (MDP state, node of h), pruned to
/// feasible trajectories of length l+1 that leave h in a randomly drawn
/// target node; pairs are formed among distinct trajectories sharing their
/// last state. At most dfs_node_budget search expansions and max_pairs pairs.
std::vector<CandidatePair> generate_candidates(const Hypothesis& h, std::size_t proposer, const MdpModel& mdp, int l,
                                               std::mt19937_64& rng, std::size_t dfs_node_budget,
                                               std::size_t max_pairs);

/// min(#collapse, #separate) over the sample.
std::size_t quality(const CandidatePair& pair, std::span<const Hypothesis> sample);

/// Queries the first `budget` pairs (already sorted) at every state and turns
/// disagreeing pairs into negative examples, inserting their trajectories
/// into the tree. `queried` receives every trajectory sent to the oracle.
std::vector<NegativePair> query_batch(std::span<const CandidatePair> pairs, const HistoryOracle& oracle,
                                      std::size_t budget, PrefixTree& tree,
                                      std::vector<std::vector<StateId>>* queried = nullptr, double eps = kEpsPolicy);

/// Shuffles with the given rng, then stable-sorts by quality, best first.
void rank_candidates(std::vector<CandidatePair>& pool, std::span<const Hypothesis> sample, std::mt19937_64& rng);

/// Pads the ground truth to the given node and proposition budgets with
/// self-looping extra nodes and unused propositions.
Hypothesis embed(const Hypothesis& h, int u_max, int n_ap);

struct DepthRecord {
  int depth = 0;
  std::size_t raw_count = 0;
  bool truncated = false;
  std::size_t class_count = 0;
  std::size_t candidates = 0;
  std::size_t pairs_queried = 0;
  std::size_t negatives_added = 0;
  double seconds = 0.0;
  bool truth_admitted = false;
  std::size_t stored_trajectories = 0;
  std::size_t tree_nodes = 0;
  std::uint64_t oracle_queries = 0;
};

struct ActiveReport {
  std::string mode;
  std::uint64_t seed = 0;
  std::vector<DepthRecord> rows;
  bool converged = false;
  int final_depth = 0;
  std::size_t burn_in_branches = 0;
  double burn_in_negative_pairs = 0.0;
  double discovery_seconds = 0.0;
  double query_seconds = 0.0;
  double sat_seconds = 0.0;
  double total_seconds = 0.0;
  /// Serialized size of the final prefix tree and of the pairs added after
  /// burn-in.
  std::size_t tree_bytes = 0;
  std::size_t pair_bytes = 0;
  HypothesisSet final_set;

  /// depth,raw_count,class_count,pairs_queried,negatives_added,seconds followed
  /// by truncated,truth_admitted,candidates,stored_trajectories,tree_nodes,
  /// oracle_queries,seed.
  void write_csv(std::ostream& out) const;
};

/// Exhaustive evidence at a fixed depth: full prefix tree, signature
/// partition, encoding and enumeration.
struct ExhaustiveResult {
  PrefixTree tree;
  SignaturePartition partition;
  HypothesisSet set;
  std::vector<NegativePair> pairs;  // materialized pairs in sampling mode
  std::size_t branches = 0;       // feasible trajectories of exactly `depth` states
  std::size_t pairs_encoded = 0;  // 0 when the partition encoding was used
  double negative_pairs = 0.0;    // separated prefix pairs in the tree
  double discovery_seconds = 0.0;
  double sat_seconds = 0.0;
  bool truth_admitted = false;
  std::unique_ptr<CnfInstance> instance;
};

ExhaustiveResult run_exhaustive(const Fixture& fixture, const HistoryOracle& oracle, int depth,
                                const EncodingParams& params, const NegativeMode& negatives, std::size_t enum_cap,
                                std::size_t tree_cap = kDefaultTreeCap, double eps = kEpsPolicy);

ActiveReport run_active(const ActiveConfig& cfg, const Fixture& fixture, const HistoryOracle& oracle);

/// Same loop with candidate generation and ranking replaced by uniformly
/// sampled same-endpoint pairs of random feasible trajectories.
ActiveReport run_random_baseline(const ActiveConfig& cfg, const Fixture& fixture, const HistoryOracle& oracle);

/// Uniform random feasible trajectory of `len` states.
std::vector<StateId> random_trajectory(const MdpModel& mdp, int len, std::mt19937_64& rng);

}  // namespace rmi
