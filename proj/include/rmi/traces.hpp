#pragma once

// Prefix trees of feasible state trajectories, behavior-signature classes and
// negative-example pairs.

#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rmi/env.hpp"
#include "rmi/policy.hpp"

namespace rmi {

inline constexpr std::size_t kDefaultTreeCap = 5'000'000;

/// Deduplicated trajectory prefixes as a parent-pointer tree. Node 0 is the
/// empty prefix; every other node is the prefix ending at its state.
class PrefixTree {
 public:
  using Index = std::uint32_t;
  static constexpr Index kRoot = 0;
  static constexpr Index kNone = 0xffffffffu;

  explicit PrefixTree(bool compressed = false, std::size_t node_cap = kDefaultTreeCap);

  bool compressed() const { return compressed_; }
  /// Number of nonempty prefixes.
  std::size_t size() const { return nodes_.size() - 1; }
  std::size_t node_cap() const { return node_cap_; }

  Index parent(Index n) const { return nodes_[n].parent; }
  StateId state(Index n) const { return nodes_[n].state; }
  int depth(Index n) const { return nodes_[n].depth; }
  Index child(Index n, StateId s) const;
  int max_depth() const { return max_depth_; }

  /// Adds a child, or returns the existing one. Throws CapExceeded.
  Index add_child(Index n, StateId s);
  /// Inserts every prefix of tau (stutter-collapsed if compressed) and
  /// returns the node of tau itself.
  Index insert(std::span<const StateId> tau);
  /// Lookup without insertion; kNone when absent.
  Index find(std::span<const StateId> tau) const;

  std::vector<StateId> trajectory(Index n) const;
  /// Prefix count per length, index 0 unused.
  std::vector<std::size_t> depth_histogram() const;
  /// Prefixes of exactly length `len`.
  std::size_t count_at_depth(int len) const;

  void write_binary(std::ostream& out) const;
  static PrefixTree read_binary(std::istream& in);

 private:
  struct Node {
    Index parent;
    Index first_child;
    Index next_sibling;
    std::int32_t state;
    std::int32_t depth;
  };
  std::vector<Node> nodes_;
  bool compressed_;
  std::size_t node_cap_;
  int max_depth_ = 0;
};

/// All feasible prefixes up to length `depth`. With compress, consecutive
/// repetitions of a state are collapsed (valid under non-stuttering).
PrefixTree enumerate_prefix_tree(const MdpModel& mdp, int depth, bool compress,
                                 std::size_t node_cap = kDefaultTreeCap);

/// Number of feasible trajectories of exactly `len` states, by dynamic
/// programming (no enumeration). Used for depths beyond what can be stored.
double count_trajectories(const MdpModel& mdp, int len, bool compress);

/// Partition of prefixes into behavior-signature classes. Two prefixes share
/// a class iff their history-policy rows agree (within eps) at every state
/// and they are defined on the same states.
struct SignaturePartition {
  std::vector<std::int32_t> class_of;  // per tree node; -1 for the root
  std::vector<RowMap> representatives;
  std::vector<std::size_t> class_sizes;
  /// distinguishable[i * k + j]: some commonly defined state separates i, j.
  std::vector<std::uint8_t> distinguishable;
  double eps = kEpsPolicy;

  std::size_t num_classes() const { return representatives.size(); }
  bool separates(std::size_t i, std::size_t j) const {
    return distinguishable[i * num_classes() + j] != 0;
  }
  /// Unordered pairs of prefixes in separated classes.
  double negative_pair_count() const;

  void write_class_sizes_csv(std::ostream& out) const;
};

SignaturePartition compute_signatures(const PrefixTree& tree, const HistoryOracle& oracle,
                                      double eps = kEpsPolicy);
/// Classifies nodes added to the tree since the partition was computed.
void extend_signatures(SignaturePartition& part, const PrefixTree& tree, const HistoryOracle& oracle);

struct NegativePair {
  PrefixTree::Index tau = 0;
  PrefixTree::Index tau_prime = 0;
  Witness witness;

  bool operator==(const NegativePair&) const = default;
};

/// On-disk size of one pair in the trace cache.
inline constexpr std::size_t kNegativePairBytes = 16;

struct NegativeMode {
  enum Kind { all, per_terminal_sample } kind = all;
  std::size_t per_group = 5000;
  std::uint64_t seed = 0;

  static NegativeMode everything() { return {}; }
  static NegativeMode sample(std::size_t k, std::uint64_t seed) { return {per_terminal_sample, k, seed}; }
};

/// Negative pairs from a partition. `all` lists every separated pair;
/// `per_terminal_sample` groups separated pairs by their unordered pair of
/// terminal states and samples up to per_group of each group uniformly
/// without replacement.
std::vector<NegativePair> materialize_negatives(const SignaturePartition& part, const PrefixTree& tree,
                                                const NegativeMode& mode);

/// Binary cache of a tree plus pair list, keyed by fixture hash, depth and eps.
struct TraceCacheKey {
  std::uint64_t fixture_hash = 0;
  int depth = 0;
  double eps = kEpsPolicy;
  bool operator==(const TraceCacheKey&) const = default;
};
void write_trace_cache(const std::string& path, const TraceCacheKey& key, const PrefixTree& tree,
                       std::span<const NegativePair> pairs);
/// Returns false when the file is missing or was written for another key.
bool read_trace_cache(const std::string& path, const TraceCacheKey& key, PrefixTree& tree,
                      std::vector<NegativePair>& pairs);

}  // namespace rmi
