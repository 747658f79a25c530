#pragma once

// CNF encoding of the labeled reward machine identification problem, model
// enumeration, decoding and canonicalization up to renaming.
//
// Variables:
//   trans(i,p,j)  delta_u(i,p) = j
//   lab(p,k)      L(k) = p
//   step(k,i,j)   delta_u(i, L(k)) = j, an auxiliary per (state, node, node)
//   reach(n,i)    the prefix at tree node n ends in machine node i
//   occ(c,i)      some prefix of signature class c ends in node i

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rmi/env.hpp"
#include "rmi/sat_solver.hpp"
#include "rmi/traces.hpp"

namespace rmi {

struct EncodingParams {
  int u_max = 1;
  int n_ap = 1;
  bool non_stuttering = true;
  /// Solver conflict limit per solve call; negative means unlimited.
  std::int64_t conflict_budget = -1;
  /// Random decision signs, so a truncated enumeration is spread over the
  /// solution space instead of clustered around the first model.
  std::optional<std::uint64_t> phase_seed;
};

/// A decoded (delta_u, L) pair.
using Hypothesis = LabeledMachineModel;

struct HypothesisSet {
  std::vector<Hypothesis> models;
  /// Enumeration stopped at the cap with further models remaining.
  bool truncated = false;

  std::size_t size() const { return models.size(); }
  bool empty() const { return models.empty(); }
};

class CnfInstance {
 public:
  /// record_clauses keeps a copy of every clause for DIMACS export.
  CnfInstance(const EncodingParams& params, int n_states, bool record_clauses = false);

  const EncodingParams& params() const { return params_; }
  int num_states() const { return n_states_; }

  sat::Var trans(NodeId i, PropId p, NodeId j) const;
  sat::Var lab(PropId p, StateId k) const;
  /// Reach variable of a tree node, if that node has been encoded.
  std::optional<sat::Var> reach(PrefixTree::Index n, NodeId i) const;
  bool encoded(PrefixTree::Index n) const;

  /// Decision variables (trans then lab), the projection used for blocking.
  std::vector<sat::Var> decision_vars() const;

  /// Pair constraints reach(tau) != reach(tau'). Encodes any missing prefix
  /// paths on the way.
  void add_pairs(const PrefixTree& tree, std::span<const NegativePair> pairs);
  /// Lossless equivalent of adding every cross-class pair of the partition.
  void add_partition(const PrefixTree& tree, const SignaturePartition& part);

  std::size_t num_vars() const { return static_cast<std::size_t>(solver_.num_vars()); }
  std::size_t num_clauses() const { return num_clauses_; }
  std::size_t num_pairs() const { return pairs_.size(); }
  std::size_t encoded_prefixes() const { return encoded_count_; }

  /// Literals pinning the decision variables to h.
  std::vector<sat::Lit> assumptions_for(const Hypothesis& h) const;
  /// True iff h extends to a model of the current clauses. Not counted in
  /// sat_seconds().
  bool admits(const Hypothesis& h);

  /// Semantic re-check of h against the stored pair constraints.
  bool satisfies_pairs(const Hypothesis& h, const PrefixTree& tree, std::size_t first_pair = 0) const;

  void set_conflict_budget(std::int64_t budget) { solver_.set_conflict_budget(budget); }
  double sat_seconds() const { return sat_seconds_; }
  sat::Solver& solver() { return solver_; }

  /// DIMACS CNF with "c var <id> <name>" comment lines. Requires
  /// record_clauses.
  void write_dimacs(std::ostream& out) const;
  std::string var_name(sat::Var v) const;

 private:
  friend std::optional<Hypothesis> solve_one(CnfInstance&);
  friend HypothesisSet enumerate_all(CnfInstance&, std::size_t);
  friend void add_negatives_incremental(CnfInstance&, std::span<const NegativePair>, const PrefixTree&);

  void clause(std::initializer_list<sat::Lit> lits);
  void clause(std::span<const sat::Lit> lits);
  void exactly_one(std::span<const sat::Var> vars);
  void encode_node(const PrefixTree& tree, PrefixTree::Index n);
  sat::Result timed_solve(std::span<const sat::Lit> assumptions);
  sat::Var step_var(StateId k, NodeId i, NodeId j) const;

  EncodingParams params_;
  int n_states_;
  bool record_;
  sat::Solver solver_;
  sat::Var trans_base_ = 0, lab_base_ = 0, step_base_ = 0;
  std::vector<std::int32_t> reach_base_;  // per tree node, -1 if not encoded
  std::size_t encoded_count_ = 0;
  std::vector<std::pair<PrefixTree::Index, PrefixTree::Index>> pairs_;
  std::size_t num_clauses_ = 0;
  std::vector<std::vector<sat::Lit>> recorded_;
  std::map<sat::Var, std::string> names_;  // reach / occ names, filled when recording
  double sat_seconds_ = 0.0;

  // Enumeration cache. complete_ means cache_ is the whole feasible set.
  std::vector<Hypothesis> cache_;
  bool cache_valid_ = false;
  bool complete_ = false;
  std::optional<sat::Var> selector_;
};

CnfInstance encode(const PrefixTree& tree, std::span<const NegativePair> pairs, const EncodingParams& params,
                   int n_states);

/// One model, or nullopt when unsatisfiable. Throws CapExceeded when the
/// solver's conflict budget runs out.
std::optional<Hypothesis> solve_one(CnfInstance& inst);

/// All models projected on the decision variables, up to cap.
HypothesisSet enumerate_all(CnfInstance& inst, std::size_t cap);

/// Adds pair constraints, keeping learnt clauses; cached models violating the
/// new pairs are evicted. A complete cached set stays complete.
void add_negatives_incremental(CnfInstance& inst, std::span<const NegativePair> pairs, const PrefixTree& tree);

/// Reads delta_u and L off a full assignment. Throws InvariantViolation if an
/// exactly-one group is violated.
Hypothesis decode_model(const std::vector<std::uint8_t>& assignment, const CnfInstance& inst);

/// Encoding order of a hypothesis: labels of states 1..|S| followed by the
/// transition table row by row.
std::vector<int> hypothesis_code(const Hypothesis& h);

/// Lexicographically smallest code over node renamings fixing node 1 and
/// proposition renamings fixing proposition 1. With reachable_only, rows of
/// nodes unreachable from node 1 and columns of propositions no state
/// carries are zeroed first.
std::vector<int> canonicalize(const Hypothesis& h, bool reachable_only = false);

/// Applies node renaming rho and proposition renaming sigma (1-based maps,
/// index 0 unused): delta'(rho(i), sigma(p)) = rho(delta(i,p)),
/// L'(k) = sigma(L(k)).
Hypothesis rename(const Hypothesis& h, std::span<const int> rho, std::span<const int> sigma);

/// Distinct images of h under the renaming group.
std::vector<Hypothesis> orbit(const Hypothesis& h);

/// Canonical code -> number of raw models in that class.
std::map<std::vector<int>, std::size_t> canonical_classes(const HypothesisSet& set, bool reachable_only = false);

/// Exactly one canonical class. Throws InvalidArgument on a truncated set.
bool converged(const HypothesisSet& set);

/// Whether a renaming of h is in the set.
bool contains_up_to_renaming(const HypothesisSet& set, const Hypothesis& h);

/// l* = n_states * u_max^2.
int sufficient_depth(int n_states, int u_max);

/// Hypothesis records: {"nodes", "props", "labeling", "delta_u"}.
void write_hypotheses_json(std::ostream& out, const HypothesisSet& set);

}  // namespace rmi
