#pragma once

// Maximum-entropy optimal product policy and the history-policy oracle built
// on top of it.

#include <atomic>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "rmi/env.hpp"

namespace rmi {

/// Sup-norm distinguishability threshold for policy rows.
inline constexpr double kEpsPolicy = 1e-6;

struct SoftValueOptions {
  double lambda = 0.1;
  double tol = 1e-10;
  int max_iters = 100000;
};

class ProductPolicy {
 public:
  ProductPolicy() = default;
  ProductPolicy(const ProductMdp& product, std::vector<double> probs, double lambda,
                std::vector<double> residuals, std::vector<double> values);

  int num_actions() const { return n_actions_; }
  int num_nodes() const { return n_nodes_; }
  int num_states() const { return n_states_; }
  double lambda() const { return lambda_; }
  double residual() const { return residuals_.empty() ? 0.0 : residuals_.back(); }
  /// Sup-norm residual after each sweep.
  const std::vector<double>& residuals() const { return residuals_; }
  int iterations() const { return static_cast<int>(residuals_.size()); }

  bool defined(StateId s, NodeId u) const { return index(s, u) >= 0; }
  /// Action distribution at (s, u); nullopt outside the accessible set.
  std::optional<std::span<const double>> row(StateId s, NodeId u) const;
  std::optional<double> value(StateId s, NodeId u) const;

  /// CSV rows "state,node,action,probability" over the accessible set.
  void write_csv(std::ostream& out) const;

  bool operator==(const ProductPolicy& other) const {
    return probs_ == other.probs_ && index_ == other.index_;
  }

 private:
  int index(StateId s, NodeId u) const {
    if (s < 1 || s > n_states_ || u < 1 || u > n_nodes_) return -1;
    return index_[static_cast<std::size_t>((s - 1) * n_nodes_ + (u - 1))];
  }

  int n_states_ = 0;
  int n_nodes_ = 0;
  int n_actions_ = 0;
  double lambda_ = 0.0;
  std::vector<int> index_;
  std::vector<double> probs_;
  std::vector<double> residuals_;
  std::vector<double> values_;
};

/// Iterates V(s,u) <- lambda * log sum_a exp(Q(s,u,a) / lambda) over the
/// accessible product states until the sup-norm change drops below tol.
/// Throws ConvergenceError when max_iters sweeps do not suffice.
ProductPolicy soft_value_iteration(const ProductMdp& product, const SoftValueOptions& options = {});

/// True iff max_a |p_a - q_a| > eps.
bool rows_differ(std::span<const double> p, std::span<const double> q, double eps = kEpsPolicy);

/// Rows of the history policy at every state for one fixed history.
struct RowMap {
  std::vector<std::optional<std::span<const double>>> rows;  // index s-1

  bool defined(StateId s) const { return rows[static_cast<std::size_t>(s - 1)].has_value(); }
};

/// First (state, action) at which two row maps disagree beyond eps on a
/// commonly defined state.
struct Witness {
  StateId state = 0;
  ActionId action = 0;
  bool operator==(const Witness&) const = default;
};
std::optional<Witness> find_witness(const RowMap& a, const RowMap& b, double eps = kEpsPolicy);
std::optional<Witness> find_witness_at(const RowMap& a, const RowMap& b, StateId s, double eps = kEpsPolicy);

/// Answers history-policy queries pi_h(. | s, tau) for the hidden ground
/// truth. The machine itself is never exposed.
class HistoryOracle {
 public:
  HistoryOracle(MdpModel mdp, LabeledRewardMachine truth, ProductPolicy policy);
  HistoryOracle(const HistoryOracle&) = delete;
  HistoryOracle& operator=(const HistoryOracle&) = delete;

  /// pi_Prod(. | s, rm_run(truth, tau)), or nullopt when that pair is not
  /// accessible. Throws InvariantViolation for an infeasible tau.
  std::optional<std::span<const double>> query(std::span<const StateId> tau, StateId s) const;

  /// query(tau, s) for every state s; counts one query per state.
  RowMap query_all(std::span<const StateId> tau) const;

  std::uint64_t query_count() const { return query_count_.load(std::memory_order_relaxed); }
  int num_states() const { return mdp_.num_states(); }
  int num_actions() const { return mdp_.num_actions(); }
  const MdpModel& mdp() const { return mdp_; }

 private:
  NodeId node_of(std::span<const StateId> tau) const;

  MdpModel mdp_;
  LabeledRewardMachine truth_;
  ProductPolicy policy_;
  mutable std::atomic<std::uint64_t> query_count_{0};
};

}  // namespace rmi
