#include "rmi/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "rmi/errors.hpp"

namespace rmi {

namespace {

struct Outcome {
  int next;  // accessible index
  double prob;
  double reward;
};

// Shifted log-sum-exp of q / lambda, times lambda.
double soft_max(std::span<const double> q, double lambda) {
  const double m = *std::max_element(q.begin(), q.end());
  double acc = 0.0;
  for (double x : q) acc += std::exp((x - m) / lambda);
  return m + lambda * std::log(acc);
}

}  // namespace

ProductPolicy::ProductPolicy(const ProductMdp& product, std::vector<double> probs, double lambda,
                             std::vector<double> residuals, std::vector<double> values)
    : n_states_(product.mdp().num_states()),
      n_nodes_(product.machine().num_nodes()),
      n_actions_(product.mdp().num_actions()),
      lambda_(lambda),
      probs_(std::move(probs)),
      residuals_(std::move(residuals)),
      values_(std::move(values)) {
  index_.assign(static_cast<std::size_t>(n_states_ * n_nodes_), -1);
  for (StateId s = 1; s <= n_states_; ++s)
    for (NodeId u = 1; u <= n_nodes_; ++u)
      index_[static_cast<std::size_t>((s - 1) * n_nodes_ + (u - 1))] = product.index_of(s, u);
}

std::optional<std::span<const double>> ProductPolicy::row(StateId s, NodeId u) const {
  const int i = index(s, u);
  if (i < 0) return std::nullopt;
  return std::span<const double>(probs_.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(n_actions_),
                                 static_cast<std::size_t>(n_actions_));
}

std::optional<double> ProductPolicy::value(StateId s, NodeId u) const {
  const int i = index(s, u);
  if (i < 0) return std::nullopt;
  return values_[static_cast<std::size_t>(i)];
}

void ProductPolicy::write_csv(std::ostream& out) const {
  out << "state,node,action,probability\n";
  for (StateId s = 1; s <= n_states_; ++s)
    for (NodeId u = 1; u <= n_nodes_; ++u)
      if (const auto r = row(s, u))
        for (ActionId a = 1; a <= n_actions_; ++a)
          out << fmt::format("{},{},{},{:.17g}\n", s, u, a, (*r)[static_cast<std::size_t>(a - 1)]);
}

ProductPolicy soft_value_iteration(const ProductMdp& product, const SoftValueOptions& options) {
  if (!(options.lambda > 0.0)) throw InvalidArgument("lambda must be positive");
  if (!(options.tol > 0.0)) throw InvalidArgument("tolerance must be positive");

  const MdpModel& mdp = product.mdp();
  const auto& model = product.machine().model;
  const auto& acc = product.accessible();
  const std::size_t n = acc.size();
  const auto n_actions = static_cast<std::size_t>(mdp.num_actions());
  const double gamma = mdp.discount();

  // outcomes[i * A + a] lists the successors of accessible pair i under a.
  std::vector<std::vector<Outcome>> outcomes(n * n_actions);
  for (std::size_t i = 0; i < n; ++i) {
    const auto [s, u] = acc[i];
    for (std::size_t a = 0; a < n_actions; ++a) {
      const auto row = mdp.row(s, static_cast<ActionId>(a + 1));
      for (std::size_t t = 0; t < row.size(); ++t) {
        if (row[t] <= 0.0) continue;
        const auto next_s = static_cast<StateId>(t + 1);
        const NodeId next_u = model.step(u, next_s);
        const int j = product.index_of(next_s, next_u);
        if (j < 0) throw InvariantViolation("product successor outside the accessible set");
        outcomes[i * n_actions + a].push_back(
            {j, row[t], product.reward(s, u, static_cast<ActionId>(a + 1), next_s, next_u)});
      }
    }
  }

  std::vector<double> v(n, 0.0), v_next(n, 0.0), q(n_actions);
  auto compute_q = [&](std::size_t i, const std::vector<double>& values) {
    for (std::size_t a = 0; a < n_actions; ++a) {
      double acc_q = 0.0;
      for (const auto& o : outcomes[i * n_actions + a])
        acc_q += o.prob * (o.reward + gamma * values[static_cast<std::size_t>(o.next)]);
      q[a] = acc_q;
    }
  };

  std::vector<double> residuals;
  double residual = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < options.max_iters; ++iter) {
    residual = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      compute_q(i, v);
      v_next[i] = soft_max(q, options.lambda);
      residual = std::max(residual, std::abs(v_next[i] - v[i]));
    }
    v.swap(v_next);
    residuals.push_back(residual);
    if (residual < options.tol) break;
  }
  if (!(residual < options.tol))
    throw ConvergenceError(fmt::format("soft value iteration did not converge in {} sweeps (residual {:.3e})",
                                       options.max_iters, residual),
                           residual);

  std::vector<double> probs(n * n_actions);
  for (std::size_t i = 0; i < n; ++i) {
    compute_q(i, v);
    const double m = *std::max_element(q.begin(), q.end());
    double z = 0.0;
    for (std::size_t a = 0; a < n_actions; ++a) {
      probs[i * n_actions + a] = std::exp((q[a] - m) / options.lambda);
      z += probs[i * n_actions + a];
    }
    for (std::size_t a = 0; a < n_actions; ++a) probs[i * n_actions + a] /= z;
  }
  return ProductPolicy(product, std::move(probs), options.lambda, std::move(residuals), std::move(v));
}

bool rows_differ(std::span<const double> p, std::span<const double> q, double eps) {
  if (p.size() != q.size()) throw InvalidArgument("policy rows have different lengths");
  for (std::size_t a = 0; a < p.size(); ++a)
    if (std::abs(p[a] - q[a]) > eps) return true;
  return false;
}

std::optional<Witness> find_witness_at(const RowMap& a, const RowMap& b, StateId s, double eps) {
  const auto& ra = a.rows[static_cast<std::size_t>(s - 1)];
  const auto& rb = b.rows[static_cast<std::size_t>(s - 1)];
  if (!ra || !rb) return std::nullopt;
  if (ra->size() != rb->size()) throw InvalidArgument("policy rows have different lengths");
  for (std::size_t k = 0; k < ra->size(); ++k)
    if (std::abs((*ra)[k] - (*rb)[k]) > eps) return Witness{s, static_cast<ActionId>(k + 1)};
  return std::nullopt;
}

std::optional<Witness> find_witness(const RowMap& a, const RowMap& b, double eps) {
  if (a.rows.size() != b.rows.size()) throw InvalidArgument("row maps cover different state sets");
  for (StateId s = 1; s <= static_cast<StateId>(a.rows.size()); ++s)
    if (auto w = find_witness_at(a, b, s, eps)) return w;
  return std::nullopt;
}

HistoryOracle::HistoryOracle(MdpModel mdp, LabeledRewardMachine truth, ProductPolicy policy)
    : mdp_(std::move(mdp)), truth_(std::move(truth)), policy_(std::move(policy)) {
  if (truth_.model.num_states() != mdp_.num_states())
    throw InvalidArgument("ground-truth labeling does not match the MDP");
}

NodeId HistoryOracle::node_of(std::span<const StateId> tau) const {
  if (!mdp_.feasible(tau)) throw InvariantViolation("oracle queried with an infeasible trajectory");
  return rm_run(truth_, tau);
}

std::optional<std::span<const double>> HistoryOracle::query(std::span<const StateId> tau, StateId s) const {
  if (s < 1 || s > mdp_.num_states()) throw InvalidArgument(fmt::format("state {} out of range", s));
  const NodeId u = node_of(tau);
  query_count_.fetch_add(1, std::memory_order_relaxed);
  return policy_.row(s, u);
}

RowMap HistoryOracle::query_all(std::span<const StateId> tau) const {
  const NodeId u = node_of(tau);
  RowMap out;
  out.rows.reserve(static_cast<std::size_t>(mdp_.num_states()));
  for (StateId s = 1; s <= mdp_.num_states(); ++s) out.rows.push_back(policy_.row(s, u));
  query_count_.fetch_add(static_cast<std::uint64_t>(mdp_.num_states()), std::memory_order_relaxed);
  return out;
}

}  // namespace rmi
