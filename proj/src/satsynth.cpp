#include "rmi/satsynth.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <ostream>
#include <set>

#include <fmt/format.h>
#include <json.hpp>

#include "rmi/errors.hpp"

namespace rmi {

using sat::Lit;
using sat::neg;
using sat::pos;
using sat::Var;

CnfInstance::CnfInstance(const EncodingParams& params, int n_states, bool record_clauses)
    : params_(params), n_states_(n_states), record_(record_clauses) {
  const int u = params.u_max;
  const int ap = params.n_ap;
  if (u < 1) throw InvalidArgument("u_max must be at least 1");
  if (ap < 1 || ap > n_states) throw InvalidArgument(fmt::format("n_ap must lie in [1, {}]", n_states));

  solver_.set_conflict_budget(params.conflict_budget);
  solver_.set_random_phase(params.phase_seed);
  solver_.reserve_vars(u * ap * u + ap * n_states + n_states * u * u);
  trans_base_ = solver_.num_vars();
  for (int v = 0; v < u * ap * u; ++v) solver_.new_var();
  lab_base_ = solver_.num_vars();
  for (int v = 0; v < ap * n_states; ++v) solver_.new_var();
  step_base_ = solver_.num_vars();
  for (int v = 0; v < n_states * u * u; ++v) solver_.new_var();

  std::vector<Var> group;
  for (NodeId i = 1; i <= u; ++i)
    for (PropId p = 1; p <= ap; ++p) {
      group.clear();
      for (NodeId j = 1; j <= u; ++j) group.push_back(trans(i, p, j));
      exactly_one(group);
    }
  for (StateId k = 1; k <= n_states; ++k) {
    group.clear();
    for (PropId p = 1; p <= ap; ++p) group.push_back(lab(p, k));
    exactly_one(group);
  }
  clause({pos(lab(1, 1))});

  if (params.non_stuttering)
    for (NodeId i = 1; i <= u; ++i)
      for (PropId p = 1; p <= ap; ++p)
        for (NodeId j = 1; j <= u; ++j)
          if (i != j) clause({neg(trans(i, p, j)), pos(trans(j, p, j))});

  // step(k,i,j) holds exactly for j = delta_u(i, L(k)).
  for (StateId k = 1; k <= n_states; ++k)
    for (NodeId i = 1; i <= u; ++i) {
      for (NodeId j = 1; j <= u; ++j)
        for (PropId p = 1; p <= ap; ++p) clause({neg(lab(p, k)), neg(trans(i, p, j)), pos(step_var(k, i, j))});
      for (NodeId j = 1; j <= u; ++j)
        for (NodeId j2 = j + 1; j2 <= u; ++j2) clause({neg(step_var(k, i, j)), neg(step_var(k, i, j2))});
    }
}

Var CnfInstance::trans(NodeId i, PropId p, NodeId j) const {
  const int u = params_.u_max;
  return trans_base_ + ((i - 1) * params_.n_ap + (p - 1)) * u + (j - 1);
}

Var CnfInstance::lab(PropId p, StateId k) const { return lab_base_ + (k - 1) * params_.n_ap + (p - 1); }

Var CnfInstance::step_var(StateId k, NodeId i, NodeId j) const {
  const int u = params_.u_max;
  return step_base_ + ((k - 1) * u + (i - 1)) * u + (j - 1);
}

std::optional<Var> CnfInstance::reach(PrefixTree::Index n, NodeId i) const {
  if (!encoded(n)) return std::nullopt;
  return reach_base_[n] + (i - 1);
}

bool CnfInstance::encoded(PrefixTree::Index n) const { return n < reach_base_.size() && reach_base_[n] >= 0; }

std::vector<Var> CnfInstance::decision_vars() const {
  std::vector<Var> out(static_cast<std::size_t>(step_base_ - trans_base_));
  std::iota(out.begin(), out.end(), trans_base_);
  return out;
}

void CnfInstance::clause(std::initializer_list<Lit> lits) { clause(std::span<const Lit>(lits.begin(), lits.size())); }

void CnfInstance::clause(std::span<const Lit> lits) {
  ++num_clauses_;
  if (record_) recorded_.emplace_back(lits.begin(), lits.end());
  solver_.add_clause(lits);
}

void CnfInstance::exactly_one(std::span<const Var> vars) {
  std::vector<Lit> alo;
  for (Var v : vars) alo.push_back(pos(v));
  clause(alo);
  for (std::size_t a = 0; a < vars.size(); ++a)
    for (std::size_t b = a + 1; b < vars.size(); ++b) clause({neg(vars[a]), neg(vars[b])});
}

void CnfInstance::encode_node(const PrefixTree& tree, PrefixTree::Index n) {
  if (encoded(n)) return;
  std::vector<PrefixTree::Index> path;
  for (auto m = n; !encoded(m); m = tree.parent(m)) {
    path.push_back(m);
    if (m == PrefixTree::kRoot) break;
  }
  if (reach_base_.size() < tree.size() + 1) reach_base_.resize(tree.size() + 1, -1);

  const int u = params_.u_max;
  std::vector<Var> vars(static_cast<std::size_t>(u));
  for (auto it = path.rbegin(); it != path.rend(); ++it) {
    const auto m = *it;
    reach_base_[m] = solver_.num_vars();
    for (int i = 0; i < u; ++i) vars[static_cast<std::size_t>(i)] = solver_.new_var();
    if (record_)
      for (NodeId i = 1; i <= u; ++i) names_[vars[static_cast<std::size_t>(i - 1)]] = fmt::format("reach({},{})", m, i);
    exactly_one(vars);
    if (m == PrefixTree::kRoot) {
      clause({pos(vars[0])});
      continue;
    }
    ++encoded_count_;
    const auto parent = tree.parent(m);
    const StateId k = tree.state(m);
    for (NodeId i = 1; i <= u; ++i)
      for (NodeId j = 1; j <= u; ++j)
        clause({neg(*reach(parent, i)), neg(step_var(k, i, j)), pos(*reach(m, j))});
  }
}

void CnfInstance::add_pairs(const PrefixTree& tree, std::span<const NegativePair> pairs) {
  for (const auto& pair : pairs) {
    if (pair.tau == PrefixTree::kRoot || pair.tau_prime == PrefixTree::kRoot || pair.tau > tree.size() ||
        pair.tau_prime > tree.size())
      throw InvalidArgument("negative pair references a prefix missing from the tree");
    encode_node(tree, pair.tau);
    encode_node(tree, pair.tau_prime);
    for (NodeId i = 1; i <= params_.u_max; ++i)
      clause({neg(*reach(pair.tau, i)), neg(*reach(pair.tau_prime, i))});
    pairs_.emplace_back(pair.tau, pair.tau_prime);
  }
}

void CnfInstance::add_partition(const PrefixTree& tree, const SignaturePartition& part) {
  const std::size_t k = part.num_classes();
  if (part.class_of.size() != tree.size() + 1) throw InvalidArgument("partition does not cover the prefix tree");
  std::vector<std::uint8_t> relevant(k, 0);
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < k; ++b)
      if (a != b && part.separates(a, b)) relevant[a] = 1;

  const int u = params_.u_max;
  std::vector<Var> occ(k * static_cast<std::size_t>(u), -1);
  for (std::size_t c = 0; c < k; ++c) {
    if (!relevant[c]) continue;
    for (int i = 0; i < u; ++i) {
      const Var v = solver_.new_var();
      occ[c * static_cast<std::size_t>(u) + static_cast<std::size_t>(i)] = v;
      if (record_) names_[v] = fmt::format("occ({},{})", c, i + 1);
    }
  }
  for (std::size_t n = 1; n <= tree.size(); ++n) {
    const auto c = static_cast<std::size_t>(part.class_of[n]);
    if (!relevant[c]) continue;
    const auto idx = static_cast<PrefixTree::Index>(n);
    encode_node(tree, idx);
    for (NodeId i = 1; i <= u; ++i)
      clause({neg(*reach(idx, i)), pos(occ[c * static_cast<std::size_t>(u) + static_cast<std::size_t>(i - 1)])});
  }
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = a + 1; b < k; ++b)
      if (part.separates(a, b))
        for (int i = 0; i < u; ++i)
          clause({neg(occ[a * static_cast<std::size_t>(u) + static_cast<std::size_t>(i)]),
                  neg(occ[b * static_cast<std::size_t>(u) + static_cast<std::size_t>(i)])});
  cache_valid_ = false;
  complete_ = false;
}

std::vector<Lit> CnfInstance::assumptions_for(const Hypothesis& h) const {
  if (h.num_nodes != params_.u_max || h.num_props != params_.n_ap || h.num_states() != n_states_)
    throw InvalidArgument("hypothesis shape does not match the encoding");
  std::vector<Lit> out;
  for (NodeId i = 1; i <= params_.u_max; ++i)
    for (PropId p = 1; p <= params_.n_ap; ++p) out.push_back(pos(trans(i, p, h.next(i, p))));
  for (StateId k = 1; k <= n_states_; ++k) out.push_back(pos(lab(h.label(k), k)));
  return out;
}

bool CnfInstance::admits(const Hypothesis& h) {
  const auto assumptions = assumptions_for(h);
  const auto r = solver_.solve(assumptions);
  if (r == sat::Result::unknown) throw CapExceeded("SAT conflict budget exhausted");
  return r == sat::Result::sat;
}

bool CnfInstance::satisfies_pairs(const Hypothesis& h, const PrefixTree& tree, std::size_t first_pair) const {
  for (std::size_t i = first_pair; i < pairs_.size(); ++i) {
    const auto a = tree.trajectory(pairs_[i].first);
    const auto b = tree.trajectory(pairs_[i].second);
    if (rm_run(h, a) == rm_run(h, b)) return false;
  }
  return true;
}

sat::Result CnfInstance::timed_solve(std::span<const Lit> assumptions) {
  const auto start = std::chrono::steady_clock::now();
  const auto r = solver_.solve(assumptions);
  sat_seconds_ += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

std::string CnfInstance::var_name(Var v) const {
  const int u = params_.u_max;
  const int ap = params_.n_ap;
  if (v >= trans_base_ && v < lab_base_) {
    const int x = v - trans_base_;
    return fmt::format("trans({},{},{})", x / (ap * u) + 1, (x / u) % ap + 1, x % u + 1);
  }
  if (v >= lab_base_ && v < step_base_) {
    const int x = v - lab_base_;
    return fmt::format("lab({},{})", x % ap + 1, x / ap + 1);
  }
  if (v >= step_base_ && v < step_base_ + n_states_ * u * u) {
    const int x = v - step_base_;
    return fmt::format("step({},{},{})", x / (u * u) + 1, (x / u) % u + 1, x % u + 1);
  }
  if (const auto it = names_.find(v); it != names_.end()) return it->second;
  return fmt::format("aux{}", v);
}

void CnfInstance::write_dimacs(std::ostream& out) const {
  if (!record_) throw InvalidArgument("DIMACS export needs an instance built with clause recording");
  for (Var v = 0; v < solver_.num_vars(); ++v) out << "c var " << v + 1 << ' ' << var_name(v) << '\n';
  out << "p cnf " << solver_.num_vars() << ' ' << recorded_.size() << '\n';
  for (const auto& c : recorded_) {
    for (Lit l : c) out << (l.negated() ? -(l.var() + 1) : l.var() + 1) << ' ';
    out << "0\n";
  }
}

CnfInstance encode(const PrefixTree& tree, std::span<const NegativePair> pairs, const EncodingParams& params,
                   int n_states) {
  CnfInstance inst(params, n_states);
  inst.add_pairs(tree, pairs);
  return inst;
}

std::optional<Hypothesis> solve_one(CnfInstance& inst) {
  const auto r = inst.timed_solve({});
  if (r == sat::Result::unknown) throw CapExceeded("SAT conflict budget exhausted");
  if (r == sat::Result::unsat) return std::nullopt;
  return decode_model(inst.solver_.model(), inst);
}

HypothesisSet enumerate_all(CnfInstance& inst, std::size_t cap) {
  if (cap < 1) throw InvalidArgument("enumeration cap must be at least 1");
  if (inst.cache_valid_ && inst.complete_) {
    HypothesisSet out{inst.cache_, false};
    if (out.models.size() > cap) {
      out.models.resize(cap);
      out.truncated = true;
    }
    return out;
  }
  // Blocking clauses hang off a selector so a later restart can retire them
  // while the solver keeps what it learnt.
  if (inst.selector_) inst.clause({neg(*inst.selector_)});
  const Var sel = inst.solver_.new_var();
  inst.selector_ = sel;
  const std::vector<Lit> assumptions{pos(sel)};
  const auto decision = inst.decision_vars();

  HypothesisSet out;
  std::vector<Lit> block;
  while (true) {
    const auto r = inst.timed_solve(assumptions);
    if (r == sat::Result::unknown) throw CapExceeded("SAT conflict budget exhausted during enumeration");
    if (r == sat::Result::unsat) break;
    if (out.models.size() == cap) {
      out.truncated = true;
      break;
    }
    out.models.push_back(decode_model(inst.solver_.model(), inst));
    block.assign(1, neg(sel));
    for (Var v : decision)
      if (inst.solver_.model_value(v)) block.push_back(neg(v));
    inst.clause(block);
  }
  inst.cache_ = out.models;
  inst.cache_valid_ = true;
  inst.complete_ = !out.truncated;
  return out;
}

void add_negatives_incremental(CnfInstance& inst, std::span<const NegativePair> pairs, const PrefixTree& tree) {
  const std::size_t first = inst.pairs_.size();
  inst.add_pairs(tree, pairs);
  if (!inst.cache_valid_) return;
  std::erase_if(inst.cache_, [&](const Hypothesis& h) { return !inst.satisfies_pairs(h, tree, first); });
}

Hypothesis decode_model(const std::vector<std::uint8_t>& assignment, const CnfInstance& inst) {
  const auto& params = inst.params();
  if (assignment.size() < inst.num_vars()) throw InvalidArgument("assignment shorter than the variable registry");
  Hypothesis h;
  h.num_nodes = params.u_max;
  h.num_props = params.n_ap;
  h.delta_u.assign(static_cast<std::size_t>(params.u_max * params.n_ap), 0);
  h.labeling.assign(static_cast<std::size_t>(inst.num_states()), 0);
  auto is_true = [&](Var v) { return assignment[static_cast<std::size_t>(v)] != 0; };
  for (NodeId i = 1; i <= params.u_max; ++i)
    for (PropId p = 1; p <= params.n_ap; ++p) {
      int count = 0;
      for (NodeId j = 1; j <= params.u_max; ++j)
        if (is_true(inst.trans(i, p, j))) {
          h.next(i, p) = j;
          ++count;
        }
      if (count != 1) throw InvariantViolation(fmt::format("trans({},{},.) has {} true entries", i, p, count));
    }
  for (StateId k = 1; k <= inst.num_states(); ++k) {
    int count = 0;
    for (PropId p = 1; p <= params.n_ap; ++p)
      if (is_true(inst.lab(p, k))) {
        h.labeling[static_cast<std::size_t>(k - 1)] = p;
        ++count;
      }
    if (count != 1) throw InvariantViolation(fmt::format("lab(.,{}) has {} true entries", k, count));
  }
  return h;
}

std::vector<int> hypothesis_code(const Hypothesis& h) {
  std::vector<int> code(h.labeling.begin(), h.labeling.end());
  code.insert(code.end(), h.delta_u.begin(), h.delta_u.end());
  return code;
}

namespace {

struct Canonicalizer {
  const Hypothesis& h;
  bool reachable_only;
  std::vector<PropId> sigma_inv;  // new prop -> old prop, 1-based
  std::vector<std::uint8_t> column_live;  // per new prop
  std::vector<std::uint8_t> row_live;     // per old node
  std::optional<std::vector<int>> best;

  // Numbers nodes row by row; a new node gets the next free number on first
  // appearance. Branches only when a row has no node assigned yet.
  void search(std::vector<int> rho, std::vector<int> inv, int next, int row, std::vector<int> code) {
    const int u = h.num_nodes;
    for (; row <= u; ++row) {
      if (inv[static_cast<std::size_t>(row)] == 0) {
        bool any = false;
        for (NodeId cand = 1; cand <= u; ++cand) {
          if (rho[static_cast<std::size_t>(cand)] != 0) continue;
          if (reachable_only && !row_live[static_cast<std::size_t>(cand)]) continue;
          any = true;
          auto r2 = rho;
          auto i2 = inv;
          r2[static_cast<std::size_t>(cand)] = next;
          i2[static_cast<std::size_t>(next)] = cand;
          search(std::move(r2), std::move(i2), next + 1, row, code);
        }
        if (any) return;
        // Only masked rows remain.
        code.resize(code.size() + static_cast<std::size_t>((u - row + 1) * h.num_props), 0);
        break;
      }
      const NodeId old = inv[static_cast<std::size_t>(row)];
      for (PropId q = 1; q <= h.num_props; ++q) {
        if (reachable_only && !column_live[static_cast<std::size_t>(q)]) {
          code.push_back(0);
          continue;
        }
        const NodeId target = h.next(old, sigma_inv[static_cast<std::size_t>(q)]);
        auto& num = rho[static_cast<std::size_t>(target)];
        if (num == 0) {
          num = next++;
          inv[static_cast<std::size_t>(num)] = target;
        }
        code.push_back(num);
      }
    }
    if (!best || code < *best) best = std::move(code);
  }
};

}  // namespace

std::vector<int> canonicalize(const Hypothesis& h, bool reachable_only) {
  const int u = h.num_nodes;
  const int ap = h.num_props;
  std::vector<PropId> used_order;
  std::vector<std::uint8_t> used(static_cast<std::size_t>(ap) + 1, 0);
  for (PropId p : h.labeling)
    if (!used[static_cast<std::size_t>(p)]) {
      used[static_cast<std::size_t>(p)] = 1;
      used_order.push_back(p);
    }
  std::vector<PropId> unused;
  for (PropId p = 1; p <= ap; ++p)
    if (!used[static_cast<std::size_t>(p)]) unused.push_back(p);

  std::vector<int> sigma(static_cast<std::size_t>(ap) + 1, 0);
  for (std::size_t i = 0; i < used_order.size(); ++i) sigma[static_cast<std::size_t>(used_order[i])] = static_cast<int>(i) + 1;
  std::vector<int> label_code;
  for (PropId p : h.labeling) label_code.push_back(sigma[static_cast<std::size_t>(p)]);

  std::vector<std::uint8_t> row_live(static_cast<std::size_t>(u) + 1, 1);
  if (reachable_only) {
    std::fill(row_live.begin(), row_live.end(), 0);
    std::vector<NodeId> stack{1};
    row_live[1] = 1;
    while (!stack.empty()) {
      const NodeId i = stack.back();
      stack.pop_back();
      for (PropId p : used_order) {
        const NodeId j = h.next(i, p);
        if (!row_live[static_cast<std::size_t>(j)]) {
          row_live[static_cast<std::size_t>(j)] = 1;
          stack.push_back(j);
        }
      }
    }
  }

  Canonicalizer canon{h, reachable_only, {}, {}, row_live, std::nullopt};
  canon.column_live.assign(static_cast<std::size_t>(ap) + 1, 0);
  for (std::size_t q = 1; q <= used_order.size(); ++q) canon.column_live[q] = 1;
  // Masked unused columns make their order irrelevant, hence one pass.
  std::sort(unused.begin(), unused.end());
  do {
    canon.sigma_inv.assign(1, 0);
    canon.sigma_inv.insert(canon.sigma_inv.end(), used_order.begin(), used_order.end());
    canon.sigma_inv.insert(canon.sigma_inv.end(), unused.begin(), unused.end());
    std::vector<int> rho(static_cast<std::size_t>(u) + 1, 0), inv(static_cast<std::size_t>(u) + 1, 0);
    rho[1] = 1;
    inv[1] = 1;
    canon.search(std::move(rho), std::move(inv), 2, 1, label_code);
  } while (!reachable_only && std::next_permutation(unused.begin(), unused.end()));
  return *canon.best;
}

Hypothesis rename(const Hypothesis& h, std::span<const int> rho, std::span<const int> sigma) {
  Hypothesis out = h;
  for (NodeId i = 1; i <= h.num_nodes; ++i)
    for (PropId p = 1; p <= h.num_props; ++p)
      out.next(rho[static_cast<std::size_t>(i)], sigma[static_cast<std::size_t>(p)]) = rho[static_cast<std::size_t>(h.next(i, p))];
  for (std::size_t k = 0; k < h.labeling.size(); ++k)
    out.labeling[k] = sigma[static_cast<std::size_t>(h.labeling[k])];
  return out;
}

std::vector<Hypothesis> orbit(const Hypothesis& h) {
  std::vector<int> rho(static_cast<std::size_t>(h.num_nodes) + 1), sigma(static_cast<std::size_t>(h.num_props) + 1);
  std::iota(rho.begin(), rho.end(), 0);
  std::set<std::vector<int>> seen;
  std::vector<Hypothesis> out;
  do {
    std::iota(sigma.begin(), sigma.end(), 0);
    do {
      Hypothesis g = rename(h, rho, sigma);
      if (seen.insert(hypothesis_code(g)).second) out.push_back(std::move(g));
    } while (std::next_permutation(sigma.begin() + 2, sigma.end()));
  } while (std::next_permutation(rho.begin() + 2, rho.end()));
  return out;
}

std::map<std::vector<int>, std::size_t> canonical_classes(const HypothesisSet& set, bool reachable_only) {
  std::map<std::vector<int>, std::size_t> out;
  for (const auto& h : set.models) ++out[canonicalize(h, reachable_only)];
  return out;
}

bool converged(const HypothesisSet& set) {
  if (set.truncated) throw InvalidArgument("convergence cannot be certified on a truncated hypothesis set");
  return canonical_classes(set).size() == 1;
}

bool contains_up_to_renaming(const HypothesisSet& set, const Hypothesis& h) {
  const auto target = canonicalize(h);
  return std::any_of(set.models.begin(), set.models.end(),
                     [&](const Hypothesis& g) { return canonicalize(g) == target; });
}

int sufficient_depth(int n_states, int u_max) {
  if (n_states < 1 || u_max < 1) throw InvalidArgument("sufficient_depth needs positive inputs");
  return n_states * u_max * u_max;
}

void write_hypotheses_json(std::ostream& out, const HypothesisSet& set) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& h : set.models) {
    nlohmann::json edges = nlohmann::json::array();
    for (NodeId i = 1; i <= h.num_nodes; ++i)
      for (PropId p = 1; p <= h.num_props; ++p) edges.push_back({i, p, h.next(i, p)});
    records.push_back({{"nodes", h.num_nodes}, {"props", h.num_props}, {"labeling", h.labeling}, {"delta_u", edges}});
  }
  out << nlohmann::json{{"truncated", set.truncated}, {"hypotheses", records}}.dump(1) << '\n';
}

}  // namespace rmi
