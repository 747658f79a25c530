#pragma once

// Incremental CDCL SAT solver.
//
// Two-watched-literal propagation, 1UIP learning with local minimization,
// VSIDS branching with phase saving, Luby restarts and LBD-driven learnt
// clause reduction. Clauses may be added between solve() calls, which is
// what the model enumerator and the active refinement loop rely on.

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace rmi::sat {

using Var = int;

/// A literal is 2*var + sign, sign = 1 for the negated literal.
struct Lit {
  std::uint32_t x = 0;

  static constexpr Lit make(Var v, bool negated = false) {
    return Lit{static_cast<std::uint32_t>(2 * v + (negated ? 1 : 0))};
  }
  constexpr Var var() const { return static_cast<Var>(x >> 1); }
  constexpr bool negated() const { return (x & 1u) != 0; }
  constexpr Lit operator~() const { return Lit{x ^ 1u}; }
  constexpr bool operator==(const Lit&) const = default;
  constexpr auto operator<=>(const Lit&) const = default;
};

inline constexpr Lit pos(Var v) { return Lit::make(v, false); }
inline constexpr Lit neg(Var v) { return Lit::make(v, true); }

enum class Result { sat, unsat, unknown };

struct SolverStats {
  std::uint64_t solves = 0;
  std::uint64_t decisions = 0;
  std::uint64_t propagations = 0;
  std::uint64_t conflicts = 0;
  std::uint64_t restarts = 0;
  std::uint64_t learnt_clauses = 0;
};

class Solver {
 public:
  Solver();

  Var new_var();
  void reserve_vars(int n);
  int num_vars() const { return static_cast<int>(assigns_.size()); }
  std::size_t num_clauses() const { return num_original_; }

  /// Adds a permanent clause. Returns false once the formula is known to be
  /// unsatisfiable at the root level.
  bool add_clause(std::span<const Lit> lits);
  bool add_clause(std::initializer_list<Lit> lits) {
    return add_clause(std::span<const Lit>(lits.begin(), lits.size()));
  }

  /// Solves under the given assumptions. Returns Result::unknown when the
  /// conflict budget is exhausted.
  Result solve(std::span<const Lit> assumptions = {});

  /// Value of a variable in the last model found.
  bool model_value(Var v) const { return model_[static_cast<std::size_t>(v)] != 0; }
  const std::vector<std::uint8_t>& model() const { return model_; }

  bool okay() const { return ok_; }

  /// Per-call conflict limit; negative means unlimited.
  void set_conflict_budget(std::int64_t budget) { conflict_budget_ = budget; }

  /// With a seed, decisions take a random sign instead of the saved phase.
  void set_random_phase(std::optional<std::uint64_t> seed) {
    random_phase_ = seed.has_value();
    if (seed) phase_rng_.seed(*seed);
  }

  const SolverStats& stats() const { return stats_; }

 private:
  using CRef = std::uint32_t;
  static constexpr CRef kNoReason = 0xffffffffu;
  static constexpr std::uint8_t kTrue = 0, kFalse = 1, kUndef = 2;

  struct Watcher {
    CRef cref;
    Lit blocker;
  };

  // Arena layout per clause: [header][lbd][lit_0]...[lit_{n-1}],
  // header = size << 2 | learnt << 1 | deleted.
  std::uint32_t clause_size(CRef c) const { return arena_[c] >> 2; }
  bool clause_learnt(CRef c) const { return (arena_[c] & 2u) != 0; }
  bool clause_deleted(CRef c) const { return (arena_[c] & 1u) != 0; }
  Lit* clause_lits(CRef c) { return reinterpret_cast<Lit*>(&arena_[c + 2]); }
  const Lit* clause_lits(CRef c) const { return reinterpret_cast<const Lit*>(&arena_[c + 2]); }
  std::uint32_t& clause_lbd(CRef c) { return arena_[c + 1]; }

  CRef alloc_clause(std::span<const Lit> lits, bool learnt);
  void attach_clause(CRef c);

  std::uint8_t value(Lit p) const {
    std::uint8_t v = assigns_[static_cast<std::size_t>(p.var())];
    return v == kUndef ? kUndef : static_cast<std::uint8_t>(v ^ (p.negated() ? 1 : 0));
  }
  int level(Var v) const { return level_[static_cast<std::size_t>(v)]; }
  int decision_level() const { return static_cast<int>(trail_lim_.size()); }

  void unchecked_enqueue(Lit p, CRef reason);
  CRef propagate();
  void analyze(CRef confl, std::vector<Lit>& out_learnt, int& out_btlevel, std::uint32_t& out_lbd);
  bool lit_redundant(Lit p, std::uint32_t abstract_levels);
  void cancel_until(int level);
  Lit pick_branch_lit();
  Result search(std::int64_t nof_conflicts, std::span<const Lit> assumptions);
  void reduce_db();
  void collect_garbage();

  void var_bump(Var v);
  void var_decay() { var_inc_ *= (1.0 / 0.95); }

  // Binary max-heap over activity.
  void heap_insert(Var v);
  void heap_up(std::size_t i);
  void heap_down(std::size_t i);
  Var heap_pop();
  bool heap_contains(Var v) const { return heap_index_[static_cast<std::size_t>(v)] >= 0; }

  bool ok_ = true;
  std::vector<std::uint32_t> arena_;
  std::vector<CRef> learnts_;
  std::size_t num_original_ = 0;
  std::size_t wasted_ = 0;

  std::vector<std::vector<Watcher>> watches_;  // indexed by literal
  std::vector<std::uint8_t> assigns_;
  std::vector<std::uint8_t> polarity_;
  std::vector<int> level_;
  std::vector<CRef> reason_;
  std::vector<double> activity_;
  std::vector<std::uint8_t> seen_;
  std::vector<Lit> trail_;
  std::vector<int> trail_lim_;
  std::size_t qhead_ = 0;

  std::vector<Var> heap_;
  std::vector<int> heap_index_;
  double var_inc_ = 1.0;

  std::vector<std::uint8_t> model_;
  std::vector<Lit> analyze_stack_;
  std::vector<Lit> analyze_toclear_;
  std::vector<std::uint32_t> lbd_stamp_;
  std::uint32_t lbd_counter_ = 0;

  std::int64_t conflict_budget_ = -1;
  bool random_phase_ = false;
  std::mt19937_64 phase_rng_;
  std::uint64_t next_reduce_ = 2000;
  std::uint64_t reduce_rounds_ = 0;
  SolverStats stats_;
};

}  // namespace rmi::sat
