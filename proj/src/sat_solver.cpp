#include "rmi/sat_solver.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

namespace rmi::sat {

namespace {

constexpr Lit kUndefLit{0xffffffffu};

double luby(double y, int x) {
  int size = 1;
  int seq = 0;
  for (; size < x + 1; seq++, size = 2 * size + 1) {
  }
  while (size - 1 != x) {
    size = (size - 1) >> 1;
    seq--;
    x = x % size;
  }
  return std::pow(y, seq);
}

}  // namespace

Solver::Solver() { arena_.reserve(1 << 16); }

Var Solver::new_var() {
  const Var v = num_vars();
  assigns_.push_back(kUndef);
  polarity_.push_back(1);
  level_.push_back(0);
  reason_.push_back(kNoReason);
  activity_.push_back(0.0);
  seen_.push_back(0);
  heap_index_.push_back(-1);
  watches_.emplace_back();
  watches_.emplace_back();
  heap_insert(v);
  return v;
}

void Solver::reserve_vars(int n) {
  const auto sz = static_cast<std::size_t>(n);
  assigns_.reserve(sz);
  polarity_.reserve(sz);
  level_.reserve(sz);
  reason_.reserve(sz);
  activity_.reserve(sz);
  seen_.reserve(sz);
  heap_index_.reserve(sz);
  watches_.reserve(2 * sz);
}

Solver::CRef Solver::alloc_clause(std::span<const Lit> lits, bool learnt) {
  const auto c = static_cast<CRef>(arena_.size());
  arena_.push_back(static_cast<std::uint32_t>(lits.size()) << 2 | (learnt ? 2u : 0u));
  arena_.push_back(0);
  for (Lit l : lits) arena_.push_back(l.x);
  return c;
}

void Solver::attach_clause(CRef c) {
  const Lit* lits = clause_lits(c);
  watches_[(~lits[0]).x].push_back({c, lits[1]});
  watches_[(~lits[1]).x].push_back({c, lits[0]});
}

bool Solver::add_clause(std::span<const Lit> input) {
  assert(decision_level() == 0);
  if (!ok_) return false;

  std::vector<Lit> lits(input.begin(), input.end());
  std::sort(lits.begin(), lits.end());
  Lit prev = kUndefLit;
  std::size_t j = 0;
  for (Lit l : lits) {
    if (value(l) == kTrue || l == ~prev) return true;  // satisfied or tautology
    if (value(l) != kFalse && l != prev) lits[j++] = prev = l;
  }
  lits.resize(j);

  ++num_original_;
  if (lits.empty()) {
    ok_ = false;
    return false;
  }
  if (lits.size() == 1) {
    unchecked_enqueue(lits[0], kNoReason);
    if (propagate() != kNoReason) ok_ = false;
    return ok_;
  }
  const CRef c = alloc_clause(lits, false);
  attach_clause(c);
  return true;
}

void Solver::unchecked_enqueue(Lit p, CRef reason) {
  const auto v = static_cast<std::size_t>(p.var());
  assigns_[v] = p.negated() ? kFalse : kTrue;
  level_[v] = decision_level();
  reason_[v] = reason;
  trail_.push_back(p);
}

Solver::CRef Solver::propagate() {
  CRef confl = kNoReason;
  while (qhead_ < trail_.size()) {
    const Lit p = trail_[qhead_++];
    const Lit false_lit = ~p;
    auto& ws = watches_[p.x];
    std::size_t i = 0, j = 0;
    const std::size_t n = ws.size();
    ++stats_.propagations;

    while (i < n) {
      const Watcher w = ws[i];
      if (value(w.blocker) == kTrue) {
        ws[j++] = ws[i++];
        continue;
      }
      const CRef c = w.cref;
      if (clause_deleted(c)) {
        ++i;
        continue;
      }
      Lit* lits = clause_lits(c);
      if (lits[0] == false_lit) std::swap(lits[0], lits[1]);
      ++i;

      const Lit first = lits[0];
      const Watcher nw{c, first};
      if (first != w.blocker && value(first) == kTrue) {
        ws[j++] = nw;
        continue;
      }

      const std::uint32_t size = clause_size(c);
      bool moved = false;
      for (std::uint32_t k = 2; k < size; ++k) {
        if (value(lits[k]) != kFalse) {
          lits[1] = lits[k];
          lits[k] = false_lit;
          watches_[(~lits[1]).x].push_back(nw);
          moved = true;
          break;
        }
      }
      if (moved) continue;

      ws[j++] = nw;
      if (value(first) == kFalse) {
        confl = c;
        qhead_ = trail_.size();
        while (i < n) ws[j++] = ws[i++];
      } else {
        unchecked_enqueue(first, c);
      }
    }
    ws.resize(j);
    if (confl != kNoReason) break;
  }
  return confl;
}

bool Solver::lit_redundant(Lit p, std::uint32_t abstract_levels) {
  analyze_stack_.clear();
  analyze_stack_.push_back(p);
  const std::size_t top = analyze_toclear_.size();
  while (!analyze_stack_.empty()) {
    const Lit q = analyze_stack_.back();
    analyze_stack_.pop_back();
    const CRef c = reason_[static_cast<std::size_t>(q.var())];
    const Lit* lits = clause_lits(c);
    const std::uint32_t size = clause_size(c);
    for (std::uint32_t i = 1; i < size; ++i) {
      const Lit l = lits[i];
      const auto v = static_cast<std::size_t>(l.var());
      if (seen_[v] || level(l.var()) == 0) continue;
      if (reason_[v] != kNoReason && ((1u << (level(l.var()) & 31)) & abstract_levels) != 0) {
        seen_[v] = 1;
        analyze_stack_.push_back(l);
        analyze_toclear_.push_back(l);
      } else {
        for (std::size_t k = top; k < analyze_toclear_.size(); ++k)
          seen_[static_cast<std::size_t>(analyze_toclear_[k].var())] = 0;
        analyze_toclear_.resize(top);
        return false;
      }
    }
  }
  return true;
}

void Solver::analyze(CRef confl, std::vector<Lit>& out_learnt, int& out_btlevel,
                     std::uint32_t& out_lbd) {
  int path_count = 0;
  Lit p = kUndefLit;
  out_learnt.clear();
  out_learnt.push_back(kUndefLit);
  auto index = static_cast<std::ptrdiff_t>(trail_.size()) - 1;

  do {
    assert(confl != kNoReason);
    const Lit* lits = clause_lits(confl);
    const std::uint32_t size = clause_size(confl);
    for (std::uint32_t j = (p == kUndefLit) ? 0 : 1; j < size; ++j) {
      const Lit q = lits[j];
      const auto v = static_cast<std::size_t>(q.var());
      if (!seen_[v] && level(q.var()) > 0) {
        var_bump(q.var());
        seen_[v] = 1;
        if (level(q.var()) >= decision_level())
          ++path_count;
        else
          out_learnt.push_back(q);
      }
    }
    while (!seen_[static_cast<std::size_t>(trail_[static_cast<std::size_t>(index--)].var())]) {
    }
    p = trail_[static_cast<std::size_t>(index + 1)];
    confl = reason_[static_cast<std::size_t>(p.var())];
    seen_[static_cast<std::size_t>(p.var())] = 0;
    --path_count;
  } while (path_count > 0);
  out_learnt[0] = ~p;

  // Recursive minimization.
  analyze_toclear_.assign(out_learnt.begin(), out_learnt.end());
  std::uint32_t abstract_levels = 0;
  for (std::size_t i = 1; i < out_learnt.size(); ++i)
    abstract_levels |= 1u << (level(out_learnt[i].var()) & 31);
  std::size_t j = 1;
  for (std::size_t i = 1; i < out_learnt.size(); ++i) {
    const auto v = static_cast<std::size_t>(out_learnt[i].var());
    if (reason_[v] == kNoReason || !lit_redundant(out_learnt[i], abstract_levels))
      out_learnt[j++] = out_learnt[i];
  }
  out_learnt.resize(j);

  if (out_learnt.size() == 1) {
    out_btlevel = 0;
  } else {
    std::size_t max_i = 1;
    for (std::size_t i = 2; i < out_learnt.size(); ++i)
      if (level(out_learnt[i].var()) > level(out_learnt[max_i].var())) max_i = i;
    std::swap(out_learnt[1], out_learnt[max_i]);
    out_btlevel = level(out_learnt[1].var());
  }

  ++lbd_counter_;
  if (lbd_stamp_.size() < static_cast<std::size_t>(decision_level()) + 1)
    lbd_stamp_.resize(static_cast<std::size_t>(decision_level()) + 1, 0);
  out_lbd = 0;
  for (Lit l : out_learnt) {
    const auto lv = static_cast<std::size_t>(level(l.var()));
    if (lbd_stamp_[lv] != lbd_counter_) {
      lbd_stamp_[lv] = lbd_counter_;
      ++out_lbd;
    }
  }

  for (Lit l : analyze_toclear_) seen_[static_cast<std::size_t>(l.var())] = 0;
}

void Solver::cancel_until(int lvl) {
  if (decision_level() <= lvl) return;
  const auto lim = static_cast<std::size_t>(trail_lim_[static_cast<std::size_t>(lvl)]);
  for (std::size_t c = trail_.size(); c-- > lim;) {
    const Lit p = trail_[c];
    const auto v = static_cast<std::size_t>(p.var());
    assigns_[v] = kUndef;
    reason_[v] = kNoReason;
    polarity_[v] = p.negated() ? 1 : 0;
    if (!heap_contains(p.var())) heap_insert(p.var());
  }
  qhead_ = lim;
  trail_.resize(lim);
  trail_lim_.resize(static_cast<std::size_t>(lvl));
}

Lit Solver::pick_branch_lit() {
  while (!heap_.empty()) {
    const Var v = heap_pop();
    if (assigns_[static_cast<std::size_t>(v)] != kUndef) continue;
    if (random_phase_) return Lit::make(v, (phase_rng_() & 1u) != 0);
    return Lit::make(v, polarity_[static_cast<std::size_t>(v)] != 0);
  }
  return kUndefLit;
}

void Solver::reduce_db() {
  ++reduce_rounds_;
  next_reduce_ = stats_.conflicts + 2000 + 300 * reduce_rounds_;

  std::vector<CRef> candidates;
  std::vector<CRef> kept;
  for (CRef c : learnts_) {
    if (clause_deleted(c)) continue;
    const Lit first = clause_lits(c)[0];
    const bool locked = value(first) == kTrue && reason_[static_cast<std::size_t>(first.var())] == c;
    if (locked || clause_lbd(c) <= 2)
      kept.push_back(c);
    else
      candidates.push_back(c);
  }
  std::sort(candidates.begin(), candidates.end(), [this](CRef a, CRef b) {
    if (clause_lbd(a) != clause_lbd(b)) return clause_lbd(a) > clause_lbd(b);
    return a < b;
  });
  const std::size_t drop = candidates.size() / 2;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (i < drop) {
      arena_[candidates[i]] |= 1u;
      wasted_ += clause_size(candidates[i]) + 2;
    } else {
      kept.push_back(candidates[i]);
    }
  }
  learnts_ = std::move(kept);
}

void Solver::collect_garbage() {
  assert(decision_level() == 0);
  std::vector<std::uint32_t> fresh;
  fresh.reserve(arena_.size() - wasted_);
  learnts_.clear();
  for (auto& ws : watches_) ws.clear();

  std::size_t pos = 0;
  while (pos < arena_.size()) {
    const auto c = static_cast<CRef>(pos);
    const std::uint32_t size = clause_size(c);
    pos += size + 2;
    if (clause_deleted(c)) continue;
    const Lit* lits = clause_lits(c);
    bool satisfied = false;
    for (std::uint32_t k = 0; k < size && !satisfied; ++k) satisfied = value(lits[k]) == kTrue;
    if (satisfied) continue;
    const auto nc = static_cast<CRef>(fresh.size());
    fresh.insert(fresh.end(), arena_.begin() + c, arena_.begin() + c + size + 2);
    if ((fresh[nc] & 2u) != 0) learnts_.push_back(nc);
  }
  arena_ = std::move(fresh);
  wasted_ = 0;
  for (Lit p : trail_) reason_[static_cast<std::size_t>(p.var())] = kNoReason;

  pos = 0;
  while (pos < arena_.size()) {
    const auto c = static_cast<CRef>(pos);
    pos += clause_size(c) + 2;
    attach_clause(c);
  }
}

Result Solver::search(std::int64_t nof_conflicts, std::span<const Lit> assumptions) {
  std::int64_t conflict_count = 0;
  std::vector<Lit> learnt;
  for (;;) {
    const CRef confl = propagate();
    if (confl != kNoReason) {
      ++stats_.conflicts;
      ++conflict_count;
      if (decision_level() == 0) {
        ok_ = false;
        return Result::unsat;
      }
      int bt = 0;
      std::uint32_t lbd = 0;
      analyze(confl, learnt, bt, lbd);
      cancel_until(bt);
      if (learnt.size() == 1) {
        unchecked_enqueue(learnt[0], kNoReason);
      } else {
        const CRef c = alloc_clause(learnt, true);
        clause_lbd(c) = lbd;
        learnts_.push_back(c);
        attach_clause(c);
        unchecked_enqueue(learnt[0], c);
        ++stats_.learnt_clauses;
      }
      var_decay();
      continue;
    }

    if (nof_conflicts >= 0 && conflict_count >= nof_conflicts) {
      cancel_until(0);
      ++stats_.restarts;
      return Result::unknown;
    }
    if (stats_.conflicts >= next_reduce_) reduce_db();

    Lit next = kUndefLit;
    while (static_cast<std::size_t>(decision_level()) < assumptions.size()) {
      const Lit p = assumptions[static_cast<std::size_t>(decision_level())];
      if (value(p) == kTrue) {
        trail_lim_.push_back(static_cast<int>(trail_.size()));
      } else if (value(p) == kFalse) {
        return Result::unsat;
      } else {
        next = p;
        break;
      }
    }
    if (next == kUndefLit) {
      next = pick_branch_lit();
      if (next == kUndefLit) return Result::sat;
    }
    ++stats_.decisions;
    trail_lim_.push_back(static_cast<int>(trail_.size()));
    unchecked_enqueue(next, kNoReason);
  }
}

Result Solver::solve(std::span<const Lit> assumptions) {
  model_.clear();
  if (!ok_) return Result::unsat;
  ++stats_.solves;
  const std::uint64_t start_conflicts = stats_.conflicts;

  Result status = Result::unknown;
  int restarts = 0;
  while (status == Result::unknown) {
    if (conflict_budget_ >= 0 &&
        stats_.conflicts - start_conflicts >= static_cast<std::uint64_t>(conflict_budget_))
      break;
    if (decision_level() == 0 && wasted_ > arena_.size() / 4 && wasted_ > (1u << 16))
      collect_garbage();
    const auto budget = static_cast<std::int64_t>(luby(2.0, restarts) * 100.0);
    status = search(budget, assumptions);
    ++restarts;
  }

  if (status == Result::sat) {
    model_.resize(assigns_.size());
    for (std::size_t v = 0; v < assigns_.size(); ++v) model_[v] = assigns_[v] == kTrue ? 1 : 0;
  }
  cancel_until(0);
  return status;
}

void Solver::var_bump(Var v) {
  auto& a = activity_[static_cast<std::size_t>(v)];
  a += var_inc_;
  if (a > 1e100) {
    for (auto& x : activity_) x *= 1e-100;
    var_inc_ *= 1e-100;
  }
  if (heap_contains(v)) heap_up(static_cast<std::size_t>(heap_index_[static_cast<std::size_t>(v)]));
}

void Solver::heap_insert(Var v) {
  heap_index_[static_cast<std::size_t>(v)] = static_cast<int>(heap_.size());
  heap_.push_back(v);
  heap_up(heap_.size() - 1);
}

void Solver::heap_up(std::size_t i) {
  const Var v = heap_[i];
  const double act = activity_[static_cast<std::size_t>(v)];
  while (i > 0) {
    const std::size_t parent = (i - 1) >> 1;
    if (activity_[static_cast<std::size_t>(heap_[parent])] >= act) break;
    heap_[i] = heap_[parent];
    heap_index_[static_cast<std::size_t>(heap_[i])] = static_cast<int>(i);
    i = parent;
  }
  heap_[i] = v;
  heap_index_[static_cast<std::size_t>(v)] = static_cast<int>(i);
}

void Solver::heap_down(std::size_t i) {
  const Var v = heap_[i];
  const double act = activity_[static_cast<std::size_t>(v)];
  const std::size_t n = heap_.size();
  for (;;) {
    std::size_t child = 2 * i + 1;
    if (child >= n) break;
    if (child + 1 < n && activity_[static_cast<std::size_t>(heap_[child + 1])] >
                             activity_[static_cast<std::size_t>(heap_[child])])
      ++child;
    if (activity_[static_cast<std::size_t>(heap_[child])] <= act) break;
    heap_[i] = heap_[child];
    heap_index_[static_cast<std::size_t>(heap_[i])] = static_cast<int>(i);
    i = child;
  }
  heap_[i] = v;
  heap_index_[static_cast<std::size_t>(v)] = static_cast<int>(i);
}

Var Solver::heap_pop() {
  const Var top = heap_.front();
  heap_index_[static_cast<std::size_t>(top)] = -1;
  const Var last = heap_.back();
  heap_.pop_back();
  if (!heap_.empty()) {
    heap_[0] = last;
    heap_index_[static_cast<std::size_t>(last)] = 0;
    heap_down(0);
  }
  return top;
}

}  // namespace rmi::sat
