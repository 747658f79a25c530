#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>

#include "rmi/errors.hpp"
#include "rmi/fixture.hpp"
#include "rmi/traces.hpp"
#include "test_util.hpp"

using namespace rmi;

namespace {

// Brute-force count of feasible trajectories of exactly len states.
std::size_t count_by_walking(const MdpModel& mdp, int len, bool compress) {
  std::size_t total = 0;
  std::vector<StateId> path;
  auto walk = [&](auto&& self) -> void {
    if (static_cast<int>(path.size()) == len) {
      ++total;
      return;
    }
    for (StateId t : mdp.successors(path.back())) {
      if (compress && t == path.back()) continue;
      path.push_back(t);
      self(self);
      path.pop_back();
    }
  };
  for (StateId s : mdp.initial_states()) {
    path = {s};
    walk(walk);
  }
  return total;
}

}  // namespace

TEST_SUITE("traces") {
  TEST_CASE("line3 prefix counts") {
    const Fixture fx = builtin_fixture("line3");
    CHECK(enumerate_prefix_tree(fx.mdp, 1, false).size() == 3);
    const PrefixTree two = enumerate_prefix_tree(fx.mdp, 2, false);
    CHECK(two.size() == 9);
    CHECK(two.count_at_depth(2) == 6);
    CHECK(two.depth_histogram() == std::vector<std::size_t>{0, 3, 6});
    // Compressed: 1-2, 2-1, 2-3, 3-2.
    CHECK(enumerate_prefix_tree(fx.mdp, 2, true).size() == 7);
  }

  TEST_CASE("tree counts agree with walking and with the counting recursion") {
    for (const auto& name : builtin_fixture_names()) {
      const Fixture fx = builtin_fixture(name);
      for (bool compress : {false, true}) {
        const PrefixTree tree = enumerate_prefix_tree(fx.mdp, 4, compress);
        for (int len = 1; len <= 4; ++len) {
          const auto walked = count_by_walking(fx.mdp, len, compress);
          CHECK(tree.count_at_depth(len) == walked);
          CHECK(count_trajectories(fx.mdp, len, compress) == doctest::Approx(static_cast<double>(walked)));
        }
      }
    }
  }

  TEST_CASE("patrol branch count at depth 6") {
    const Fixture fx = builtin_fixture("patrolABCD");
    CHECK(count_trajectories(fx.mdp, 6, false) == 6895.0);
    CHECK(enumerate_prefix_tree(fx.mdp, 6, false).count_at_depth(6) == 6895);
    CHECK(count_trajectories(fx.mdp, 6, true) == 2734.0);
  }

  TEST_CASE("tree insert, find and trajectory") {
    PrefixTree plain(false), packed(true);
    const std::vector<StateId> tau{1, 1, 2, 2, 2, 3, 1};
    const auto n = plain.insert(tau);
    CHECK(plain.trajectory(n) == tau);
    CHECK(plain.size() == tau.size());
    CHECK(plain.find(tau) == n);
    CHECK(plain.find(std::vector<StateId>{1, 2}) == PrefixTree::kNone);
    const auto m = packed.insert(tau);
    CHECK(packed.trajectory(m) == std::vector<StateId>{1, 2, 3, 1});
    CHECK(packed.find(tau) == m);
    CHECK(packed.insert(std::vector<StateId>{1, 2, 2}) == packed.find(std::vector<StateId>{1, 2}));
    PrefixTree tiny(false, 2);
    CHECK_THROWS_AS(tiny.insert(std::vector<StateId>{1, 2, 3}), CapExceeded);
  }

  TEST_CASE("parents precede children") {
    const PrefixTree tree = enumerate_prefix_tree(builtin_fixture("pick_n_drop").mdp, 4, true);
    for (PrefixTree::Index n = 1; n <= tree.size(); ++n) {
      CHECK(tree.parent(n) < n);
      CHECK(tree.depth(n) == tree.depth(tree.parent(n)) + 1);
    }
  }

  TEST_CASE("line3 signature classes") {
    test::World w(builtin_fixture("line3"));
    const PrefixTree tree = enumerate_prefix_tree(w.fixture.mdp, 3, false);
    const SignaturePartition part = compute_signatures(tree, w.oracle);
    REQUIRE(part.num_classes() == 2);
    CHECK(part.separates(0, 1));
    // Prefixes reaching node 2 are exactly those containing state 3.
    for (PrefixTree::Index n = 1; n <= tree.size(); ++n) {
      const auto tau = tree.trajectory(n);
      const bool reached = std::find(tau.begin(), tau.end(), 3) != tau.end();
      const auto first = tree.trajectory(1);
      const bool first_reached = std::find(first.begin(), first.end(), 3) != first.end();
      CHECK((part.class_of[n] == part.class_of[1]) == (reached == first_reached));
    }
    std::size_t total = 0;
    for (auto s : part.class_sizes) total += s;
    CHECK(total == tree.size());
    CHECK(part.negative_pair_count() == static_cast<double>(part.class_sizes[0] * part.class_sizes[1]));
  }

  TEST_CASE("a single-node truth yields one class") {
    Fixture fx = builtin_fixture("line3");
    fx.truth.model = test::single_node(3);
    fx.truth.delta_r = std::vector<double>{0.0};
    fx.truth.prop_names = {"a"};
    test::World w(std::move(fx));
    const PrefixTree tree = enumerate_prefix_tree(w.fixture.mdp, 4, false);
    const SignaturePartition part = compute_signatures(tree, w.oracle);
    CHECK(part.num_classes() == 1);
    CHECK(part.negative_pair_count() == 0.0);
    CHECK(materialize_negatives(part, tree, NegativeMode::everything()).empty());
  }

  TEST_CASE("separated classes of sizes 3 and 4 give 12 pairs") {
    PrefixTree tree(false);
    for (StateId s = 1; s <= 7; ++s) tree.insert(std::vector<StateId>{s});
    const std::vector<double> p{0.2, 0.8}, q{0.7, 0.3};
    SignaturePartition part;
    part.class_of = {-1, 0, 0, 0, 1, 1, 1, 1};
    part.representatives = {RowMap{{std::span<const double>(p)}}, RowMap{{std::span<const double>(q)}}};
    part.class_sizes = {3, 4};
    part.distinguishable = {0, 1, 1, 0};
    CHECK(part.negative_pair_count() == 12.0);
    const auto pairs = materialize_negatives(part, tree, NegativeMode::everything());
    CHECK(pairs.size() == 12);
    std::set<std::pair<PrefixTree::Index, PrefixTree::Index>> distinct;
    for (const auto& pr : pairs) {
      CHECK(part.class_of[pr.tau] != part.class_of[pr.tau_prime]);
      CHECK(pr.witness == Witness{1, 1});
      distinct.emplace(std::min(pr.tau, pr.tau_prime), std::max(pr.tau, pr.tau_prime));
    }
    CHECK(distinct.size() == 12);
    part.distinguishable = {0, 0, 0, 0};
    CHECK(part.negative_pair_count() == 0.0);
  }

  TEST_CASE("every materialized pair is re-confirmed by the oracle") {
    test::World w(builtin_fixture("pick_n_drop"));
    const PrefixTree tree = enumerate_prefix_tree(w.fixture.mdp, 3, true);
    const SignaturePartition part = compute_signatures(tree, w.oracle);
    const auto pairs = materialize_negatives(part, tree, NegativeMode::sample(50, 3));
    REQUIRE(!pairs.empty());
    for (const auto& pr : pairs) {
      const auto a = w.oracle.query(tree.trajectory(pr.tau), pr.witness.state);
      const auto b = w.oracle.query(tree.trajectory(pr.tau_prime), pr.witness.state);
      REQUIRE(a);
      REQUIRE(b);
      const auto k = static_cast<std::size_t>(pr.witness.action - 1);
      CHECK(std::abs((*a)[k] - (*b)[k]) > part.eps);
    }
  }

  TEST_CASE("classes refine consistently with depth") {
    test::World w(builtin_fixture("patrolABCD"));
    const PrefixTree small = enumerate_prefix_tree(w.fixture.mdp, 3, true);
    const PrefixTree big = enumerate_prefix_tree(w.fixture.mdp, 4, true);
    const auto ps = compute_signatures(small, w.oracle);
    const auto pb = compute_signatures(big, w.oracle);
    for (PrefixTree::Index a = 1; a <= small.size(); a += 7)
      for (PrefixTree::Index b = 1; b <= small.size(); b += 3) {
        const auto ba = big.find(small.trajectory(a)), bb = big.find(small.trajectory(b));
        CHECK((ps.class_of[a] == ps.class_of[b]) == (pb.class_of[ba] == pb.class_of[bb]));
      }
  }

  TEST_CASE("extend_signatures matches a fresh classification") {
    test::World w(builtin_fixture("patrolABCD"));
    PrefixTree tree = enumerate_prefix_tree(w.fixture.mdp, 2, true);
    SignaturePartition part = compute_signatures(tree, w.oracle);
    tree.insert(std::vector<StateId>{4, 8, 12, 16, 15, 11, 10, 9});
    tree.insert(std::vector<StateId>{16, 12, 8, 4, 3, 2, 1, 5, 9});
    extend_signatures(part, tree, w.oracle);
    const auto fresh = compute_signatures(tree, w.oracle);
    REQUIRE(part.class_of.size() == fresh.class_of.size());
    CHECK(part.num_classes() == fresh.num_classes());
    for (PrefixTree::Index a = 1; a <= tree.size(); ++a)
      for (PrefixTree::Index b = 1; b <= tree.size(); ++b)
        CHECK((part.class_of[a] == part.class_of[b]) == (fresh.class_of[a] == fresh.class_of[b]));
  }

  TEST_CASE("terminal-pair sampling is deterministic and bounded") {
    test::World w(builtin_fixture("patrolABCD"));
    const PrefixTree tree = enumerate_prefix_tree(w.fixture.mdp, 4, true);
    const SignaturePartition part = compute_signatures(tree, w.oracle);
    const auto all = materialize_negatives(part, tree, NegativeMode::everything());
    CHECK(static_cast<double>(all.size()) == part.negative_pair_count());
    const auto a = materialize_negatives(part, tree, NegativeMode::sample(20, 9));
    const auto b = materialize_negatives(part, tree, NegativeMode::sample(20, 9));
    const auto c = materialize_negatives(part, tree, NegativeMode::sample(20, 10));
    CHECK(a == b);
    CHECK(a != c);
    CHECK(a.size() < all.size());
    std::map<std::pair<StateId, StateId>, std::size_t> per_group;
    std::set<std::pair<PrefixTree::Index, PrefixTree::Index>> seen;
    for (const auto& pr : a) {
      const auto s = tree.state(pr.tau), t = tree.state(pr.tau_prime);
      ++per_group[{std::min(s, t), std::max(s, t)}];
      CHECK(part.class_of[pr.tau] != part.class_of[pr.tau_prime]);
      CHECK(seen.emplace(std::min(pr.tau, pr.tau_prime), std::max(pr.tau, pr.tau_prime)).second);
    }
    for (const auto& [key, count] : per_group) CHECK(count <= 20);
    // A per-group size above every group size returns all pairs.
    CHECK(materialize_negatives(part, tree, NegativeMode::sample(1'000'000, 1)).size() == all.size());
  }

  TEST_CASE("tree and trace cache round-trip") {
    test::World w(builtin_fixture("line3"));
    const PrefixTree tree = enumerate_prefix_tree(w.fixture.mdp, 4, true);
    std::stringstream buf;
    tree.write_binary(buf);
    const PrefixTree back = PrefixTree::read_binary(buf);
    REQUIRE(back.size() == tree.size());
    for (PrefixTree::Index n = 1; n <= tree.size(); ++n) CHECK(back.trajectory(n) == tree.trajectory(n));
    CHECK(back.compressed());

    const auto part = compute_signatures(tree, w.oracle);
    const auto pairs = materialize_negatives(part, tree, NegativeMode::everything());
    const auto path = (std::filesystem::temp_directory_path() / "rmi_trace_cache_test.bin").string();
    const TraceCacheKey key{w.fixture.hash(), 4, kEpsPolicy};
    write_trace_cache(path, key, tree, pairs);
    PrefixTree t2;
    std::vector<NegativePair> p2;
    CHECK(read_trace_cache(path, key, t2, p2));
    CHECK(p2 == pairs);
    CHECK(t2.size() == tree.size());
    CHECK_FALSE(read_trace_cache(path, TraceCacheKey{key.fixture_hash, 5, kEpsPolicy}, t2, p2));
    std::remove(path.c_str());
    CHECK_FALSE(read_trace_cache(path, key, t2, p2));

    std::stringstream junk("not a tree");
    CHECK_THROWS(PrefixTree::read_binary(junk));
  }
}
