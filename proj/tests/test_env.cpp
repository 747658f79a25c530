#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "rmi/env.hpp"
#include "rmi/errors.hpp"
#include "rmi/fixture.hpp"
#include "test_util.hpp"

using namespace rmi;

TEST_SUITE("env") {
  TEST_CASE("zero slip grid is deterministic") {
    GridConfig cfg;
    cfg.layout = {"....", "....", "....", "...."};
    cfg.slip_prob = 0.0;
    cfg.initial_cells = {1};
    const MdpModel mdp = build_grid_mdp(cfg);
    CHECK(mdp.num_states() == 16);
    CHECK(mdp.num_actions() == 4);
    for (StateId s = 1; s <= 16; ++s)
      for (ActionId a = 1; a <= 4; ++a) {
        const auto row = mdp.row(s, a);
        CHECK(std::count(row.begin(), row.end(), 1.0) == 1);
        CHECK(std::count(row.begin(), row.end(), 0.0) == 15);
      }
  }

  TEST_CASE("boundary clamp on a 1x3 corridor") {
    GridConfig cfg;
    cfg.layout = {"..."};
    cfg.slip_prob = 0.0;
    cfg.initial_cells = {1, 2, 3};
    const MdpModel mdp = build_grid_mdp(cfg);
    CHECK(mdp.prob(3, static_cast<ActionId>(GridAction::east), 3) == 1.0);
    CHECK(mdp.prob(1, static_cast<ActionId>(GridAction::west), 1) == 1.0);
    CHECK(mdp.prob(2, static_cast<ActionId>(GridAction::east), 3) == 1.0);
  }

  TEST_CASE("slip kernel matches a hand-computed row") {
    GridConfig cfg;
    cfg.layout = {"....", "....", "....", "...."};
    cfg.slip_prob = 0.1;
    cfg.initial_cells = {1};
    const MdpModel mdp = build_grid_mdp(cfg);
    // Interior cell (row 2, col 1) moving north.
    const StateId s = cfg.cell(2, 1);
    std::vector<double> expected(16, 0.0);
    expected[static_cast<std::size_t>(cfg.cell(1, 1) - 1)] = 0.9;
    expected[static_cast<std::size_t>(cfg.cell(2, 2) - 1)] = 0.05;
    expected[static_cast<std::size_t>(cfg.cell(2, 0) - 1)] = 0.05;
    const auto row = mdp.row(s, static_cast<ActionId>(GridAction::north));
    for (std::size_t t = 0; t < 16; ++t) CHECK(row[t] == doctest::Approx(expected[t]).epsilon(1e-12));

    // Corner cell (0,0) moving north: intended and west slip are clamped.
    const auto corner = mdp.row(cfg.cell(0, 0), static_cast<ActionId>(GridAction::north));
    CHECK(corner[static_cast<std::size_t>(cfg.cell(0, 0) - 1)] == doctest::Approx(0.95));
    CHECK(corner[static_cast<std::size_t>(cfg.cell(0, 1) - 1)] == doctest::Approx(0.05));
  }

  TEST_CASE("grid validation errors") {
    GridConfig cfg;
    cfg.initial_cells = {1};
    CHECK_THROWS_AS(build_grid_mdp(cfg), InvalidArgument);
    cfg.layout = {"...", ".."};
    CHECK_THROWS_AS(build_grid_mdp(cfg), InvalidArgument);
    cfg.layout = {"...", "..."};
    cfg.initial_cells.clear();
    CHECK_THROWS_AS(build_grid_mdp(cfg), InvalidArgument);
    cfg.initial_cells = {1};
    cfg.slip_prob = 1.0;
    CHECK_THROWS_AS(build_grid_mdp(cfg), InvalidArgument);
  }

  TEST_CASE("MDP invariants are enforced") {
    CHECK_THROWS_AS(MdpModel(1, 1, {0.5}, {1.0}, 0.9), InvalidArgument);
    CHECK_THROWS_AS(MdpModel(1, 1, {1.0}, {0.5}, 0.9), InvalidArgument);
    CHECK_THROWS_AS(MdpModel(1, 1, {1.0}, {1.0}, 1.0), InvalidArgument);
    CHECK_NOTHROW(MdpModel(1, 1, {1.0}, {1.0}, 0.0));
  }

  TEST_CASE("patrol machine cycles A, B, C, D") {
    const Fixture fx = builtin_fixture("patrolABCD");
    const auto& m = fx.truth.model;
    CHECK(m.num_nodes == 4);
    auto prop = [&](const std::string& name) {
      const auto it = std::find(fx.truth.prop_names.begin(), fx.truth.prop_names.end(), name);
      REQUIRE(it != fx.truth.prop_names.end());
      return static_cast<PropId>(it - fx.truth.prop_names.begin()) + 1;
    };
    CHECK(m.next(1, prop("A")) == 2);
    CHECK(m.next(2, prop("B")) == 3);
    CHECK(m.next(3, prop("C")) == 4);
    CHECK(m.next(4, prop("D")) == 1);
    CHECK(m.next(1, prop("B")) == 1);
    CHECK(m.label(1) == 1);
  }

  TEST_CASE("degenerate single-node machine gives a product isomorphic to the MDP") {
    const Fixture line3 = builtin_fixture("line3");
    LabeledRewardMachine single;
    single.model = test::single_node(line3.mdp.num_states());
    single.delta_r = std::vector<double>(1, 0.0);
    single.model.validate();
    const ProductMdp prod(line3.mdp, single);
    CHECK(prod.accessible().size() == 3);
  }

  TEST_CASE("line3 machine and product") {
    const Fixture fx = builtin_fixture("line3");
    const auto& m = fx.truth.model;
    CHECK(m.num_nodes == 2);
    CHECK(m.num_props == 2);
    CHECK(m.next(1, 2) == 2);
    CHECK(m.next(1, 1) == 1);
    CHECK(m.next(2, 1) == 2);
    CHECK(m.next(2, 2) == 2);

    const ProductMdp prod = fx.product();
    std::set<std::pair<StateId, NodeId>> got(prod.accessible().begin(), prod.accessible().end());
    const std::set<std::pair<StateId, NodeId>> expected{{1, 1}, {2, 1}, {3, 2}, {2, 2}, {1, 2}};
    CHECK(got == expected);
    CHECK(prod.reward(2, 1, 2, 3, 2) == 1.0);
    CHECK(prod.reward(1, 1, 2, 2, 1) == 0.0);
  }

  TEST_CASE("accessible set equals an independent breadth-first search") {
    for (const auto& name : builtin_fixture_names()) {
      const Fixture fx = builtin_fixture(name);
      const ProductMdp prod = fx.product();
      const auto& m = fx.truth.model;
      std::set<std::pair<StateId, NodeId>> seen;
      std::vector<std::pair<StateId, NodeId>> stack;
      for (StateId s = 1; s <= fx.mdp.num_states(); ++s)
        if (fx.mdp.initial()[static_cast<std::size_t>(s - 1)] > 0.0) stack.emplace_back(s, m.next(1, m.label(s)));
      while (!stack.empty()) {
        const auto cur = stack.back();
        stack.pop_back();
        if (!seen.insert(cur).second) continue;
        for (ActionId a = 1; a <= fx.mdp.num_actions(); ++a)
          for (StateId t = 1; t <= fx.mdp.num_states(); ++t)
            if (fx.mdp.prob(cur.first, a, t) > 0.0) stack.emplace_back(t, m.next(cur.second, m.label(t)));
      }
      std::set<std::pair<StateId, NodeId>> got(prod.accessible().begin(), prod.accessible().end());
      CHECK_MESSAGE(got == seen, name);
      CHECK(got.size() <= static_cast<std::size_t>(fx.mdp.num_states() * m.num_nodes));
    }
  }

  TEST_CASE("product kernel mass is conserved at every accessible pair") {
    for (const auto& name : builtin_fixture_names()) {
      const Fixture fx = builtin_fixture(name);
      const ProductMdp prod = fx.product();
      const auto& m = fx.truth.model;
      for (const auto& [s, u] : prod.accessible())
        for (ActionId a = 1; a <= fx.mdp.num_actions(); ++a) {
          double mass = 0.0;
          for (StateId t = 1; t <= fx.mdp.num_states(); ++t) {
            const double p = fx.mdp.prob(s, a, t);
            if (p == 0.0) continue;
            CHECK(prod.is_accessible(t, m.step(u, t)));
            mass += p;
          }
          CHECK(mass == doctest::Approx(1.0).epsilon(1e-9));
        }
    }
  }

  TEST_CASE("rm_run on line3") {
    const Fixture fx = builtin_fixture("line3");
    CHECK(rm_run(fx.truth, std::vector<StateId>{1}) == 1);
    CHECK(rm_run(fx.truth, std::vector<StateId>{1, 2, 3}) == 2);
    CHECK(rm_run(fx.truth, std::vector<StateId>{1, 2, 3, 2, 1}) == 2);
    CHECK_THROWS_AS(rm_run(fx.truth, std::vector<StateId>{1, 4}), InvalidArgument);
    CHECK_THROWS_AS(rm_run(fx.truth, std::vector<StateId>{0}), InvalidArgument);
  }

  TEST_CASE("rm_run is compositional") {
    std::mt19937_64 rng(5);
    for (const auto& name : builtin_fixture_names()) {
      const Fixture fx = builtin_fixture(name);
      const int n = fx.mdp.num_states();
      std::uniform_int_distribution<int> state(1, n), len(0, 12);
      for (int round = 0; round < 200; ++round) {
        std::vector<StateId> a(static_cast<std::size_t>(len(rng))), b(static_cast<std::size_t>(len(rng)));
        for (auto& s : a) s = state(rng);
        for (auto& s : b) s = state(rng);
        std::vector<StateId> ab = a;
        ab.insert(ab.end(), b.begin(), b.end());
        CHECK(rm_run(fx.truth, ab) == rm_run_from(fx.truth.model, rm_run(fx.truth, a), b));
      }
    }
  }

  TEST_CASE("ground-truth construction errors") {
    MachineDescription desc;
    desc.num_nodes = 2;
    desc.state_labels = {"a", "b"};
    desc.edges = {{1, "a", 0.0, 2, 1}, {2, "", 0.0, 2, 2}};
    CHECK_THROWS_AS(build_ground_truth_rm(desc), InvalidArgument);  // (1, b) missing
    desc.edges.push_back({1, "b", 0.0, 1, 3});
    CHECK_NOTHROW(build_ground_truth_rm(desc));
    desc.edges.push_back({1, "b", 0.0, 2, 4});
    CHECK_THROWS_AS(build_ground_truth_rm(desc), InvalidArgument);  // duplicate

    // Propositions are re-indexed so state 1 carries proposition 1.
    MachineDescription flipped;
    flipped.num_nodes = 1;
    flipped.state_labels = {"z", "a"};
    flipped.edges = {{1, "", 0.0, 1, 1}};
    const auto rm = build_ground_truth_rm(flipped);
    CHECK(rm.model.label(1) == 1);
    CHECK(rm.prop_names.front() == "z");
  }

  TEST_CASE("fixture parse errors cite line numbers") {
    const std::string bad = "[params]\nname = x\n[grid]\n..\n.\n[machine]\nnodes = 1\n1 --*/0--> 1\n";
    try {
      parse_fixture(bad, "bad.txt");
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 5);
      CHECK(std::string(e.what()).find("bad.txt:5") != std::string::npos);
    }
    const std::string bad_edge = "[params]\nname = x\n[grid]\n..\n[machine]\nnodes = 1\n1 -*/0-> 1\n";
    try {
      parse_fixture(bad_edge, "edge.txt");
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 7);
    }
    CHECK_THROWS_AS(builtin_fixture("nope"), InvalidArgument);
  }

  TEST_CASE("builtin fixtures round-trip through the text format") {
    for (const auto& name : builtin_fixture_names()) {
      const Fixture a = builtin_fixture(name);
      const Fixture b = parse_fixture(builtin_fixture_text(name));
      CHECK(a.truth.model == b.truth.model);
      CHECK(a.hash() == b.hash());
      CHECK(a.mdp.initial() == b.mdp.initial());
    }
  }

  TEST_CASE("default initial cells are the free cells") {
    const Fixture fx = builtin_fixture("pick_n_drop");
    const auto& layout = fx.grid->layout;
    for (int r = 0; r < fx.grid->rows(); ++r)
      for (int c = 0; c < fx.grid->cols(); ++c) {
        const bool free = layout[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] == '.';
        CHECK((fx.mdp.initial()[static_cast<std::size_t>(fx.grid->cell(r, c) - 1)] > 0.0) == free);
      }
  }
}
