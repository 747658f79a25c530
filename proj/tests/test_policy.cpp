#include <doctest.h>

#include <cmath>
#include <array>
#include <numeric>
#include <sstream>

#include "rmi/errors.hpp"
#include "rmi/fixture.hpp"
#include "rmi/policy.hpp"
#include "test_util.hpp"

using namespace rmi;

namespace {

// Scalar soft Bellman iteration for line3 written out state by state.
// Node 2 pays nothing, so its value is lambda log 2 / (1 - gamma) everywhere;
// node 1 pays 1 on entering state 3 and moves to node 2 there.
std::array<std::array<double, 2>, 3> line3_reference_q(double gamma, double lambda) {
  const double v2 = lambda * std::log(2.0) / (1.0 - gamma);
  double v[3] = {0.0, 0.0, 0.0};  // node 1 values of states 1..3; (3, 1) is never used
  auto q_of = [&](int s, int a) {
    // a = 0 left, a = 1 right, deterministic and clamped.
    const int t = a == 0 ? std::max(1, s - 1) : std::min(3, s + 1);
    return t == 3 ? 1.0 + gamma * v2 : gamma * v[t - 1];
  };
  for (int it = 0; it < 20000; ++it) {
    double nv[3];
    for (int s = 1; s <= 3; ++s) {
      const double a0 = q_of(s, 0), a1 = q_of(s, 1);
      const double m = std::max(a0, a1);
      nv[s - 1] = m + lambda * std::log(std::exp((a0 - m) / lambda) + std::exp((a1 - m) / lambda));
    }
    std::copy(nv, nv + 3, v);
  }
  std::array<std::array<double, 2>, 3> q{};
  for (int s = 1; s <= 3; ++s) q[static_cast<std::size_t>(s - 1)] = {q_of(s, 0), q_of(s, 1)};
  return q;
}

}  // namespace

TEST_SUITE("policy") {
  TEST_CASE("zero reward gives the uniform policy") {
    for (const auto& name : builtin_fixture_names()) {
      const Fixture fx = test::zero_reward(name);
      const ProductMdp prod = fx.product();
      const ProductPolicy pol = soft_value_iteration(prod, {fx.lambda});
      const double uniform = 1.0 / fx.mdp.num_actions();
      for (const auto& [s, u] : prod.accessible()) {
        const auto row = *pol.row(s, u);
        for (double p : row) CHECK(std::abs(p - uniform) < 1e-9);
      }
    }
  }

  TEST_CASE("line3 matches a scalar reference iteration") {
    const Fixture fx = builtin_fixture("line3");
    const ProductPolicy pol = soft_value_iteration(fx.product(), {fx.lambda});
    const auto q = line3_reference_q(fx.mdp.discount(), fx.lambda);
    for (StateId s : {1, 2}) {
      const auto& qs = q[static_cast<std::size_t>(s - 1)];
      const double m = std::max(qs[0], qs[1]);
      const double e0 = std::exp((qs[0] - m) / fx.lambda), e1 = std::exp((qs[1] - m) / fx.lambda);
      const auto row = *pol.row(s, 1);
      CHECK(row[0] == doctest::Approx(e0 / (e0 + e1)).epsilon(1e-7));
      CHECK(row[1] == doctest::Approx(e1 / (e0 + e1)).epsilon(1e-7));
    }
    const auto mid = *pol.row(2, 1);
    CHECK(mid[1] > mid[0]);
    for (StateId s = 1; s <= 3; ++s) {
      const auto row = *pol.row(s, 2);
      CHECK(std::abs(row[0] - 0.5) < 1e-9);
    }
    CHECK_FALSE(pol.defined(3, 1));
  }

  TEST_CASE("residuals contract at rate gamma") {
    for (const auto& name : builtin_fixture_names()) {
      const Fixture fx = builtin_fixture(name);
      const ProductPolicy pol = soft_value_iteration(fx.product(), {fx.lambda});
      const auto& r = pol.residuals();
      REQUIRE(r.size() >= 2);
      CHECK(pol.residual() < 1e-10);
      for (std::size_t k = 1; k < r.size(); ++k) CHECK(r[k] <= fx.mdp.discount() * r[k - 1] + 1e-12);
    }
  }

  TEST_CASE("policy rows are distributions") {
    for (const auto& name : builtin_fixture_names()) {
      const Fixture fx = builtin_fixture(name);
      const ProductMdp prod = fx.product();
      const ProductPolicy pol = soft_value_iteration(prod, {fx.lambda});
      for (const auto& [s, u] : prod.accessible()) {
        const auto row = *pol.row(s, u);
        CHECK(std::accumulate(row.begin(), row.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
        for (double p : row) CHECK(p > 0.0);
      }
    }
  }

  TEST_CASE("value iteration is deterministic") {
    const Fixture fx = builtin_fixture("patrolABCD");
    const ProductMdp prod = fx.product();
    CHECK(soft_value_iteration(prod, {fx.lambda}) == soft_value_iteration(prod, {fx.lambda}));
  }

  TEST_CASE("non-convergence is reported") {
    const Fixture fx = builtin_fixture("line3");
    SoftValueOptions opt;
    opt.lambda = fx.lambda;
    opt.max_iters = 3;
    try {
      soft_value_iteration(fx.product(), opt);
      FAIL("expected ConvergenceError");
    } catch (const ConvergenceError& e) {
      CHECK(e.residual() > opt.tol);
    }
    opt.lambda = 0.0;
    CHECK_THROWS_AS(soft_value_iteration(fx.product(), opt), InvalidArgument);
  }

  TEST_CASE("rows_differ uses a strict sup-norm threshold") {
    const std::vector<double> a{0.5, 0.5}, b{0.5 + 2e-6, 0.5 - 2e-6}, c{0.5 + 1e-7, 0.5 - 1e-7};
    CHECK(rows_differ(a, b));
    CHECK_FALSE(rows_differ(a, c));
    CHECK_FALSE(rows_differ(a, a));
    CHECK(rows_differ(a, c, 1e-8));
    CHECK_THROWS_AS(rows_differ(a, std::vector<double>{1.0}), InvalidArgument);
  }

  TEST_CASE("find_witness skips states defined on one side only") {
    const std::vector<double> p{0.2, 0.8}, q{0.6, 0.4};
    RowMap a, b;
    a.rows = {std::span<const double>(p), std::nullopt, std::span<const double>(p)};
    b.rows = {std::nullopt, std::span<const double>(q), std::span<const double>(q)};
    const auto w = find_witness(a, b);
    REQUIRE(w);
    CHECK(*w == Witness{3, 1});
    CHECK_FALSE(find_witness_at(a, b, 1));
    CHECK_FALSE(find_witness(a, a));
  }

  TEST_CASE("history oracle on line3") {
    test::World w(builtin_fixture("line3"));
    const std::vector<StateId> done{1, 2, 3}, start{1};
    const auto after = w.oracle.query(done, 2);
    REQUIRE(after);
    CHECK(std::abs((*after)[0] - 0.5) < 1e-9);
    const auto before = w.oracle.query(start, 2);
    REQUIRE(before);
    CHECK((*before)[1] > (*before)[0]);
    CHECK(w.oracle.query_count() == 2);
    // (3, node 1) is not accessible.
    CHECK_FALSE(w.oracle.query(start, 3));
    const RowMap rows = w.oracle.query_all(done);
    CHECK(rows.rows.size() == 3);
    CHECK(w.oracle.query_count() == 6);
    CHECK(find_witness(w.oracle.query_all(start), rows) == Witness{1, 1});
    const std::vector<StateId> jump{1, 3};
    CHECK_THROWS_AS(w.oracle.query(jump, 1), InvariantViolation);
    CHECK_THROWS_AS(w.oracle.query(start, 4), InvalidArgument);
  }

  TEST_CASE("policy CSV lists the accessible rows") {
    const Fixture fx = builtin_fixture("line3");
    const ProductMdp prod = fx.product();
    const ProductPolicy pol = soft_value_iteration(prod, {fx.lambda});
    std::ostringstream out;
    pol.write_csv(out);
    const std::string csv = out.str();
    CHECK(csv.rfind("state,node,action,probability\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + static_cast<long>(prod.accessible().size()) * 2);
  }
}
