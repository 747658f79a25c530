#pragma once

// Small constructors shared by the test suites.

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "rmi/env.hpp"
#include "rmi/fixture.hpp"
#include "rmi/policy.hpp"

namespace rmi::test {

inline LabeledMachineModel single_node(int n_states) {
  LabeledMachineModel m;
  m.num_nodes = 1;
  m.num_props = 1;
  m.delta_u = {1};
  m.labeling.assign(static_cast<std::size_t>(n_states), 1);
  return m;
}

inline LabeledMachineModel random_machine(int n_nodes, int n_props, int n_states, std::mt19937_64& rng) {
  LabeledMachineModel m;
  m.num_nodes = n_nodes;
  m.num_props = n_props;
  std::uniform_int_distribution<int> node(1, n_nodes), prop(1, n_props);
  m.delta_u.resize(static_cast<std::size_t>(n_nodes * n_props));
  for (auto& v : m.delta_u) v = node(rng);
  m.labeling.resize(static_cast<std::size_t>(n_states));
  for (auto& p : m.labeling) p = prop(rng);
  m.labeling[0] = 1;
  return m;
}

/// Redraws every delta(., p) as an idempotent map, which is exactly the
/// non-stuttering condition.
inline void make_non_stuttering(LabeledMachineModel& m, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(0.5);
  for (PropId p = 1; p <= m.num_props; ++p) {
    std::vector<NodeId> fixed;
    for (NodeId i = 1; i <= m.num_nodes; ++i)
      if (coin(rng)) fixed.push_back(i);
    if (fixed.empty()) fixed.push_back(1);
    std::uniform_int_distribution<std::size_t> pick(0, fixed.size() - 1);
    for (NodeId i = 1; i <= m.num_nodes; ++i)
      m.next(i, p) = std::find(fixed.begin(), fixed.end(), i) != fixed.end() ? i : fixed[pick(rng)];
  }
}

/// A policy oracle bundled with the objects it borrows from.
struct World {
  Fixture fixture;
  ProductPolicy policy;
  HistoryOracle oracle;

  explicit World(Fixture fx)
      : fixture(std::move(fx)),
        policy(soft_value_iteration(fixture.product(), {fixture.lambda})),
        oracle(fixture.mdp, fixture.truth, policy) {}
};

inline Fixture random_explicit_fixture(std::mt19937_64& rng, int n_states, int n_nodes, int n_props) {
  // Random sparse MDP with two actions plus a random non-stuttering machine
  // with rewards on every node change.
  std::uniform_int_distribution<int> state(1, n_states);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::string text = "[params]\nname = random\nstates = " + std::to_string(n_states) + "\nactions = 2\n";
  text += "gamma = 0.9\nlambda = 0.2\ninitial_cells =";
  for (StateId s = 1; s <= n_states; ++s)
    if (s == 1 || unit(rng) < 0.5) text += " " + std::to_string(s);
  text += "\n[transitions]\n";
  for (StateId s = 1; s <= n_states; ++s)
    for (int a = 1; a <= 2; ++a) {
      const StateId t1 = state(rng), t2 = state(rng);
      if (t1 == t2) {
        text += std::to_string(s) + " " + std::to_string(a) + " " + std::to_string(t1) + " 1.0\n";
      } else {
        text += std::to_string(s) + " " + std::to_string(a) + " " + std::to_string(t1) + " 0.7\n";
        text += std::to_string(s) + " " + std::to_string(a) + " " + std::to_string(t2) + " 0.3\n";
      }
    }
  LabeledMachineModel m = random_machine(n_nodes, n_props, n_states, rng);
  make_non_stuttering(m, rng);
  // Every proposition must label some state for the text format.
  for (PropId p = 1; p <= n_props && p <= n_states; ++p)
    if (std::find(m.labeling.begin(), m.labeling.end(), p) == m.labeling.end())
      m.labeling[static_cast<std::size_t>(std::min(n_states, p) - 1)] = p;
  m.labeling[0] = 1;
  text += "[labels]\n";
  for (PropId p : m.labeling) text += std::string(1, static_cast<char>('a' + p - 1)) + " ";
  text += "\n[machine]\nnodes = " + std::to_string(n_nodes) + "\n";
  std::uniform_real_distribution<double> reward(-1.0, 1.0);
  for (NodeId i = 1; i <= n_nodes; ++i)
    for (PropId p = 1; p <= n_props; ++p) {
      if (std::find(m.labeling.begin(), m.labeling.end(), p) == m.labeling.end()) continue;
      text += std::to_string(i) + " --" + std::string(1, static_cast<char>('a' + p - 1)) + "/" +
              std::to_string(reward(rng)) + "--> " + std::to_string(m.next(i, p)) + "\n";
    }
  return parse_fixture(text, "random");
}

inline Fixture zero_reward(const std::string& name) {
  std::string text(builtin_fixture_text(name));
  // Rewrite every "/r-->" to "/0-->".
  std::string out;
  for (std::size_t i = 0; i < text.size();) {
    const auto slash = text.find('/', i);
    if (slash == std::string::npos) {
      out += text.substr(i);
      break;
    }
    const auto arrow = text.find("-->", slash);
    const auto eol = text.find('\n', slash);
    out += text.substr(i, slash + 1 - i);
    if (arrow != std::string::npos && arrow < eol) {
      out += "0";
      i = arrow;
    } else {
      i = slash + 1;
    }
  }
  return parse_fixture(out, name);
}

}  // namespace rmi::test
