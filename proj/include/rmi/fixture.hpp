#pragma once

// Experiment worlds: an MDP model, the hidden ground-truth labeled reward
// machine and the entropy weight used to compute the expert policy.
//
// Text format (line oriented, '#' starts a comment):
//
//   [params]            key = value lines
//     name, slip, gamma, lambda, non_stuttering (true/false),
//     initial = <label chars>      initial cells are the cells carrying one of these labels
//     initial_cells = <1-based cell ids>
//     states, actions               (explicit MDPs only)
//   [grid]              one row of label characters per line
//   [transitions]       explicit MDP: "s a s' prob" per line
//   [labels]            explicit MDP: whitespace separated label per state
//   [machine]           "nodes = N" then edges "u --p/r--> v"; p = '*' matches
//                       every proposition without an explicit edge
//
// A fixture has either [grid] or [transitions]+[labels]. Grid states are the
// cells in row-major order; initial cells default to the cells labeled '.'.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rmi/env.hpp"

namespace rmi {

struct Fixture {
  std::string name;
  MdpModel mdp;
  LabeledRewardMachine truth;
  double lambda = 0.1;
  bool non_stuttering = true;
  std::optional<GridConfig> grid;
  std::string source_text;

  /// FNV-1a of the normalized source text; keys on-disk caches.
  std::uint64_t hash() const;
  ProductMdp product() const { return ProductMdp(mdp, truth); }
};

Fixture parse_fixture(std::string_view text, const std::string& source = "<fixture>");
Fixture load_fixture_file(const std::string& path);

/// line3, pick_n_drop, patrolABCD, patrol_tetris.
Fixture builtin_fixture(std::string_view name);
std::vector<std::string> builtin_fixture_names();
std::string_view builtin_fixture_text(std::string_view name);

}  // namespace rmi
