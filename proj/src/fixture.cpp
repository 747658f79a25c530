#include "rmi/fixture.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <regex>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "rmi/errors.hpp"

namespace rmi {

namespace {

// Three-state corridor with a trigger at the right end. Two actions: 1 = left,
// 2 = right; deterministic, clamped at both ends.
constexpr std::string_view kLine3 = R"(# three-state corridor, reward once for reaching state 3
[params]
name = line3
states = 3
actions = 2
gamma = 0.95
lambda = 0.1
initial_cells = 1 2 3
non_stuttering = true

[transitions]
1 1 1 1.0
1 2 2 1.0
2 1 1 1.0
2 2 3 1.0
3 1 2 1.0
3 2 3 1.0

[labels]
a a t

[machine]
nodes = 2
1 --t/1--> 2
1 --*/0--> 1
2 --*/0--> 2
)";

// Warehouse: D = drop-off (top left), P = pickup (bottom right),
// X = danger zone (bottom middle), '.' = free floor.
constexpr std::string_view kPickNDrop = R"(# pick up at P, drop off at D, cyclically; X is a danger zone
[params]
name = pick_n_drop
slip = 0.1
gamma = 0.95
lambda = 0.1
non_stuttering = true

[grid]
D...
....
.XX.
.XXP

[machine]
nodes = 3
1 --P/1--> 2
1 --X/-1--> 3
1 --*/0--> 1
2 --D/1--> 1
2 --X/-1--> 3
2 --*/0--> 2
3 --*/0--> 3
)";

constexpr std::string_view kPatrol = R"(# patrol the rooms in the order A, B, C, D
[params]
name = patrolABCD
slip = 0.1
gamma = 0.95
lambda = 0.1
initial = BCD
non_stuttering = true

[grid]
AAAB
AAAB
ADCC
DDCC

[machine]
nodes = 4
1 --A/1--> 2
1 --*/0--> 1
2 --B/1--> 3
2 --*/0--> 2
3 --C/1--> 4
3 --*/0--> 3
4 --D/1--> 1
4 --*/0--> 4
)";

constexpr std::string_view kPatrolTetris = R"(# patrol variant with tetromino-shaped rooms
[params]
name = patrol_tetris
slip = 0.1
gamma = 0.95
lambda = 0.1
initial = BCD
non_stuttering = true

[grid]
AAAB
ABBB
DDCC
DDCC

[machine]
nodes = 4
1 --A/1--> 2
1 --*/0--> 1
2 --B/1--> 3
2 --*/0--> 2
3 --C/1--> 4
3 --*/0--> 3
4 --D/1--> 1
4 --*/0--> 4
)";

struct Builtin {
  std::string_view name;
  std::string_view text;
};
constexpr Builtin kBuiltins[] = {
    {"line3", kLine3},
    {"pick_n_drop", kPickNDrop},
    {"patrolABCD", kPatrol},
    {"patrol_tetris", kPatrolTetris},
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string tok; in >> tok;) out.push_back(tok);
  return out;
}

class Parser {
 public:
  Parser(std::string_view text, std::string source) : text_(text), source_(std::move(source)) {}

  Fixture run();

 private:
  [[noreturn]] void fail(int line, const std::string& what) const { throw ParseError(source_, line, what); }

  double number(int line, const std::string& s) const {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) fail(line, "malformed number '" + s + "'");
      return v;
    } catch (const std::invalid_argument&) {
      fail(line, "malformed number '" + s + "'");
    } catch (const std::out_of_range&) {
      fail(line, "number out of range '" + s + "'");
    }
  }
  int integer(int line, const std::string& s) const {
    int v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) fail(line, "malformed integer '" + s + "'");
    return v;
  }
  bool boolean(int line, const std::string& s) const {
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    fail(line, "malformed boolean '" + s + "'");
  }

  std::string_view text_;
  std::string source_;
};

Fixture Parser::run() {
  std::map<std::string, std::pair<std::string, int>> params;
  std::vector<std::pair<std::string, int>> grid_lines;
  std::vector<std::pair<std::string, int>> transition_lines;
  std::vector<std::pair<std::string, int>> label_lines;
  std::vector<std::pair<std::string, int>> machine_lines;
  std::string section;

  std::istringstream in{std::string(text_)};
  int line_no = 0;
  for (std::string raw; std::getline(in, raw);) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(line_no, "unterminated section header");
      section = line.substr(1, line.size() - 2);
      if (section != "params" && section != "grid" && section != "transitions" && section != "labels" &&
          section != "machine")
        fail(line_no, "unknown section [" + section + "]");
      continue;
    }
    if (section.empty()) fail(line_no, "content outside of a section");
    if (section == "params") {
      const auto eq = line.find('=');
      if (eq == std::string::npos) fail(line_no, "expected key = value");
      const std::string key = trim(line.substr(0, eq));
      if (!params.emplace(key, std::make_pair(trim(line.substr(eq + 1)), line_no)).second)
        fail(line_no, "duplicate key '" + key + "'");
    } else if (section == "grid") {
      grid_lines.emplace_back(line, line_no);
    } else if (section == "transitions") {
      transition_lines.emplace_back(line, line_no);
    } else if (section == "labels") {
      label_lines.emplace_back(line, line_no);
    } else {
      machine_lines.emplace_back(line, line_no);
    }
  }

  auto param = [&](const std::string& key) -> const std::pair<std::string, int>* {
    const auto it = params.find(key);
    return it == params.end() ? nullptr : &it->second;
  };
  static const std::set<std::string> known = {"name",  "slip",    "gamma",         "lambda",        "initial",
                                              "states", "actions", "initial_cells", "non_stuttering"};
  for (const auto& [key, value] : params)
    if (!known.count(key)) fail(value.second, "unknown parameter '" + key + "'");

  Fixture fx;
  fx.source_text = std::string(text_);
  fx.name = param("name") ? param("name")->first : "custom";
  if (const auto* p = param("lambda")) fx.lambda = number(p->second, p->first);
  if (fx.lambda <= 0.0) fail(param("lambda")->second, "lambda must be positive");
  if (const auto* p = param("non_stuttering")) fx.non_stuttering = boolean(p->second, p->first);
  const double gamma = param("gamma") ? number(param("gamma")->second, param("gamma")->first) : 0.95;

  MachineDescription desc;
  if (!grid_lines.empty() && !transition_lines.empty()) fail(transition_lines.front().second, "fixture has both [grid] and [transitions]");

  if (!grid_lines.empty()) {
    GridConfig cfg;
    cfg.gamma = gamma;
    cfg.lambda = fx.lambda;
    for (const auto& [row, ln] : grid_lines) {
      if (row.find_first_of(" \t") != std::string::npos) fail(ln, "grid rows may not contain whitespace");
      if (!cfg.layout.empty() && row.size() != cfg.layout.front().size()) fail(ln, "grid is not rectangular");
      cfg.layout.push_back(row);
    }
    if (const auto* p = param("slip")) {
      cfg.slip_prob = number(p->second, p->first);
      if (!(cfg.slip_prob >= 0.0 && cfg.slip_prob < 1.0)) fail(p->second, "slip must lie in [0, 1)");
    }
    if (const auto* p = param("initial_cells")) {
      for (const auto& tok : split_ws(p->first)) cfg.initial_cells.push_back(integer(p->second, tok));
    } else {
      const std::string labels = param("initial") ? param("initial")->first : std::string(".");
      for (int r = 0; r < cfg.rows(); ++r)
        for (int c = 0; c < cfg.cols(); ++c)
          if (labels.find(cfg.layout[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)]) != std::string::npos)
            cfg.initial_cells.push_back(cfg.cell(r, c));
    }
    if (cfg.initial_cells.empty()) fail(grid_lines.front().second, "no initial cells");
    for (const auto& row : cfg.layout)
      for (char ch : row) desc.state_labels.emplace_back(1, ch);
    try {
      fx.mdp = build_grid_mdp(cfg);
    } catch (const InvalidArgument& e) {
      fail(grid_lines.front().second, e.what());
    }
    fx.grid = std::move(cfg);
  } else if (!transition_lines.empty()) {
    const auto* ps = param("states");
    const auto* pa = param("actions");
    if (!ps || !pa) fail(transition_lines.front().second, "explicit MDP needs 'states' and 'actions'");
    const int ns = integer(ps->second, ps->first);
    const int na = integer(pa->second, pa->first);
    if (ns < 1 || na < 1) fail(ps->second, "states and actions must be positive");
    std::vector<double> kernel(static_cast<std::size_t>(ns * na * ns), 0.0);
    for (const auto& [row, ln] : transition_lines) {
      const auto tok = split_ws(row);
      if (tok.size() != 4) fail(ln, "expected 's a s' prob'");
      const int s = integer(ln, tok[0]);
      const int a = integer(ln, tok[1]);
      const int t = integer(ln, tok[2]);
      if (s < 1 || s > ns || t < 1 || t > ns || a < 1 || a > na) fail(ln, "index out of range");
      kernel[static_cast<std::size_t>(((s - 1) * na + (a - 1)) * ns + (t - 1))] += number(ln, tok[3]);
    }
    std::vector<double> initial(static_cast<std::size_t>(ns), 0.0);
    const auto* pi = param("initial_cells");
    if (!pi) fail(ps->second, "explicit MDP needs 'initial_cells'");
    const auto cells = split_ws(pi->first);
    for (const auto& tok : cells) {
      const int s = integer(pi->second, tok);
      if (s < 1 || s > ns) fail(pi->second, "initial state out of range");
      initial[static_cast<std::size_t>(s - 1)] = 1.0 / static_cast<double>(cells.size());
    }
    for (const auto& [row, ln] : label_lines)
      for (const auto& tok : split_ws(row)) desc.state_labels.push_back(tok);
    if (static_cast<int>(desc.state_labels.size()) != ns)
      fail(label_lines.empty() ? transition_lines.front().second : label_lines.front().second,
           fmt::format("expected {} state labels, got {}", ns, desc.state_labels.size()));
    try {
      fx.mdp = MdpModel(ns, na, std::move(kernel), std::move(initial), gamma);
    } catch (const InvalidArgument& e) {
      fail(transition_lines.front().second, e.what());
    }
  } else {
    fail(line_no, "fixture needs a [grid] or [transitions] section");
  }

  static const std::regex edge_re(R"(^(\d+)\s*--\s*([^/\s]+)\s*/\s*([-+0-9.eE]+)\s*-->\s*(\d+)$)");
  static const std::regex nodes_re(R"(^nodes\s*=\s*(\d+)$)");
  for (const auto& [row, ln] : machine_lines) {
    std::smatch m;
    if (std::regex_match(row, m, nodes_re)) {
      desc.num_nodes = integer(ln, m[1]);
    } else if (std::regex_match(row, m, edge_re)) {
      MachineEdge e;
      e.from = integer(ln, m[1]);
      e.prop = m[2] == "*" ? std::string() : std::string(m[2]);
      e.reward = number(ln, m[3]);
      e.to = integer(ln, m[4]);
      e.line = ln;
      desc.edges.push_back(std::move(e));
    } else {
      fail(ln, "expected 'nodes = N' or an edge 'u --p/r--> v'");
    }
  }
  if (machine_lines.empty()) fail(line_no, "fixture needs a [machine] section");
  try {
    fx.truth = build_ground_truth_rm(desc);
  } catch (const ParseError&) {
    throw;
  } catch (const InvalidArgument& e) {
    fail(machine_lines.front().second, e.what());
  }
  return fx;
}

}  // namespace

std::uint64_t Fixture::hash() const {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : source_text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

Fixture parse_fixture(std::string_view text, const std::string& source) { return Parser(text, source).run(); }

Fixture load_fixture_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open fixture file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_fixture(buf.str(), path);
}

std::string_view builtin_fixture_text(std::string_view name) {
  for (const auto& b : kBuiltins)
    if (b.name == name) return b.text;
  throw InvalidArgument(fmt::format("unknown fixture '{}'", name));
}

Fixture builtin_fixture(std::string_view name) {
  return parse_fixture(builtin_fixture_text(name), std::string(name));
}

std::vector<std::string> builtin_fixture_names() {
  std::vector<std::string> names;
  for (const auto& b : kBuiltins) names.emplace_back(b.name);
  return names;
}

}  // namespace rmi
