#include "rmi/traces.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_map>
#include <unordered_set>

#include <fmt/format.h>

#include "rmi/errors.hpp"

namespace rmi {

PrefixTree::PrefixTree(bool compressed, std::size_t node_cap) : compressed_(compressed), node_cap_(node_cap) {
  nodes_.push_back({kNone, kNone, kNone, 0, 0});
}

PrefixTree::Index PrefixTree::child(Index n, StateId s) const {
  for (Index c = nodes_[n].first_child; c != kNone; c = nodes_[c].next_sibling)
    if (nodes_[c].state == s) return c;
  return kNone;
}

PrefixTree::Index PrefixTree::add_child(Index n, StateId s) {
  if (const Index existing = child(n, s); existing != kNone) return existing;
  if (size() >= node_cap_)
    throw CapExceeded(fmt::format("prefix tree exceeds the node cap of {} prefixes; use active mode or a "
                                  "smaller depth",
                                  node_cap_));
  const auto idx = static_cast<Index>(nodes_.size());
  const int d = nodes_[n].depth + 1;
  nodes_.push_back({n, kNone, nodes_[n].first_child, s, d});
  nodes_[n].first_child = idx;
  max_depth_ = std::max(max_depth_, d);
  return idx;
}

PrefixTree::Index PrefixTree::insert(std::span<const StateId> tau) {
  Index n = kRoot;
  StateId prev = 0;
  for (StateId s : tau) {
    if (compressed_ && s == prev) continue;
    n = add_child(n, s);
    prev = s;
  }
  return n;
}

PrefixTree::Index PrefixTree::find(std::span<const StateId> tau) const {
  Index n = kRoot;
  StateId prev = 0;
  for (StateId s : tau) {
    if (compressed_ && s == prev) continue;
    n = child(n, s);
    if (n == kNone) return kNone;
    prev = s;
  }
  return n;
}

std::vector<StateId> PrefixTree::trajectory(Index n) const {
  std::vector<StateId> out(static_cast<std::size_t>(nodes_[n].depth));
  for (auto i = out.size(); n != kRoot; n = nodes_[n].parent) out[--i] = nodes_[n].state;
  return out;
}

std::vector<std::size_t> PrefixTree::depth_histogram() const {
  std::vector<std::size_t> hist(static_cast<std::size_t>(max_depth_) + 1, 0);
  for (std::size_t i = 1; i < nodes_.size(); ++i) ++hist[static_cast<std::size_t>(nodes_[i].depth)];
  return hist;
}

std::size_t PrefixTree::count_at_depth(int len) const {
  if (len < 1 || len > max_depth_) return 0;
  return depth_histogram()[static_cast<std::size_t>(len)];
}

namespace {

constexpr std::uint32_t kTreeMagic = 0x52544d50;  // "PMTR"
constexpr std::uint32_t kCacheMagic = 0x43544d52;

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw InvalidArgument("truncated binary cache");
  return v;
}

}  // namespace

void PrefixTree::write_binary(std::ostream& out) const {
  put(out, kTreeMagic);
  put(out, static_cast<std::uint8_t>(compressed_));
  put(out, static_cast<std::uint64_t>(nodes_.size()));
  // Parent index and state suffice; children are rebuilt on load.
  for (std::size_t i = 1; i < nodes_.size(); ++i) {
    put(out, nodes_[i].parent);
    put(out, static_cast<std::int32_t>(nodes_[i].state));
  }
}

PrefixTree PrefixTree::read_binary(std::istream& in) {
  if (get<std::uint32_t>(in) != kTreeMagic) throw InvalidArgument("not a prefix tree cache");
  const bool compressed = get<std::uint8_t>(in) != 0;
  const auto n = get<std::uint64_t>(in);
  PrefixTree tree(compressed, std::max<std::size_t>(kDefaultTreeCap, n));
  for (std::uint64_t i = 1; i < n; ++i) {
    const auto parent = get<Index>(in);
    const auto state = get<std::int32_t>(in);
    if (parent >= tree.nodes_.size()) throw InvalidArgument("corrupt prefix tree cache");
    const Index idx = tree.add_child(parent, state);
    if (idx != i) throw InvalidArgument("prefix tree cache is not in insertion order");
  }
  return tree;
}

PrefixTree enumerate_prefix_tree(const MdpModel& mdp, int depth, bool compress, std::size_t node_cap) {
  if (depth < 1) throw InvalidArgument("prefix depth must be at least 1");
  PrefixTree tree(compress, node_cap);
  // Breadth-first, so node indices grow with prefix length.
  std::vector<PrefixTree::Index> frontier, next;
  for (StateId s : mdp.initial_states()) frontier.push_back(tree.add_child(PrefixTree::kRoot, s));
  for (int len = 2; len <= depth; ++len) {
    next.clear();
    for (const auto n : frontier) {
      const StateId s = tree.state(n);
      for (StateId t : mdp.successors(s)) {
        if (compress && t == s) continue;
        next.push_back(tree.add_child(n, t));
      }
    }
    frontier.swap(next);
  }
  return tree;
}

double count_trajectories(const MdpModel& mdp, int len, bool compress) {
  if (len < 1) return 0.0;
  const auto n = static_cast<std::size_t>(mdp.num_states());
  std::vector<double> cur(n, 0.0), nxt(n);
  for (StateId s : mdp.initial_states()) cur[static_cast<std::size_t>(s - 1)] = 1.0;
  for (int step = 2; step <= len; ++step) {
    std::fill(nxt.begin(), nxt.end(), 0.0);
    for (StateId s = 1; s <= static_cast<StateId>(n); ++s)
      for (StateId t : mdp.successors(s))
        if (!(compress && t == s)) nxt[static_cast<std::size_t>(t - 1)] += cur[static_cast<std::size_t>(s - 1)];
    cur.swap(nxt);
  }
  double total = 0.0;
  for (double c : cur) total += c;
  return total;
}

double SignaturePartition::negative_pair_count() const {
  double total = 0.0;
  for (std::size_t i = 0; i < num_classes(); ++i)
    for (std::size_t j = i + 1; j < num_classes(); ++j)
      if (separates(i, j)) total += static_cast<double>(class_sizes[i]) * static_cast<double>(class_sizes[j]);
  return total;
}

void SignaturePartition::write_class_sizes_csv(std::ostream& out) const {
  out << "class,size\n";
  for (std::size_t i = 0; i < num_classes(); ++i) out << i << ',' << class_sizes[i] << '\n';
}

namespace {

bool same_signature(const RowMap& a, const RowMap& b, double eps) {
  for (std::size_t s = 0; s < a.rows.size(); ++s) {
    if (a.rows[s].has_value() != b.rows[s].has_value()) return false;
    if (a.rows[s] && rows_differ(*a.rows[s], *b.rows[s], eps)) return false;
  }
  return true;
}

// Exact bit pattern of a row map; a fast path in front of the eps comparison.
std::uint64_t fingerprint(const RowMap& m) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](std::uint64_t x) {
    h ^= x;
    h *= 1099511628211ull;
  };
  for (const auto& row : m.rows) {
    if (!row) {
      mix(0x9e3779b97f4a7c15ull);
      continue;
    }
    for (double p : *row) {
      std::uint64_t bits = 0;
      std::memcpy(&bits, &p, sizeof bits);
      mix(bits);
    }
  }
  return h;
}

struct Classifier {
  SignaturePartition& part;
  const HistoryOracle& oracle;
  std::unordered_map<std::uint64_t, std::int32_t> exact;

  std::int32_t classify(const std::vector<StateId>& tau) {
    RowMap rows = oracle.query_all(tau);
    const auto fp = fingerprint(rows);
    if (const auto it = exact.find(fp); it != exact.end()) return it->second;
    std::int32_t cls = -1;
    for (std::size_t c = 0; c < part.num_classes(); ++c) {
      if (same_signature(rows, part.representatives[c], part.eps)) {
        cls = static_cast<std::int32_t>(c);
        break;
      }
    }
    if (cls < 0) {
      cls = static_cast<std::int32_t>(part.num_classes());
      part.representatives.push_back(std::move(rows));
      part.class_sizes.push_back(0);
      const std::size_t k = part.num_classes();
      std::vector<std::uint8_t> dist(k * k, 0);
      for (std::size_t i = 0; i + 1 < k; ++i)
        for (std::size_t j = 0; j + 1 < k; ++j) dist[i * k + j] = part.distinguishable[i * (k - 1) + j];
      for (std::size_t i = 0; i + 1 < k; ++i) {
        const bool sep = find_witness(part.representatives[i], part.representatives[k - 1], part.eps).has_value();
        dist[i * k + (k - 1)] = dist[(k - 1) * k + i] = sep ? 1 : 0;
      }
      part.distinguishable = std::move(dist);
    }
    exact.emplace(fp, cls);
    return cls;
  }
};

void classify_from(SignaturePartition& part, const PrefixTree& tree, const HistoryOracle& oracle,
                   std::size_t first) {
  Classifier classifier{part, oracle, {}};
  for (std::size_t c = 0; c < part.num_classes(); ++c) classifier.exact.emplace(fingerprint(part.representatives[c]), static_cast<std::int32_t>(c));
  part.class_of.resize(tree.size() + 1, -1);
  for (std::size_t n = std::max<std::size_t>(first, 1); n <= tree.size(); ++n) {
    const auto cls = classifier.classify(tree.trajectory(static_cast<PrefixTree::Index>(n)));
    part.class_of[n] = cls;
    ++part.class_sizes[static_cast<std::size_t>(cls)];
  }
}

}  // namespace

SignaturePartition compute_signatures(const PrefixTree& tree, const HistoryOracle& oracle, double eps) {
  SignaturePartition part;
  part.eps = eps;
  part.class_of.assign(1, -1);
  classify_from(part, tree, oracle, 1);
  return part;
}

void extend_signatures(SignaturePartition& part, const PrefixTree& tree, const HistoryOracle& oracle) {
  classify_from(part, tree, oracle, part.class_of.size());
}

std::vector<NegativePair> materialize_negatives(const SignaturePartition& part, const PrefixTree& tree,
                                                const NegativeMode& mode) {
  using Index = PrefixTree::Index;
  const std::size_t k = part.num_classes();
  std::vector<std::optional<Witness>> witness(k * k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j)
      if (i != j && part.separates(i, j))
        witness[i * k + j] = find_witness(part.representatives[i], part.representatives[j], part.eps);

  std::vector<NegativePair> out;
  if (mode.kind == NegativeMode::all) {
    std::vector<std::vector<Index>> members(k);
    for (std::size_t n = 1; n < part.class_of.size(); ++n)
      members[static_cast<std::size_t>(part.class_of[n])].push_back(static_cast<Index>(n));
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = i + 1; j < k; ++j) {
        if (!part.separates(i, j)) continue;
        for (Index a : members[i])
          for (Index b : members[j]) out.push_back({a, b, *witness[i * k + j]});
      }
    return out;
  }

  // members[class][terminal state - 1]
  const int n_states = [&] {
    int m = 0;
    for (std::size_t n = 1; n < part.class_of.size(); ++n) m = std::max(m, tree.state(static_cast<Index>(n)));
    return m;
  }();
  std::vector<std::vector<std::vector<Index>>> members(k, std::vector<std::vector<Index>>(static_cast<std::size_t>(n_states)));
  for (std::size_t n = 1; n < part.class_of.size(); ++n)
    members[static_cast<std::size_t>(part.class_of[n])][static_cast<std::size_t>(tree.state(static_cast<Index>(n)) - 1)]
        .push_back(static_cast<Index>(n));

  struct Block {
    const std::vector<Index>* left;
    const std::vector<Index>* right;
    Witness witness;
    std::uint64_t count;
  };
  for (int s = 1; s <= n_states; ++s) {
    for (int t = s; t <= n_states; ++t) {
      std::vector<Block> blocks;
      std::uint64_t total = 0;
      auto add_block = [&](std::size_t ci, int si, std::size_t cj, int sj) {
        const auto& l = members[ci][static_cast<std::size_t>(si - 1)];
        const auto& r = members[cj][static_cast<std::size_t>(sj - 1)];
        const auto cnt = static_cast<std::uint64_t>(l.size()) * r.size();
        if (cnt == 0) return;
        blocks.push_back({&l, &r, *witness[ci * k + cj], cnt});
        total += cnt;
      };
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) {
          if (i == j || !part.separates(i, j)) continue;
          if (s == t) {
            if (i < j) add_block(i, s, j, t);
          } else {
            add_block(i, s, j, t);
          }
        }
      if (total == 0) continue;

      auto emit = [&](std::uint64_t idx) {
        for (const auto& b : blocks) {
          if (idx < b.count) {
            const auto r = b.right->size();
            out.push_back({(*b.left)[idx / r], (*b.right)[idx % r], b.witness});
            return;
          }
          idx -= b.count;
        }
      };
      if (total <= mode.per_group) {
        for (std::uint64_t idx = 0; idx < total; ++idx) emit(idx);
        continue;
      }
      std::mt19937_64 rng(mode.seed ^ (static_cast<std::uint64_t>(s) * 0x9e3779b97f4a7c15ull) ^
                          (static_cast<std::uint64_t>(t) * 0xc2b2ae3d27d4eb4full));
      std::uniform_int_distribution<std::uint64_t> pick(0, total - 1);
      std::unordered_set<std::uint64_t> chosen;
      std::vector<std::uint64_t> order;
      while (order.size() < mode.per_group) {
        const auto idx = pick(rng);
        if (chosen.insert(idx).second) order.push_back(idx);
      }
      for (const auto idx : order) emit(idx);
    }
  }
  return out;
}

void write_trace_cache(const std::string& path, const TraceCacheKey& key, const PrefixTree& tree,
                       std::span<const NegativePair> pairs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot write trace cache " + path);
  put(out, kCacheMagic);
  put(out, key.fixture_hash);
  put(out, static_cast<std::int32_t>(key.depth));
  put(out, key.eps);
  tree.write_binary(out);
  put(out, static_cast<std::uint64_t>(pairs.size()));
  for (const auto& p : pairs) {
    put(out, p.tau);
    put(out, p.tau_prime);
    put(out, static_cast<std::int32_t>(p.witness.state));
    put(out, static_cast<std::int32_t>(p.witness.action));
  }
}

bool read_trace_cache(const std::string& path, const TraceCacheKey& key, PrefixTree& tree,
                      std::vector<NegativePair>& pairs) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  if (get<std::uint32_t>(in) != kCacheMagic) return false;
  TraceCacheKey stored;
  stored.fixture_hash = get<std::uint64_t>(in);
  stored.depth = get<std::int32_t>(in);
  stored.eps = get<double>(in);
  if (!(stored == key)) return false;
  tree = PrefixTree::read_binary(in);
  const auto n = get<std::uint64_t>(in);
  pairs.clear();
  pairs.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    NegativePair p;
    p.tau = get<PrefixTree::Index>(in);
    p.tau_prime = get<PrefixTree::Index>(in);
    p.witness.state = get<std::int32_t>(in);
    p.witness.action = get<std::int32_t>(in);
    if (p.tau > tree.size() || p.tau_prime > tree.size()) throw InvalidArgument("corrupt trace cache");
    pairs.push_back(p);
  }
  return true;
}

}  // namespace rmi
