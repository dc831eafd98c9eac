#include "jigen/permutation.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>

#include "jigen/rng.hpp"

namespace jigen {

Permutation Permutation::identity(int n_tiles) {
  Permutation p;
  p.order.resize(static_cast<size_t>(n_tiles));
  std::iota(p.order.begin(), p.order.end(), 0);
  return p;
}

bool Permutation::is_valid() const {
  const int n = static_cast<int>(order.size());
  std::vector<bool> seen(static_cast<size_t>(n), false);
  for (int x : order) {
    if (x < 0 || x >= n || seen[static_cast<size_t>(x)]) return false;
    seen[static_cast<size_t>(x)] = true;
  }
  return true;
}

bool Permutation::is_identity() const {
  for (size_t i = 0; i < order.size(); ++i) {
    if (order[i] != static_cast<int>(i)) return false;
  }
  return true;
}

int hamming(const Permutation& a, const Permutation& b) {
  if (a.order.size() != b.order.size()) {
    throw std::invalid_argument(
        "hamming: length mismatch (" + std::to_string(a.order.size()) +
        " vs " + std::to_string(b.order.size()) + ")");
  }
  int d = 0;
  for (size_t i = 0; i < a.order.size(); ++i) {
    d += (a.order[i] != b.order[i]) ? 1 : 0;
  }
  return d;
}

namespace {

// n! saturated just above cap, so callers can compare against pool limits
// without overflow.
uint64_t factorial_capped(int n, uint64_t cap) {
  uint64_t f = 1;
  for (int i = 2; i <= n; ++i) {
    if (f > cap / static_cast<uint64_t>(i)) return cap + 1;
    f *= static_cast<uint64_t>(i);
  }
  return f;
}

// Candidate pool in lexicographic order. Exhaustive when n_tiles! fits under
// the cap; otherwise a seeded sample of cap distinct permutations plus the
// identity, sorted so that greedy tie-breaks stay lexicographic.
std::vector<std::vector<int>> build_pool(int n_tiles, uint64_t seed) {
  std::vector<std::vector<int>> pool;
  const uint64_t total = factorial_capped(n_tiles, kPermPoolCap);
  if (total <= kPermPoolCap) {
    pool.reserve(total);
    std::vector<int> cur(static_cast<size_t>(n_tiles));
    std::iota(cur.begin(), cur.end(), 0);
    do {
      pool.push_back(cur);
    } while (std::next_permutation(cur.begin(), cur.end()));
  } else {
    Rng rng(stream_seed(seed, static_cast<uint64_t>(StreamKind::perm_pool)));
    std::set<std::vector<int>> sampled;
    std::vector<int> cur(static_cast<size_t>(n_tiles));
    std::iota(cur.begin(), cur.end(), 0);
    sampled.insert(cur);  // identity is always a candidate
    while (sampled.size() < kPermPoolCap) {
      rng.shuffle(cur.begin(), cur.end());
      sampled.insert(cur);
    }
    pool.assign(sampled.begin(), sampled.end());
  }
  return pool;
}

}  // namespace

PermutationSet generate_permutation_set(int n_tiles, int num_perms,
                                        uint64_t seed) {
  if (n_tiles < 1) {
    throw std::invalid_argument("generate_permutation_set: n_tiles must be >= 1");
  }
  if (num_perms < 1) {
    throw std::invalid_argument("generate_permutation_set: P must be >= 1");
  }

  auto pool = build_pool(n_tiles, seed);
  if (static_cast<uint64_t>(num_perms) > pool.size()) {
    throw std::invalid_argument(
        "generate_permutation_set: P=" + std::to_string(num_perms) +
        " exceeds candidate pool size " + std::to_string(pool.size()));
  }

  PermutationSet set;
  set.n_tiles = n_tiles;
  set.seed = seed;
  set.entries.reserve(static_cast<size_t>(num_perms));
  set.entries.push_back(Permutation::identity(n_tiles));

  const size_t pool_n = pool.size();
  std::vector<int> min_dist(pool_n, std::numeric_limits<int>::max());
  std::vector<char> used(pool_n, 0);

  // The pool is sorted, so the identity is at index 0 of the exhaustive pool;
  // locate it in general to mark it used.
  {
    Permutation id = Permutation::identity(n_tiles);
    auto it = std::lower_bound(pool.begin(), pool.end(), id.order);
    if (it != pool.end() && *it == id.order) {
      used[static_cast<size_t>(it - pool.begin())] = 1;
    }
  }

  auto dist_to = [n_tiles](const std::vector<int>& a, const std::vector<int>& b) {
    int d = 0;
    for (int i = 0; i < n_tiles; ++i) d += (a[i] != b[i]) ? 1 : 0;
    return d;
  };

  int overall_min = std::numeric_limits<int>::max();
  const std::vector<int>* last_added = &set.entries.back().order;

  while (set.entries.size() < static_cast<size_t>(num_perms)) {
    // Fold the newest entry into every candidate's distance-to-selected.
    for (size_t i = 0; i < pool_n; ++i) {
      const int d = dist_to(pool[i], *last_added);
      if (d < min_dist[i]) min_dist[i] = d;
    }
    // Scan in lexicographic order; strict > keeps the first (smallest) among
    // ties.
    int best = -1;
    size_t best_i = 0;
    for (size_t i = 0; i < pool_n; ++i) {
      if (!used[i] && min_dist[i] > best) {
        best = min_dist[i];
        best_i = i;
      }
    }
    used[best_i] = 1;
    set.entries.push_back(Permutation{pool[best_i]});
    last_added = &set.entries.back().order;
    overall_min = std::min(overall_min, best);
  }

  if (set.entries.size() >= 2) set.min_pairwise = overall_min;
  return set;
}

PermSetAudit audit_set(const PermutationSet& set) {
  PermSetAudit a;
  if (set.entries.empty()) return a;

  a.entries_valid = true;
  for (const auto& p : set.entries) {
    if (static_cast<int>(p.order.size()) != set.n_tiles || !p.is_valid()) {
      a.entries_valid = false;
    }
  }
  a.identity_first = set.entries.front().is_identity() &&
                     static_cast<int>(set.entries.front().order.size()) ==
                         set.n_tiles;

  a.distinct = true;
  const size_t n = set.entries.size();
  int min_d = std::numeric_limits<int>::max();
  double sum_d = 0.0;
  size_t pairs = 0;
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      if (set.entries[i].order.size() != set.entries[j].order.size()) {
        a.entries_valid = false;
        continue;
      }
      const int d = hamming(set.entries[i], set.entries[j]);
      if (d == 0) a.distinct = false;
      min_d = std::min(min_d, d);
      sum_d += d;
      ++pairs;
    }
  }
  if (pairs > 0) {
    a.min_pairwise = min_d;
    a.mean_pairwise = sum_d / static_cast<double>(pairs);
  }
  return a;
}

void save_permutation_set(const PermutationSet& set,
                          const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("save_permutation_set: cannot open " +
                             path.string());
  }
  out << set.n_tiles << ' ' << set.count() << ' ' << set.seed << '\n';
  for (const auto& p : set.entries) {
    for (size_t i = 0; i < p.order.size(); ++i) {
      if (i) out << ' ';
      out << p.order[i];
    }
    out << '\n';
  }
  if (!out) {
    throw std::runtime_error("save_permutation_set: write failed for " +
                             path.string());
  }
}

PermutationSet load_permutation_set(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("load_permutation_set: cannot open " +
                             path.string());
  }
  PermutationSet set;
  int p_count = 0;
  std::string header;
  if (!std::getline(in, header)) {
    throw std::runtime_error("load_permutation_set: empty file " +
                             path.string());
  }
  {
    std::istringstream hs(header);
    if (!(hs >> set.n_tiles >> p_count >> set.seed) || set.n_tiles < 1 ||
        p_count < 1) {
      throw std::runtime_error("load_permutation_set: bad header '" + header +
                               "'");
    }
  }
  std::string line;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    Permutation p;
    int x;
    while (ls >> x) p.order.push_back(x);
    if (static_cast<int>(p.order.size()) != set.n_tiles || !p.is_valid()) {
      throw std::runtime_error("load_permutation_set: line " +
                               std::to_string(line_no) +
                               " is not a valid permutation of " +
                               std::to_string(set.n_tiles) + " tiles");
    }
    set.entries.push_back(std::move(p));
  }
  if (set.count() != p_count) {
    throw std::runtime_error(
        "load_permutation_set: header claims " + std::to_string(p_count) +
        " permutations, file has " + std::to_string(set.count()));
  }
  if (!set.entries.front().is_identity()) {
    throw std::runtime_error(
        "load_permutation_set: first entry must be the identity");
  }
  const auto audit = audit_set(set);
  if (!audit.distinct) {
    throw std::runtime_error("load_permutation_set: duplicated entries");
  }
  set.min_pairwise = audit.min_pairwise;
  return set;
}

}  // namespace jigen
