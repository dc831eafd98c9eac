#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace jigen {

// One tile ordering of an n*n grid. order[i] is the tile index placed at
// grid position i, so order is a bijection on {0, ..., n^2-1}.
struct Permutation {
  std::vector<int> order;

  static Permutation identity(int n_tiles);

  bool is_valid() const;  // bijection check
  bool is_identity() const;

  bool operator==(const Permutation&) const = default;
};

// Number of positions at which a and b place different tiles.
// Throws std::invalid_argument when lengths differ.
int hamming(const Permutation& a, const Permutation& b);

// The P tile permutations used as jigsaw classes. entries[0] is always the
// identity (the "ordered" class, jigsaw label 0).
struct PermutationSet {
  int n_tiles = 0;
  uint64_t seed = 0;
  std::vector<Permutation> entries;
  // Minimum Hamming distance over all unordered entry pairs; empty for a
  // singleton set where no pair exists.
  std::optional<int> min_pairwise;

  int count() const { return static_cast<int>(entries.size()); }
};

// Greedy max-min construction: seed with the identity, then repeatedly add
// the pool candidate maximizing the minimum Hamming distance to the already
// selected entries, breaking ties by lexicographically smallest order.
// The pool is every permutation of n_tiles elements when n_tiles! does not
// exceed kPermPoolCap, otherwise a seeded sample of kPermPoolCap distinct
// permutations (always containing the identity).
inline constexpr uint64_t kPermPoolCap = 500000;

PermutationSet generate_permutation_set(int n_tiles, int num_perms,
                                        uint64_t seed);

struct PermSetAudit {
  bool entries_valid = false;   // every entry is a bijection of equal length
  bool distinct = false;        // no duplicated entries
  bool identity_first = false;  // entries[0] is the identity
  std::optional<int> min_pairwise;
  double mean_pairwise = 0.0;

  bool ok() const { return entries_valid && distinct && identity_first; }
};

// Exhaustive pairwise scan; reports violations instead of throwing.
PermSetAudit audit_set(const PermutationSet& set);

// Text format: header line "n_tiles P seed", then one permutation per line
// as space-separated tile indices. load rejects files whose content violates
// the PermutationSet invariants.
void save_permutation_set(const PermutationSet& set,
                          const std::filesystem::path& path);
PermutationSet load_permutation_set(const std::filesystem::path& path);

}  // namespace jigen
