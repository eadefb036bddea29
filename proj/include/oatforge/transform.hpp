#ifndef OATFORGE_TRANSFORM_HPP
#define OATFORGE_TRANSFORM_HPP

// Tuning-candidate enumeration: directive placement x loop collapse, with the
// exact index-recovery arithmetic and OpenMP private sets for each candidate.

#include <string>
#include <vector>

#include "oatforge/ast.hpp"

namespace oatforge {

// One recovered original index of a collapsed loop group. For fused index
// f in [1, fused_length]:  value = mod((f-1)/stride, modulus) + offset.
struct RecoveryExpr {
  std::string target;
  long long stride = 1;   // product of the lengths of members inner to this one
  long long modulus = 1;  // this member's length
  long long offset = 0;   // this member's lower bound

  long long eval(long long fused) const {
    return ((fused - 1) / stride) % modulus + offset;
  }
  bool operator==(const RecoveryExpr&) const = default;
};

// Collapse of the innermost `size` loops into one fused loop. size == 1 is
// the identity group (no fused loop is emitted for it).
struct CollapseGroup {
  int start_depth = 1;  // N - size + 1 for nest depth N
  int size = 1;         // g
  std::string fused_name;
  long long fused_length = 0;
  std::vector<std::string> member_names;    // outer-to-inner
  std::vector<long long> member_lengths;    // len_j = u_j - l_j + 1
  std::vector<long long> member_lowers;     // l_j

  bool operator==(const CollapseGroup&) const = default;
};

struct Variant {
  int id = 0;
  CollapseGroup collapse;
  int directive_depth = 1;  // d, 1-based in the post-collapse nest
  bool baseline = false;
  std::vector<std::string> private_set;  // declaration order
  std::vector<RecoveryExpr> recovery;    // empty when collapse.size == 1

  int group_size() const { return collapse.size; }
};

struct EnumerationResult {
  std::vector<Variant> variants;
  std::vector<std::string> warnings;
};

// Builds the collapse group over the innermost g loops, with bounds evaluated
// from params. Throws ParseError on empty loops ("empty loop cannot be
// collapsed") or fused-length overflow.
CollapseGroup build_collapse(const std::vector<LoopHeader>& nest, int g,
                             const std::map<std::string, long long>& params);

// The depth the directive takes for group size g when no Exchange is given:
// the original depth if that loop survives the collapse, else the fused loop.
int pinned_depth(int nest_depth, int g, int original_depth);

// All (g, d) candidates for the kernel, ids in (g asc, d asc) order, the
// (g=1, d=original) candidate flagged baseline. Exchange depths that exceed
// the post-collapse nest depth are skipped with a warning.
EnumerationResult enumerate_variants(const Kernel& kernel);

// Applies the group's recovery arithmetic; the map f -> tuple is a bijection
// onto the rectangular index box in lexicographic order. Throws ParseError
// when f is out of [1, fused_length].
std::vector<std::pair<std::string, long long>> recover_indices(
    const CollapseGroup& collapse, long long fused);

// OpenMP private set for a directive at depth d of the post-collapse nest:
// indices of loops strictly inside d, the recovered original indices when the
// fused loop is at or inside d, and the fused name itself when the fused loop
// is strictly inside d. Never contains the depth-d loop's own index.
std::vector<std::string> compute_private_set(const std::vector<LoopHeader>& nest,
                                             int d, const CollapseGroup& collapse);

// Builds one fully populated variant for the kernel.
Variant make_variant(const Kernel& kernel, int g, int d);

// Report label echoing the usual candidate descriptions, e.g. "original",
// "xy collapse", "directive to the outer-most loop, zxy collapse".
std::string variant_label(const Kernel& kernel, const Variant& v);

// Loop count of the post-collapse nest: N - g + 1.
inline int post_collapse_depth(int nest_depth, int g) { return nest_depth - g + 1; }

}  // namespace oatforge

#endif  // OATFORGE_TRANSFORM_HPP
