#include "oatforge/transform.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace oatforge {

namespace {

long long checked_mul(long long a, long long b) {
  long long r = 0;
  if (__builtin_mul_overflow(a, b, &r))
    throw ParseError({0, 0}, "fused length overflows the platform integer range");
  return r;
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::string ordinal(int n) {
  static const char* words[] = {"",       "first", "second", "third", "fourth",
                                "fifth",  "sixth", "seventh", "eighth", "ninth"};
  if (n >= 1 && n <= 9) return words[n];
  return std::to_string(n) + "th";
}

}  // namespace

CollapseGroup build_collapse(const std::vector<LoopHeader>& nest, int g,
                             const std::map<std::string, long long>& params) {
  const int n = static_cast<int>(nest.size());
  if (g < 1 || g > n)
    throw ParseError({0, 0}, "collapse group size " + std::to_string(g) +
                                 " out of range [1, " + std::to_string(n) + "]");
  CollapseGroup out;
  out.size = g;
  out.start_depth = n - g + 1;
  out.fused_length = 1;
  for (int depth = out.start_depth; depth <= n; ++depth) {
    const auto& h = nest[static_cast<size_t>(depth) - 1];
    long long lo, hi;
    try {
      lo = h.lower.eval(params);
      hi = h.upper.eval(params);
    } catch (const std::out_of_range&) {
      throw ParseError({0, 0}, "unbound parameter in bounds of loop '" + h.index + "'");
    }
    long long len = hi - lo + 1;
    if (len <= 0)
      throw ParseError({0, 0}, "empty loop cannot be collapsed: '" + h.index +
                                   "' has length " + std::to_string(len));
    out.member_names.push_back(h.index);
    out.member_lengths.push_back(len);
    out.member_lowers.push_back(lo);
    out.fused_length = checked_mul(out.fused_length, len);
  }
  out.fused_name = join(out.member_names, "_");
  return out;
}

static std::vector<RecoveryExpr> make_recovery(const CollapseGroup& c) {
  // Suffix-product strides: the innermost member has stride 1.
  std::vector<RecoveryExpr> out(c.member_names.size());
  long long stride = 1;
  for (int j = static_cast<int>(c.member_names.size()) - 1; j >= 0; --j) {
    out[j].target = c.member_names[j];
    out[j].stride = stride;
    out[j].modulus = c.member_lengths[j];
    out[j].offset = c.member_lowers[j];
    stride = checked_mul(stride, c.member_lengths[j]);
  }
  return out;
}

std::vector<std::pair<std::string, long long>> recover_indices(
    const CollapseGroup& collapse, long long fused) {
  if (fused < 1 || fused > collapse.fused_length)
    throw ParseError({0, 0}, "fused index " + std::to_string(fused) +
                                 " out of range [1, " + std::to_string(collapse.fused_length) + "]");
  std::vector<std::pair<std::string, long long>> out;
  for (const auto& r : make_recovery(collapse))
    out.emplace_back(r.target, r.eval(fused));
  return out;
}

int pinned_depth(int nest_depth, int g, int original_depth) {
  if (g == 1) return original_depth;
  int fused_depth = nest_depth - g + 1;
  return original_depth < fused_depth ? original_depth : fused_depth;
}

std::vector<std::string> compute_private_set(const std::vector<LoopHeader>& nest,
                                             int d, const CollapseGroup& collapse) {
  const int n = static_cast<int>(nest.size());
  const int g = collapse.size;
  const int fused_depth = n - g + 1;
  std::vector<std::string> out;
  // Uncollapsed loops strictly inside the directive.
  const int last_original = g > 1 ? n - g : n;
  for (int depth = d + 1; depth <= last_original; ++depth)
    out.push_back(nest[static_cast<size_t>(depth) - 1].index);
  if (g > 1 && fused_depth >= d) {
    // Recovered original indices are assigned inside the parallel loop.
    for (const auto& name : collapse.member_names) out.push_back(name);
    // The fused counter itself is private unless it is the parallel loop.
    if (fused_depth > d) out.push_back(collapse.fused_name);
  }
  return out;
}

Variant make_variant(const Kernel& kernel, int g, int d) {
  Variant v;
  v.collapse = build_collapse(kernel.nest, g, kernel.param_map());
  v.directive_depth = d;
  v.baseline = (g == 1 && d == kernel.omp_depth);
  v.private_set = compute_private_set(kernel.nest, d, v.collapse);
  if (g > 1) v.recovery = make_recovery(v.collapse);
  return v;
}

EnumerationResult enumerate_variants(const Kernel& kernel) {
  EnumerationResult res;
  const int n = kernel.depth();

  // Empty loops make the kernel untunable.
  for (int depth = 1; depth <= n; ++depth) {
    long long len = kernel.loop_length(depth);
    if (len <= 0)
      throw ParseError({0, 0}, "kernel is untunable: loop '" +
                                   kernel.nest[static_cast<size_t>(depth) - 1].index +
                                   "' has length " + std::to_string(len));
  }

  const DirectiveSpec* exchange = kernel.find_directive(DirectiveKind::Exchange);
  const bool fusion = kernel.has_directive(DirectiveKind::LoopFusion);

  std::set<std::pair<int, int>> coords;  // (g, d)
  coords.insert({1, kernel.omp_depth});  // baseline is always present

  const int g_max = fusion ? n : 1;
  for (int g = 1; g <= g_max; ++g) {
    const int depth_count = post_collapse_depth(n, g);
    if (!exchange) {
      coords.insert({g, pinned_depth(n, g, kernel.omp_depth)});
    } else if (exchange->depths.empty()) {
      for (int d = 1; d <= depth_count; ++d) coords.insert({g, d});
    } else {
      for (int d : exchange->depths) {
        if (d > depth_count) {
          std::ostringstream os;
          os << "Exchange depth " << d << " exceeds the " << depth_count
             << "-deep nest after collapsing " << g << " loops; skipped";
          res.warnings.push_back(os.str());
          continue;
        }
        coords.insert({g, d});
      }
    }
  }

  if (!exchange && !fusion)
    res.warnings.push_back("nothing to tune: kernel has no directives, only the "
                           "baseline candidate is generated");

  int id = 0;
  for (const auto& [g, d] : coords) {
    Variant v = make_variant(kernel, g, d);
    v.id = ++id;
    res.variants.push_back(std::move(v));
  }
  return res;
}

std::string variant_label(const Kernel& kernel, const Variant& v) {
  const int n = kernel.depth();
  const int g = v.collapse.size;
  const int depth_count = post_collapse_depth(n, g);
  const int d = v.directive_depth;

  std::string collapse_part;
  if (g > 1) {
    // Short group name: member names with their first character dropped
    // (mx, my -> "xy"); falls back to the fused name for short identifiers.
    std::string shortname;
    bool ok = true;
    for (const auto& m : v.collapse.member_names) {
      if (m.size() < 2) { ok = false; break; }
      shortname += m.substr(1);
    }
    collapse_part = (ok ? shortname : v.collapse.fused_name) + " collapse";
  }

  std::string placement;
  if (d == 1)
    placement = "directive to the outer-most loop";
  else if (d == depth_count)
    placement = "directive to the innermost loop";
  else
    placement = "directive to the " + ordinal(d) + " loop from the outside";

  if (g == 1) return v.baseline ? "original" : placement;
  if (d == pinned_depth(n, g, kernel.omp_depth)) return collapse_part;
  return placement + ", " + collapse_part;
}

}  // namespace oatforge
