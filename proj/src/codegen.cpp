#include "oatforge/codegen.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace oatforge {

namespace {

constexpr size_t kWrapColumn = 72;

// Loop length as source text: (upper - lower + 1), simplified to (upper)
// when the lower bound is the literal 1.
std::string length_expr(const LoopHeader& h) {
  if (h.lower == BoundExpr::literal(1)) return "(" + h.upper.str() + ")";
  return "(" + h.upper.str() + "-" + h.lower.str_parenthesized() + "+1)";
}

// Product of member length expressions, outer-to-inner.
std::string product_expr(const std::vector<const LoopHeader*>& members) {
  std::string out;
  for (size_t i = 0; i < members.size(); ++i) {
    if (i) out += "*";
    out += length_expr(*members[i]);
  }
  return out;
}

// Wraps a statement at the continuation column with a trailing '&'.
void emit_wrapped(std::ostringstream& os, const std::string& line) {
  if (line.size() <= kWrapColumn) {
    os << line << "\n";
    return;
  }
  std::string rest = line;
  std::string indent(rest.find_first_not_of(' ') + 4, ' ');
  bool first = true;
  while (rest.size() > kWrapColumn) {
    // Break after the last separator that keeps the line inside the column
    // (leaving room for " &"); '(' only when nothing better fits.
    size_t limit = kWrapColumn - 2;
    size_t brk = std::string::npos;
    for (size_t i = limit; i > indent.size(); --i) {
      char c = rest[i - 1];
      if (c == '*' || c == ',' || c == ' ') {
        brk = i;
        break;
      }
      if (c == '(' && brk == std::string::npos) brk = i;
    }
    if (brk == std::string::npos) brk = limit;
    os << rest.substr(0, brk) << " &\n";
    rest = indent + rest.substr(brk);
    if (first) first = false;
  }
  os << rest << "\n";
}

std::string subroutine_name_for(const Kernel& k, const Variant& v) {
  return k.name + "_v" + std::to_string(v.group_size()) + "_" +
         std::to_string(v.directive_depth);
}

// Recovery assignment. The outermost member of a whole-nest
// collapse skips the redundant mod; everything else keeps it.
std::string recovery_stmt(const Kernel& k, const Variant& v, size_t member,
                          bool whole_nest) {
  const auto& c = v.collapse;
  const int n = k.depth();
  std::vector<const LoopHeader*> inner;  // members inner to this one
  for (size_t j = member + 1; j < c.member_names.size(); ++j)
    inner.push_back(&k.nest[static_cast<size_t>(c.start_depth - 1) + j]);
  const LoopHeader& self = k.nest[static_cast<size_t>(c.start_depth - 1) + member];
  (void)n;

  std::string counter = "(" + c.fused_name + "-1)";
  std::string quotient;
  if (inner.empty()) {
    quotient = counter;
  } else if (inner.size() == 1) {
    quotient = counter + "/" + length_expr(*inner[0]);
  } else {
    quotient = counter + "/(" + product_expr(inner) + ")";
  }

  std::string offset = self.lower.str_parenthesized();
  if (member == 0 && whole_nest)
    return c.member_names[member] + " = " + quotient + " + " + offset;
  return c.member_names[member] + " = mod(" + quotient + ", " + length_expr(self) +
         ") + " + offset;
}

std::string private_clause(const Variant& v) {
  if (v.private_set.empty()) return "!$omp parallel do";
  std::string s = "!$omp parallel do private(";
  for (size_t i = 0; i < v.private_set.size(); ++i) {
    if (i) s += ", ";
    s += v.private_set[i];
  }
  return s + ")";
}

}  // namespace

EmittedCandidate emit_candidate(const Kernel& kernel, const Variant& variant,
                                int max_threads) {
  const int n = kernel.depth();
  const int g = variant.group_size();
  const int fused_depth = post_collapse_depth(n, g);
  const int d = variant.directive_depth;
  const bool whole_nest = (g == n);

  EmittedCandidate out;
  out.variant_id = variant.id;
  out.group_size = g;
  out.directive_depth = d;
  out.baseline = variant.baseline;
  out.subroutine_name = subroutine_name_for(kernel, variant);

  std::ostringstream os;
  os << "subroutine " << out.subroutine_name << "(" << out.thread_slot << ")\n";
  os << "call omp_set_num_threads ( " << out.thread_slot << " )\n";

  auto indent = [](int depth) { return std::string(2 * (depth - 1), ' '); };

  for (int depth = 1; depth <= fused_depth; ++depth) {
    if (depth == d) emit_wrapped(os, indent(depth) + private_clause(variant));
    if (depth == fused_depth && g > 1) {
      std::vector<const LoopHeader*> members;
      for (int q = variant.collapse.start_depth; q <= n; ++q)
        members.push_back(&kernel.nest[static_cast<size_t>(q) - 1]);
      emit_wrapped(os, indent(depth) + "do " + variant.collapse.fused_name + " = 1, " +
                           product_expr(members));
    } else {
      const auto& h = kernel.nest[static_cast<size_t>(depth) - 1];
      emit_wrapped(os, indent(depth) + "do " + h.index + " = " +
                           h.lower.str_parenthesized() + ", " + h.upper.str());
    }
  }
  if (g > 1) {
    for (size_t m = 0; m < variant.collapse.member_names.size(); ++m)
      emit_wrapped(os, indent(fused_depth + 1) + recovery_stmt(kernel, variant, m, whole_nest));
  }
  for (const auto& line : kernel.body) os << line << "\n";
  for (int depth = fused_depth; depth >= 1; --depth) {
    os << indent(depth) << "enddo\n";
    if (depth == d) os << indent(depth) << "!$omp end parallel do\n";
  }

  os << "call omp_set_num_threads ( " << max_threads << " )\n";
  os << "return\n";
  os << "end subroutine " << out.subroutine_name << "\n";
  out.source_text = os.str();
  return out;
}

std::string emit_dispatcher(const Kernel& kernel,
                            const std::vector<EmittedCandidate>& candidates,
                            int max_threads) {
  const EmittedCandidate* baseline = nullptr;
  for (const auto& c : candidates)
    if (c.baseline) baseline = &c;
  if (!baseline) baseline = &candidates.front();

  std::ostringstream os;
  os << "subroutine " << kernel.name << "_run_best(best_id, best_threads)\n";
  os << "integer :: best_id, best_threads\n";
  if (candidates.size() == 1) {
    os << "call " << candidates.front().subroutine_name << "(best_threads)\n";
  } else {
    os << "select case (best_id)\n";
    for (const auto& c : candidates) {
      os << "case (" << c.variant_id << ")\n";
      os << "  call " << c.subroutine_name << "(best_threads)\n";
    }
    os << "case default\n";
    os << "  call " << baseline->subroutine_name << "(" << max_threads << ")\n";
    os << "end select\n";
  }
  os << "return\n";
  os << "end subroutine " << kernel.name << "_run_best\n";
  return os.str();
}

std::string emit_harness(const Kernel& kernel) {
  std::ostringstream os;
  os << "subroutine " << kernel.name << "_time_candidate(id, nthreads, reps, elapsed)\n";
  os << "integer :: id, nthreads, reps, rep\n";
  os << "double precision :: elapsed, t0\n";
  os << "double precision :: omp_get_wtime\n";
  os << "t0 = omp_get_wtime()\n";
  os << "do rep = 1, reps\n";
  os << "  call " << kernel.name << "_run_best(id, nthreads)\n";
  os << "enddo\n";
  os << "elapsed = omp_get_wtime() - t0\n";
  os << "return\n";
  os << "end subroutine " << kernel.name << "_time_candidate\n";
  return os.str();
}

EmittedSuite emit_suite(const Kernel& kernel, const std::vector<Variant>& variants,
                        int max_threads, const std::filesystem::path& outdir) {
  EmittedSuite suite;
  suite.candidates_path = outdir / (kernel.name + "_candidates.f90");
  suite.manifest_path = outdir / (kernel.name + "_manifest");

  std::ostringstream os;
  os << "! tuning candidates for kernel '" << kernel.name << "'\n";
  os << "! generated by oatforge; do not edit\n";
  for (const auto& v : variants) {
    suite.candidates.push_back(emit_candidate(kernel, v, max_threads));
    os << "\n" << suite.candidates.back().source_text;
  }
  os << "\n" << emit_dispatcher(kernel, suite.candidates, max_threads);
  os << "\n" << emit_harness(kernel);
  suite.suite_text = os.str();

  std::error_code ec;
  std::filesystem::create_directories(outdir, ec);
  if (ec)
    throw std::runtime_error("cannot create output directory '" + outdir.string() +
                             "': " + ec.message());
  {
    std::ofstream f(suite.candidates_path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write '" + suite.candidates_path.string() + "'");
    f << suite.suite_text;
  }
  {
    std::ofstream f(suite.manifest_path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write '" + suite.manifest_path.string() + "'");
    for (const auto& c : suite.candidates)
      f << c.variant_id << "\t" << c.group_size << "\t" << c.directive_depth << "\t"
        << c.subroutine_name << "\n";
  }
  return suite;
}

std::string normalize_fortran(const std::string& text) {
  // Join continuations: a trailing '&' glues the next line (whose optional
  // leading '&' is dropped).
  std::vector<std::string> lines;
  {
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) lines.push_back(line);
  }
  std::vector<std::string> joined;
  std::string current;
  bool continuing = false;
  for (auto& line : lines) {
    size_t b = line.find_first_not_of(" \t");
    std::string t = b == std::string::npos ? "" : line.substr(b);
    if (continuing && !t.empty() && t[0] == '&') t = t.substr(1);
    if (!continuing)
      current = t;
    else
      current += " " + t;
    size_t e = current.find_last_not_of(" \t");
    current = e == std::string::npos ? "" : current.substr(0, e + 1);
    if (!current.empty() && current.back() == '&') {
      current.pop_back();
      continuing = true;
    } else {
      joined.push_back(current);
      current.clear();
      continuing = false;
    }
  }
  if (!current.empty()) joined.push_back(current);

  std::ostringstream os;
  for (const auto& line : joined) {
    std::string out;
    for (char c : line) {
      if (std::isspace(static_cast<unsigned char>(c))) continue;
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    if (!out.empty()) os << out << "\n";
  }
  return os.str();
}

}  // namespace oatforge
