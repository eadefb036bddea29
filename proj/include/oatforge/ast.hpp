#ifndef OATFORGE_AST_HPP
#define OATFORGE_AST_HPP

// Kernel representation: an annotated rectangular loop nest with an opaque
// body, plus the tuning directives attached to it.

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace oatforge {

struct SourcePos {
  int line = 0;
  int col = 0;
};

// Parse / validation failure with source location.
class ParseError : public std::runtime_error {
 public:
  ParseError(SourcePos pos, const std::string& message)
      : std::runtime_error("line " + std::to_string(pos.line) + ":" +
                           std::to_string(pos.col) + ": " + message),
        pos_(pos) {}
  SourcePos pos() const { return pos_; }

 private:
  SourcePos pos_;
};

using ParamBindings = std::vector<std::pair<std::string, long long>>;

// Loop bound in the restricted affine form coeff*symbol + offset.
// A pure literal has an empty symbol (and coeff 0). Accepted source forms:
// <int>, <ident>, -<ident>, <ident>+<int>, <ident>-<int>, <int>*<ident>.
struct BoundExpr {
  std::string symbol;
  long long coeff = 0;
  long long offset = 0;

  static BoundExpr literal(long long v) { return BoundExpr{"", 0, v}; }
  static BoundExpr ident(std::string name, long long c = 1, long long off = 0) {
    return BoundExpr{std::move(name), c, off};
  }

  bool is_literal() const { return symbol.empty(); }

  // Substitutes the parameter binding; throws std::out_of_range if unbound.
  long long eval(const std::map<std::string, long long>& params) const {
    if (is_literal()) return offset;
    return coeff * params.at(symbol) + offset;
  }

  // Canonical source form, e.g. "-nz", "nz-1", "2*nv", "7".
  std::string str() const;
  // Same, wrapped in parentheses when the expression starts with '-'.
  std::string str_parenthesized() const;

  bool operator==(const BoundExpr&) const = default;
};

struct LoopHeader {
  std::string index;
  BoundExpr lower;
  BoundExpr upper;
  int depth = 1;  // 1-based, outermost loop is depth 1

  bool operator==(const LoopHeader&) const = default;
};

enum class DirectiveKind { Exchange, LoopFusion };

std::string to_string(DirectiveKind kind);

struct DirectiveSpec {
  DirectiveKind kind = DirectiveKind::Exchange;
  // Exchange only: candidate directive depths. Empty means "all depths".
  std::vector<int> depths;
  // Line span of the region in the source file.
  int region_begin = 0;
  int region_end = 0;
  // Loop-depth span the region resolves to after parsing.
  int depth_begin = 0;
  int depth_end = 0;
};

struct Kernel {
  std::string name;
  ParamBindings params;                  // declaration order
  std::vector<LoopHeader> nest;          // outermost first
  std::vector<std::string> body;         // opaque statement lines, verbatim
  std::vector<std::string> body_reads;   // declared array identifiers
  std::vector<std::string> body_writes;
  std::vector<DirectiveSpec> directives;
  int omp_depth = 1;  // loop depth carrying the original "parallel do"

  int depth() const { return static_cast<int>(nest.size()); }

  std::optional<long long> param(const std::string& ident) const {
    for (const auto& [k, v] : params)
      if (k == ident) return v;
    return std::nullopt;
  }

  std::map<std::string, long long> param_map() const {
    return {params.begin(), params.end()};
  }

  const DirectiveSpec* find_directive(DirectiveKind kind) const {
    for (const auto& d : directives)
      if (d.kind == kind) return &d;
    return nullptr;
  }
  bool has_directive(DirectiveKind kind) const {
    return find_directive(kind) != nullptr;
  }

  // Loop length u - l + 1 at the given 1-based depth, after parameter
  // substitution. Throws ParseError when a bound symbol is unbound.
  long long loop_length(int depth) const;
};

// Structural equality ignoring source line spans (used by the round-trip
// checks; pretty-printing renumbers lines).
bool structurally_equal(const Kernel& a, const Kernel& b);

}  // namespace oatforge

#endif  // OATFORGE_AST_HPP
