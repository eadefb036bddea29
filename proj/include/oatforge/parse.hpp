#ifndef OATFORGE_PARSE_HPP
#define OATFORGE_PARSE_HPP

// Kernel file frontend. The input format is a self-contained description of
// one tunable loop nest:
//
//   kernel <name>
//   param <ident> = <int>            (one per bound symbol)
//   body_arrays <ident>[:r|:w|:rw] ...
//   !oat$ install LoopFusion region start
//   !oat$ install Exchange (1, 2) region start
//   do i = <bound>, <bound>
//     !$omp parallel do
//     do j = <bound>, <bound>
//   begin body
//     <opaque statements>
//   end body
//     enddo
//   enddo
//   !oat$ install Exchange (1, 2) region end
//   !oat$ install LoopFusion region end
//
// Keywords are case-insensitive. See docs/kernel_format.md for the grammar.

#include <filesystem>
#include <string>
#include <vector>

#include "oatforge/ast.hpp"

namespace oatforge {

// Parses a kernel file. Throws ParseError with a line/column and one of the
// documented diagnostics (syntax error, non-rectangular nest, unbound
// parameter, overlapping regions, duplicate index name, ...).
Kernel parse_kernel(const std::string& source);

// Convenience wrapper; errors from the filesystem carry the path.
Kernel parse_kernel_file(const std::filesystem::path& path);

// Checks that directive regions form a forest: any two line spans are either
// disjoint or one contains the other (identical extents count as nested).
// Returns an empty string when ok, otherwise a diagnostic naming the two
// offending regions.
std::string validate_region_nesting(const std::vector<DirectiveSpec>& directives);

// Canonical text form; parse_kernel(pretty_print(k)) is structurally equal
// to k.
std::string pretty_print(const Kernel& kernel);

}  // namespace oatforge

#endif  // OATFORGE_PARSE_HPP
