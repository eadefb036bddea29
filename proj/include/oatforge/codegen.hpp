#ifndef OATFORGE_CODEGEN_HPP
#define OATFORGE_CODEGEN_HPP

// Emits each tuning candidate as a self-contained Fortran-style subroutine
// wrapped in the dynamic thread-count pattern:
//
//   subroutine <kernel>_v<g>_<d>(NumThread)
//   call omp_set_num_threads ( NumThread )
//   <candidate loop nest>
//   call omp_set_num_threads ( <max_threads> )
//   return
//   end
//
// plus a dispatcher routing to the tuned best candidate and a timing harness.
// Emission is plain text; no Fortran toolchain is required.

#include <filesystem>
#include <string>
#include <vector>

#include "oatforge/transform.hpp"

namespace oatforge {

struct EmittedCandidate {
  int variant_id = 0;
  int group_size = 1;       // g
  int directive_depth = 1;  // d
  bool baseline = false;
  std::string subroutine_name;  // <kernel>_v<g>_<d>
  std::string source_text;
  std::string thread_slot = "NumThread";
};

struct EmittedSuite {
  std::filesystem::path candidates_path;  // <outdir>/<kernel>_candidates.f90
  std::filesystem::path manifest_path;    // <outdir>/<kernel>_manifest
  std::vector<EmittedCandidate> candidates;
  std::string suite_text;
};

// One candidate subroutine. The emitted nest keeps loops outside depth d
// unchanged, places "!$omp parallel do private(...)" immediately above the
// depth-d loop, emits the fused loop as "do <fused> = 1, <length product>"
// with one recovery assignment per collapsed index, and carries the body
// verbatim.
EmittedCandidate emit_candidate(const Kernel& kernel, const Variant& variant,
                                int max_threads);

// Dispatcher reading (best_variant_id, best_threads); an unknown id falls
// back to the baseline candidate at max_threads.
std::string emit_dispatcher(const Kernel& kernel,
                            const std::vector<EmittedCandidate>& candidates,
                            int max_threads);

// Timing harness entry point built on the dispatcher.
std::string emit_harness(const Kernel& kernel);

// Emits all candidates + dispatcher + harness into
// <outdir>/<kernel>_candidates.f90 and writes the manifest
// (variant_id \t g \t d \t subroutine, one record per line).
// Deterministic byte-for-byte given identical inputs.
EmittedSuite emit_suite(const Kernel& kernel, const std::vector<Variant>& variants,
                        int max_threads, const std::filesystem::path& outdir);

// Normal form used by the golden comparisons: continuation lines joined,
// whitespace removed, case folded, blank lines dropped.
std::string normalize_fortran(const std::string& text);

}  // namespace oatforge

#endif  // OATFORGE_CODEGEN_HPP
