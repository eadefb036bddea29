#ifndef OATFORGE_TUNER_HPP
#define OATFORGE_TUNER_HPP

// Before-execution search: fix the basic parameters, sweep the performance
// parameters (variant id x thread count), pick the argmin of the aggregate
// cost, persist the result, and answer run-time dispatch queries from the
// persisted store.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "oatforge/exec.hpp"
#include "oatforge/transform.hpp"

namespace oatforge {

inline constexpr int kStoreSchemaVersion = 1;

class StoreError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Fixed context of one tuning run: problem sizes and machine limits.
struct BasicParams {
  std::string kernel_name;
  ParamBindings params;
  int max_threads = 1;
  std::string env_tag = "default";
};

// Stable 64-bit hash (hex) over kernel name, sorted bindings, max_threads,
// and environment tag; keys the persisted results.
std::string bp_signature(const BasicParams& bp);

struct PerformanceParams {
  int variant_id = 0;
  int thread_count = 1;
  bool operator==(const PerformanceParams&) const = default;
};

enum class MeasureStatus { ok, failed };

struct Measurement {
  PerformanceParams pp;
  std::vector<double> costs;  // seconds, one per repetition
  double aggregate = 0;       // median of costs
  MeasureStatus status = MeasureStatus::ok;
  std::string error;          // provider failure detail when status == failed
};

struct TuningResult {
  int schema_version = kStoreSchemaVersion;
  BasicParams bp;
  std::string signature;  // derived from bp; also the store file stem
  PerformanceParams best;
  std::vector<Measurement> table;
  std::string timestamp;  // ISO-8601 UTC
};

// Median of the repetition costs (mean of the middle pair for even counts).
double aggregate_cost(const std::vector<double>& costs);

// Measures one performance point; throws on failure (recorded by run_sweep).
class CostProvider {
 public:
  virtual ~CostProvider() = default;
  virtual std::vector<double> measure(const PerformanceParams& pp, int reps) = 0;
};

// Synthetic costs from a deterministic (variant_id, threads) -> seconds map.
class SyntheticCostProvider : public CostProvider {
 public:
  explicit SyntheticCostProvider(std::function<double(int, int)> cost)
      : cost_(std::move(cost)) {}
  std::vector<double> measure(const PerformanceParams& pp, int reps) override {
    std::vector<double> out(static_cast<size_t>(reps), cost_(pp.variant_id, pp.thread_count));
    return out;
  }

 private:
  std::function<double(int, int)> cost_;
};

// Parses the CLI synthetic provider spec:
//   "const:<seconds>" | "inv-threads" | "target:<variant_id>:<threads>"
// (target: a cost bowl whose minimum sits at the given point).
std::unique_ptr<CostProvider> make_synthetic_provider(const std::string& spec);

// Wall-clock costs from the execution backend.
class MeasuredCostProvider : public CostProvider {
 public:
  MeasuredCostProvider(MeasuredRunner& runner, const std::vector<Variant>& variants)
      : runner_(runner), variants_(variants) {}
  std::vector<double> measure(const PerformanceParams& pp, int reps) override;

 private:
  MeasuredRunner& runner_;
  const std::vector<Variant>& variants_;
};

struct SweepPlan {
  std::vector<PerformanceParams> points;  // (variant asc, threads asc), unique
  std::vector<std::string> warnings;
};

// Default thread ladder: {1, 2, 4, 8, 16, 32} clipped to [1, max_threads],
// with max_threads always included.
std::vector<int> default_thread_ladder(int max_threads);

// Full cross product of variants x thread candidates; candidates above
// max_threads are dropped with a warning. Throws on an empty variant list or
// when no thread candidate survives.
SweepPlan plan_sweep(const BasicParams& bp, const std::vector<Variant>& variants,
                     const std::vector<int>& thread_candidates);

// One measurement per point, in plan order, strictly serial. Provider
// exceptions mark the point failed; throws when every point failed.
std::vector<Measurement> run_sweep(const std::vector<PerformanceParams>& plan,
                                   CostProvider& provider, int reps);

// Argmin of the aggregate over successful measurements; ties broken by fewer
// threads, then lower variant id, then the baseline. Throws when no
// measurement succeeded.
PerformanceParams select_best(const std::vector<Measurement>& measurements,
                              int baseline_id = -1);

// Writes <store>/<signature>.json (schema below), atomically, under an
// advisory exclusive lock:
//   {schema_version, bp, best:{variant_id,threads},
//    table:[{variant_id,threads,costs[],aggregate,status}], timestamp}
void persist(const TuningResult& result, const std::filesystem::path& store_dir);

// Reads a persisted result; absent signature -> nullopt. Corrupt files and
// schema version mismatches raise StoreError (never a silent fallback).
std::optional<TuningResult> lookup(const std::string& signature,
                                   const std::filesystem::path& store_dir);

// Run-time layer: resolves the configuration to dispatch. Falls back to the
// baseline at max_threads when the store has no entry or names an unknown
// variant id.
struct DispatchChoice {
  const Variant* variant = nullptr;
  int threads = 1;
  bool from_store = false;
};
DispatchChoice choose_dispatch(const std::optional<TuningResult>& result,
                               const std::vector<Variant>& variants, int max_threads);

std::string now_iso8601_utc();

}  // namespace oatforge

#endif  // OATFORGE_TUNER_HPP
