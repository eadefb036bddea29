#ifndef OATFORGE_EXEC_HPP
#define OATFORGE_EXEC_HPP

// In-process execution backend. Variants run two ways:
//  - as a trace, recording the visited index tuples under an emulated OpenMP
//    static block schedule (the oracle for the loop transformations), and
//  - as a measurable workload over built-in arithmetic kernels, with real
//    concurrent workers pinned to disjoint chunks.

#include <cstdint>
#include <condition_variable>
#include <functional>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

#include "oatforge/transform.hpp"

namespace oatforge {

// Static block schedule over [0, n): the first (n mod t) chunks have size
// ceil(n/t), the rest floor(n/t). Chunks are contiguous, disjoint, ordered,
// and cover [0, n); threads beyond n get empty chunks.
struct Schedule {
  long long parallel_length = 0;
  int threads = 1;
  std::vector<std::pair<long long, long long>> chunks;  // [begin, end) per thread
};

Schedule make_schedule(long long n, int threads);

struct TraceResult {
  int tuple_width = 0;
  // One flat row-major buffer per thread; each tuple is tuple_width values in
  // original nest order, tuples in per-thread visit order.
  std::vector<std::vector<long long>> per_thread;

  long long total_tuples() const;
  // All tuples across threads, sorted lexicographically (multiset form).
  std::vector<long long> flattened_multiset() const;
};

// Visits exactly the tuples the emitted candidate would visit: loops outside
// the directive run sequentially, the parallel loop is chunked per the static
// schedule, and fused indices are recovered per tuple.
TraceResult run_trace(const Kernel& kernel, const Variant& variant, int threads);

// Emulation of omp_set_num_threads / thread-count restore; every set call is
// logged so tests can assert the wrapper discipline.
class ThreadEnv {
 public:
  explicit ThreadEnv(int max_threads)
      : max_(max_threads < 1 ? 1 : max_threads), current_(max_) {}

  void set_num_threads(int n) {
    current_ = n < 1 ? 1 : n;
    log_.push_back(current_);
  }
  int num_threads() const { return current_; }
  int max_threads() const { return max_; }
  const std::vector<int>& set_calls() const { return log_; }
  void clear_log() { log_.clear(); }

 private:
  int max_;
  int current_;
  std::vector<int> log_;
};

// A built-in kernel body: element() applies the per-element computation at
// one original-index tuple. Bodies are associativity-free per-element
// updates, so output is bitwise identical across variants and thread counts.
class Workload {
 public:
  virtual ~Workload() = default;
  virtual void reset() = 0;  // deterministic array (re)initialization
  virtual void element(const long long* idx) = 0;
  virtual std::uint64_t checksum() const = 0;
};

struct BuiltinKernel {
  std::string id;
  std::string summary;
  std::string kernel_source;  // default-size kernel file text
  std::function<std::unique_ptr<Workload>(const Kernel&)> make_workload;
};

const std::vector<BuiltinKernel>& builtin_kernels();
// Throws std::runtime_error listing the available ids when absent.
const BuiltinKernel& find_builtin(const std::string& id);

// Fork-join pool over static chunks; the calling thread runs chunk 0.
class WorkerPool {
 public:
  explicit WorkerPool(int max_workers);
  ~WorkerPool();
  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  int max_workers() const { return max_workers_; }
  // Splits [0, n) over `threads` workers (capped at max_workers) and blocks
  // until every chunk finished.
  void run(long long n, int threads, const std::function<void(long long, long long)>& body);

 private:
  void worker_loop(int index);

  int max_workers_;
  std::vector<std::thread> workers_;
  std::mutex mutex_;
  std::condition_variable start_cv_;
  std::condition_variable done_cv_;
  const std::function<void(long long, long long)>* body_ = nullptr;
  std::vector<std::pair<long long, long long>> chunks_;
  std::uint64_t generation_ = 0;
  int remaining_ = 0;
  bool stop_ = false;
};

// Runs built-in workloads through candidates with the generated-code
// semantics: set NumThread on entry, execute the variant's schedule with the
// effective thread count, restore max_threads on exit (on every path).
class MeasuredRunner {
 public:
  MeasuredRunner(Kernel kernel, std::unique_ptr<Workload> workload, int max_threads);

  void run_candidate(const Variant& variant, int num_thread);
  // Wall-clock seconds per repetition (timing the full candidate call,
  // set/restore included). reps == 0 yields an empty list.
  std::vector<double> measure(const Variant& variant, int threads, int reps);
  // Checksum after one candidate run from a fresh reset.
  std::uint64_t checksum_once(const Variant& variant, int threads);

  const Kernel& kernel() const { return kernel_; }
  ThreadEnv& env() { return env_; }
  // Worker count actually used by the most recent parallel region.
  int last_run_threads() const { return last_run_threads_; }

 private:
  Kernel kernel_;
  std::unique_ptr<Workload> workload_;
  ThreadEnv env_;
  WorkerPool pool_;
  int last_run_threads_ = 0;
};

// Convenience entry: instantiates the builtin at its default sizes and
// measures one (variant, threads) cell.
std::vector<double> run_measured(const std::string& kernel_id, const Variant& variant,
                                 int threads, int reps);

}  // namespace oatforge

#endif  // OATFORGE_EXEC_HPP
