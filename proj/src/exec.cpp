#include "oatforge/exec.hpp"

#include <algorithm>
#include <chrono>
#include <complex>
#include <cstring>
#include <numeric>
#include <stdexcept>

#include "oatforge/parse.hpp"

namespace oatforge {

namespace {

constexpr int kMaxNestDepth = 16;
constexpr long long kMaxWorkloadElements = 1LL << 25;

// Advances a mixed-radix counter; false once it wraps to all zeros.
bool advance(long long* counter, const long long* dims, int count) {
  for (int i = count - 1; i >= 0; --i) {
    if (++counter[i] < dims[i]) return true;
    counter[i] = 0;
  }
  return false;
}

// Evaluated post-collapse loop view of one variant.
struct NestPlan {
  int original_depth = 0;   // N
  int post_depth = 0;       // M = N - g + 1
  int group = 1;            // g
  int directive = 1;        // d
  long long lengths[kMaxNestDepth];  // post-collapse lengths
  long long lowers[kMaxNestDepth];   // lower bounds (unused for the fused slot)
  const RecoveryExpr* recovery = nullptr;

  // Writes original-index values for post position q holding counter c.
  void set_post(long long* idx, int q, long long c) const {
    if (q == post_depth - 1 && group > 1) {
      long long fused = c + 1;
      for (int j = 0; j < group; ++j)
        idx[post_depth - 1 + j] = recovery[j].eval(fused);
    } else {
      idx[q] = lowers[q] + c;
    }
  }
};

NestPlan make_plan(const Kernel& kernel, const Variant& variant) {
  NestPlan plan;
  plan.original_depth = kernel.depth();
  plan.group = variant.collapse.size;
  plan.post_depth = post_collapse_depth(plan.original_depth, plan.group);
  plan.directive = variant.directive_depth;
  if (plan.original_depth > kMaxNestDepth)
    throw std::runtime_error("nest depth > 16 is not supported by the execution backend");
  if (plan.directive < 1 || plan.directive > plan.post_depth)
    throw std::runtime_error("directive depth out of range for this variant");
  auto pm = kernel.param_map();
  for (int q = 1; q <= plan.post_depth; ++q) {
    if (q == plan.post_depth && plan.group > 1) {
      plan.lengths[q - 1] = variant.collapse.fused_length;
      plan.lowers[q - 1] = 1;
    } else {
      const auto& h = kernel.nest[static_cast<size_t>(q) - 1];
      plan.lengths[q - 1] = h.upper.eval(pm) - h.lower.eval(pm) + 1;
      plan.lowers[q - 1] = h.lower.eval(pm);
    }
    if (plan.lengths[q - 1] < 1)
      throw std::runtime_error("loop lengths must be >= 1 to execute a variant");
  }
  if (plan.group > 1) plan.recovery = variant.recovery.data();
  return plan;
}

std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double uniform(std::uint64_t& state, double lo, double hi) {
  return lo + (hi - lo) * (static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53);
}

std::uint64_t fnv1a(const void* data, size_t bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

Schedule make_schedule(long long n, int threads) {
  if (n < 0) throw std::invalid_argument("schedule length must be >= 0");
  if (threads < 1) throw std::invalid_argument("schedule needs >= 1 thread");
  Schedule s;
  s.parallel_length = n;
  s.threads = threads;
  s.chunks.reserve(static_cast<size_t>(threads));
  const long long base = n / threads;
  const long long rem = n % threads;
  long long pos = 0;
  for (int t = 0; t < threads; ++t) {
    long long size = base + (t < rem ? 1 : 0);
    s.chunks.emplace_back(pos, pos + size);
    pos += size;
  }
  return s;
}

long long TraceResult::total_tuples() const {
  long long total = 0;
  for (const auto& buf : per_thread) total += static_cast<long long>(buf.size());
  return tuple_width == 0 ? 0 : total / tuple_width;
}

std::vector<long long> TraceResult::flattened_multiset() const {
  const int w = tuple_width;
  std::vector<long long> flat;
  size_t total = 0;
  for (const auto& buf : per_thread) total += buf.size();
  flat.reserve(total);
  for (const auto& buf : per_thread) flat.insert(flat.end(), buf.begin(), buf.end());
  if (w == 0 || flat.empty()) return flat;

  const size_t rows = flat.size() / static_cast<size_t>(w);
  std::vector<size_t> order(rows);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    const long long* ra = flat.data() + a * static_cast<size_t>(w);
    const long long* rb = flat.data() + b * static_cast<size_t>(w);
    return std::lexicographical_compare(ra, ra + w, rb, rb + w);
  });
  std::vector<long long> out;
  out.reserve(flat.size());
  for (size_t r : order) {
    const long long* row = flat.data() + r * static_cast<size_t>(w);
    out.insert(out.end(), row, row + w);
  }
  return out;
}

TraceResult run_trace(const Kernel& kernel, const Variant& variant, int threads) {
  if (threads < 1) throw std::invalid_argument("run_trace needs threads >= 1");
  NestPlan plan = make_plan(kernel, variant);
  const int n = plan.original_depth;
  const int m = plan.post_depth;
  const int d = plan.directive;

  TraceResult tr;
  tr.tuple_width = n;
  tr.per_thread.resize(static_cast<size_t>(threads));

  Schedule sched = make_schedule(plan.lengths[d - 1], threads);

  const int outer_count = d - 1;
  const int inner_count = m - d;
  long long inner_size = 1;
  for (int q = d; q < m; ++q) inner_size *= plan.lengths[q];
  for (int t = 0; t < threads; ++t) {
    long long chunk = sched.chunks[t].second - sched.chunks[t].first;
    long long outer_size = 1;
    for (int q = 0; q < outer_count; ++q) outer_size *= plan.lengths[q];
    tr.per_thread[t].reserve(static_cast<size_t>(chunk * inner_size * outer_size * n));
  }

  long long outer[kMaxNestDepth] = {};
  long long idx[2 * kMaxNestDepth];
  do {
    for (int q = 0; q < outer_count; ++q) plan.set_post(idx, q, outer[q]);
    for (int t = 0; t < threads; ++t) {
      auto& buf = tr.per_thread[t];
      for (long long p = sched.chunks[t].first; p < sched.chunks[t].second; ++p) {
        plan.set_post(idx, d - 1, p);
        long long inner[kMaxNestDepth] = {};
        do {
          for (int q = 0; q < inner_count; ++q) plan.set_post(idx, d + q, inner[q]);
          buf.insert(buf.end(), idx, idx + n);
        } while (advance(inner, plan.lengths + d, inner_count));
      }
    }
  } while (advance(outer, plan.lengths, outer_count));
  return tr;
}

// ---------------------------------------------------------------------------
// Worker pool

WorkerPool::WorkerPool(int max_workers) : max_workers_(max_workers < 1 ? 1 : max_workers) {
  for (int i = 1; i < max_workers_; ++i)
    workers_.emplace_back([this, i] { worker_loop(i); });
}

WorkerPool::~WorkerPool() {
  {
    std::lock_guard lk(mutex_);
    stop_ = true;
    start_cv_.notify_all();
  }
  for (auto& w : workers_) w.join();
}

void WorkerPool::worker_loop(int index) {
  std::uint64_t seen = 0;
  for (;;) {
    std::pair<long long, long long> chunk{0, 0};
    const std::function<void(long long, long long)>* body = nullptr;
    {
      std::unique_lock lk(mutex_);
      start_cv_.wait(lk, [&] { return stop_ || generation_ != seen; });
      if (stop_) return;
      seen = generation_;
      if (index < static_cast<int>(chunks_.size())) chunk = chunks_[index];
      body = body_;
    }
    if (body && chunk.first < chunk.second) (*body)(chunk.first, chunk.second);
    {
      std::lock_guard lk(mutex_);
      if (--remaining_ == 0) done_cv_.notify_all();
    }
  }
}

void WorkerPool::run(long long n, int threads,
                     const std::function<void(long long, long long)>& body) {
  int t = std::clamp(threads, 1, max_workers_);
  if (t == 1 || workers_.empty()) {
    if (n > 0) body(0, n);
    return;
  }
  // Worker exceptions are captured and rethrown on the calling thread after
  // every chunk finished; nothing may escape a pool thread.
  std::exception_ptr first_error = nullptr;
  std::mutex error_mutex;
  std::function<void(long long, long long)> guarded = [&](long long b, long long e) {
    try {
      body(b, e);
    } catch (...) {
      std::lock_guard lk(error_mutex);
      if (!first_error) first_error = std::current_exception();
    }
  };
  std::pair<long long, long long> own;
  {
    std::lock_guard lk(mutex_);
    chunks_ = make_schedule(n, t).chunks;
    own = chunks_[0];
    body_ = &guarded;
    remaining_ = static_cast<int>(workers_.size());
    ++generation_;
    start_cv_.notify_all();
  }
  if (own.first < own.second) guarded(own.first, own.second);
  {
    std::unique_lock lk(mutex_);
    done_cv_.wait(lk, [&] { return remaining_ == 0; });
    body_ = nullptr;
  }
  if (first_error) std::rethrow_exception(first_error);
}

// ---------------------------------------------------------------------------
// Built-in workloads

namespace {

// Per-element complex update over 4-D data: the real and imaginary parts of
// the field combination are taken separately and rescaled.
class GkvLikeWorkload final : public Workload {
 public:
  explicit GkvLikeWorkload(const Kernel& k) {
    if (k.depth() != 4)
      throw std::runtime_error("builtin 'gkv_like' needs a 4-deep loop nest");
    auto pm = k.param_map();
    for (int q = 0; q < 4; ++q) {
      const auto& h = k.nest[static_cast<size_t>(q)];
      lo_[q] = h.lower.eval(pm);
      len_[q] = h.upper.eval(pm) - lo_[q] + 1;
      if (len_[q] < 1) throw std::runtime_error("builtin 'gkv_like': empty loop");
    }
    total_ = len_[0] * len_[1] * len_[2] * len_[3];
    if (total_ > kMaxWorkloadElements)
      throw std::runtime_error("builtin 'gkv_like': allocation too large (" +
                               std::to_string(total_) + " elements)");
    reset();
  }

  void reset() override {
    std::uint64_t seed = 0x5eedULL;
    auto fill_c = [&seed](std::vector<std::complex<double>>& v, size_t count, double lo,
                          double hi) {
      v.resize(count);
      for (auto& x : v) x = {uniform(seed, lo, hi), uniform(seed, lo, hi)};
    };
    size_t n3 = static_cast<size_t>(len_[1] * len_[2] * len_[3]);
    size_t n4 = static_cast<size_t>(total_);
    fill_c(df1_, n4, 0.3, 0.8);
    fill_c(df2_, n4, 0.3, 0.8);
    fill_c(exw_, n3, 0.2, 0.7);
    fill_c(eyw_, n3, 0.2, 0.7);
    fill_c(bxw_, n3, 0.1, 0.3);
    fill_c(byw_, n3, 0.1, 0.3);
    vl_.resize(static_cast<size_t>(len_[0]));
    for (auto& x : vl_) x = uniform(seed, 0.5, 1.0);
  }

  void element(const long long* idx) override {
    const long long v = idx[0] - lo_[0];
    const long long z = idx[1] - lo_[1];
    const long long x = idx[2] - lo_[2];
    const long long y = idx[3] - lo_[3];
    const size_t off3 = static_cast<size_t>((z * len_[2] + x) * len_[3] + y);
    const size_t off4 = static_cast<size_t>(((v * len_[1] + z) * len_[2] + x) * len_[3] + y);
    const double s = cs1_ * vl_[static_cast<size_t>(v)];
    const std::complex<double> ey = eyw_[off3] - s * byw_[off3];
    const std::complex<double> ex = exw_[off3] - s * bxw_[off3];
    const double re = df1_[off4].real() * ey.real() - df2_[off4].real() * ex.real();
    const double im = df1_[off4].imag() * ey.imag() - df2_[off4].imag() * ex.imag();
    df1_[off4] = std::complex<double>(re, im) * cef_;
  }

  std::uint64_t checksum() const override {
    return fnv1a(df1_.data(), df1_.size() * sizeof(df1_[0]));
  }

 private:
  long long lo_[4] = {};
  long long len_[4] = {};
  long long total_ = 0;
  std::vector<std::complex<double>> df1_, df2_, exw_, eyw_, bxw_, byw_;
  std::vector<double> vl_;
  double cs1_ = 0.2;
  double cef_ = 0.97;
};

// Small 2-D damped axpy, mostly here to exercise the registry paths.
class Axpy2Workload final : public Workload {
 public:
  explicit Axpy2Workload(const Kernel& k) {
    if (k.depth() != 2)
      throw std::runtime_error("builtin 'axpy2' needs a 2-deep loop nest");
    auto pm = k.param_map();
    for (int q = 0; q < 2; ++q) {
      const auto& h = k.nest[static_cast<size_t>(q)];
      lo_[q] = h.lower.eval(pm);
      len_[q] = h.upper.eval(pm) - lo_[q] + 1;
      if (len_[q] < 1) throw std::runtime_error("builtin 'axpy2': empty loop");
    }
    if (len_[0] * len_[1] > kMaxWorkloadElements)
      throw std::runtime_error("builtin 'axpy2': allocation too large");
    reset();
  }

  void reset() override {
    std::uint64_t seed = 0xa11beefULL;
    size_t n = static_cast<size_t>(len_[0] * len_[1]);
    x_.resize(n);
    y_.resize(n);
    for (auto& v : x_) v = uniform(seed, -1.0, 1.0);
    for (auto& v : y_) v = uniform(seed, -1.0, 1.0);
  }

  void element(const long long* idx) override {
    size_t off = static_cast<size_t>((idx[0] - lo_[0]) * len_[1] + (idx[1] - lo_[1]));
    y_[off] = 0.75 * x_[off] + 0.5 * y_[off];
  }

  std::uint64_t checksum() const override {
    return fnv1a(y_.data(), y_.size() * sizeof(double));
  }

 private:
  long long lo_[2] = {};
  long long len_[2] = {};
  std::vector<double> x_, y_;
};

constexpr const char* kGkvLikeSource = R"(kernel gkv_like
param nv = 4
param nz = 8
param ist_xw = 0
param iend_xw = 31
param nyw = 32
body_arrays wkdf1_xw:rw wkdf2_xw:r wkexw_xw:r wkeyw_xw:r wkbxw_xw:r wkbyw_xw:r vl:r
!oat$ install LoopFusion region start
!oat$ install Exchange region start
do iv = 1, 2*nv
  !$omp parallel do
  do iz = (-nz), nz-1
    do mx = ist_xw, iend_xw
      do my = 0, nyw
begin body
        wkdf1_xw(my,mx,iz,iv) = cmplx( &
          real(wkdf1_xw(my,mx,iz,iv))*real(wkeyw_xw(my,mx,iz)-cs1*vl(iv)*wkbyw_xw(my,mx,iz)) &
          - real(wkdf2_xw(my,mx,iz,iv))*real(wkexw_xw(my,mx,iz)-cs1*vl(iv)*wkbxw_xw(my,mx,iz)), &
          aimag(wkdf1_xw(my,mx,iz,iv))*aimag(wkeyw_xw(my,mx,iz)-cs1*vl(iv)*wkbyw_xw(my,mx,iz)) &
          - aimag(wkdf2_xw(my,mx,iz,iv))*aimag(wkexw_xw(my,mx,iz)-cs1*vl(iv)*wkbxw_xw(my,mx,iz))) * cef
end body
      enddo
    enddo
  enddo
  !$omp end parallel do
enddo
!oat$ install Exchange region end
!oat$ install LoopFusion region end
)";

constexpr const char* kAxpy2Source = R"(kernel axpy2
param rows = 256
param cols = 300
body_arrays y:rw x:r
!oat$ install LoopFusion region start
!oat$ install Exchange region start
!$omp parallel do
do i = 1, rows
  do j = 1, cols
begin body
    y(i,j) = 0.75*x(i,j) + 0.5*y(i,j)
end body
  enddo
enddo
!oat$ install Exchange region end
!oat$ install LoopFusion region end
)";

}  // namespace

const std::vector<BuiltinKernel>& builtin_kernels() {
  static const std::vector<BuiltinKernel> kernels = [] {
    std::vector<BuiltinKernel> v;
    v.push_back({"gkv_like",
                 "4-D complex field update (per-element real/imaginary combination)",
                 kGkvLikeSource,
                 [](const Kernel& k) -> std::unique_ptr<Workload> {
                   return std::make_unique<GkvLikeWorkload>(k);
                 }});
    v.push_back({"axpy2", "2-D damped axpy update", kAxpy2Source,
                 [](const Kernel& k) -> std::unique_ptr<Workload> {
                   return std::make_unique<Axpy2Workload>(k);
                 }});
    return v;
  }();
  return kernels;
}

const BuiltinKernel& find_builtin(const std::string& id) {
  for (const auto& b : builtin_kernels())
    if (b.id == id) return b;
  std::string available;
  for (const auto& b : builtin_kernels()) {
    if (!available.empty()) available += ", ";
    available += b.id;
  }
  throw std::runtime_error("unknown builtin kernel '" + id + "' (available: " + available + ")");
}

// ---------------------------------------------------------------------------
// Measured runs

MeasuredRunner::MeasuredRunner(Kernel kernel, std::unique_ptr<Workload> workload,
                               int max_threads)
    : kernel_(std::move(kernel)),
      workload_(std::move(workload)),
      env_(max_threads),
      pool_(max_threads) {}

void MeasuredRunner::run_candidate(const Variant& variant, int num_thread) {
  env_.set_num_threads(num_thread);
  struct Restore {
    ThreadEnv& env;
    ~Restore() { env.set_num_threads(env.max_threads()); }
  } restore{env_};

  NestPlan plan = make_plan(kernel_, variant);
  const int m = plan.post_depth;
  const int d = plan.directive;
  const int outer_count = d - 1;
  const int inner_count = m - d;

  const int t = std::clamp(env_.num_threads(), 1, pool_.max_workers());
  last_run_threads_ = t;

  long long outer[kMaxNestDepth] = {};
  do {
    long long outer_vals[2 * kMaxNestDepth];
    for (int q = 0; q < outer_count; ++q) plan.set_post(outer_vals, q, outer[q]);
    pool_.run(plan.lengths[d - 1], t, [&](long long begin, long long end) {
      long long idx[2 * kMaxNestDepth];
      for (int q = 0; q < outer_count; ++q) idx[q] = outer_vals[q];
      for (long long p = begin; p < end; ++p) {
        plan.set_post(idx, d - 1, p);
        long long inner[kMaxNestDepth] = {};
        do {
          for (int q = 0; q < inner_count; ++q) plan.set_post(idx, d + q, inner[q]);
          workload_->element(idx);
        } while (advance(inner, plan.lengths + d, inner_count));
      }
    });
  } while (advance(outer, plan.lengths, outer_count));
}

std::vector<double> MeasuredRunner::measure(const Variant& variant, int threads, int reps) {
  std::vector<double> costs;
  if (reps <= 0) return costs;
  costs.reserve(static_cast<size_t>(reps));
  workload_->reset();
  for (int r = 0; r < reps; ++r) {
    auto t0 = std::chrono::steady_clock::now();
    run_candidate(variant, threads);
    auto t1 = std::chrono::steady_clock::now();
    double dt = std::chrono::duration<double>(t1 - t0).count();
    costs.push_back(dt > 0 ? dt : 1e-9);
  }
  return costs;
}

std::uint64_t MeasuredRunner::checksum_once(const Variant& variant, int threads) {
  workload_->reset();
  run_candidate(variant, threads);
  return workload_->checksum();
}

std::vector<double> run_measured(const std::string& kernel_id, const Variant& variant,
                                 int threads, int reps) {
  const BuiltinKernel& builtin = find_builtin(kernel_id);
  Kernel kernel = parse_kernel(builtin.kernel_source);
  MeasuredRunner runner(kernel, builtin.make_workload(kernel), threads < 1 ? 1 : threads);
  return runner.measure(variant, threads, reps);
}

}  // namespace oatforge
