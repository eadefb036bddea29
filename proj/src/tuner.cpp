#include "oatforge/tuner.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <json.hpp>

namespace oatforge {

using ordered_json = nlohmann::ordered_json;

std::string bp_signature(const BasicParams& bp) {
  ParamBindings sorted = bp.params;
  std::sort(sorted.begin(), sorted.end());
  std::ostringstream os;
  os << "kernel=" << bp.kernel_name << ";";
  for (const auto& [k, v] : sorted) os << "param:" << k << "=" << v << ";";
  os << "tmax=" << bp.max_threads << ";env=" << bp.env_tag;
  std::string s = os.str();

  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

double aggregate_cost(const std::vector<double>& costs) {
  if (costs.empty()) throw std::invalid_argument("aggregate of empty cost list");
  std::vector<double> sorted = costs;
  std::sort(sorted.begin(), sorted.end());
  size_t n = sorted.size();
  if (n % 2 == 1) return sorted[n / 2];
  return 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
}

std::unique_ptr<CostProvider> make_synthetic_provider(const std::string& spec) {
  auto bad = [&]() -> std::unique_ptr<CostProvider> {
    throw std::runtime_error(
        "bad synthetic provider spec '" + spec +
        "' (expected const:<seconds>, inv-threads, or target:<variant_id>:<threads>)");
  };
  if (spec == "inv-threads")
    return std::make_unique<SyntheticCostProvider>(
        [](int, int t) { return 1.0 / static_cast<double>(t); });
  if (spec.rfind("const:", 0) == 0) {
    double c = 0;
    try {
      c = std::stod(spec.substr(6));
    } catch (const std::exception&) {
      return bad();
    }
    // Non-positive costs are legal here; the sweep rejects them per point,
    // which is the documented measurement-failure path.
    return std::make_unique<SyntheticCostProvider>([c](int, int) { return c; });
  }
  if (spec.rfind("target:", 0) == 0) {
    std::string rest = spec.substr(7);
    size_t colon = rest.find(':');
    if (colon == std::string::npos) return bad();
    int vid = 0, thr = 0;
    try {
      vid = std::stoi(rest.substr(0, colon));
      thr = std::stoi(rest.substr(colon + 1));
    } catch (const std::exception&) {
      return bad();
    }
    return std::make_unique<SyntheticCostProvider>([vid, thr](int v, int t) {
      return 1.0 + 0.01 * std::abs(v - vid) + 0.001 * std::abs(t - thr);
    });
  }
  return bad();
}

std::vector<double> MeasuredCostProvider::measure(const PerformanceParams& pp, int reps) {
  for (const auto& v : variants_)
    if (v.id == pp.variant_id) return runner_.measure(v, pp.thread_count, reps);
  throw std::runtime_error("variant id " + std::to_string(pp.variant_id) +
                           " is not in the enumerated set");
}

std::vector<int> default_thread_ladder(int max_threads) {
  std::vector<int> ladder;
  for (int t : {1, 2, 4, 8, 16, 32})
    if (t <= max_threads) ladder.push_back(t);
  if (ladder.empty() || ladder.back() != max_threads) ladder.push_back(max_threads);
  return ladder;
}

SweepPlan plan_sweep(const BasicParams& bp, const std::vector<Variant>& variants,
                     const std::vector<int>& thread_candidates) {
  if (variants.empty()) throw std::runtime_error("plan_sweep: empty variant list");
  SweepPlan plan;
  std::set<int> threads;
  for (int t : thread_candidates) {
    if (t < 1 || t > bp.max_threads) {
      plan.warnings.push_back("thread candidate " + std::to_string(t) +
                              " outside [1, " + std::to_string(bp.max_threads) +
                              "]; dropped");
      continue;
    }
    threads.insert(t);
  }
  if (threads.empty())
    throw std::runtime_error("plan_sweep: no usable thread candidate (max_threads = " +
                             std::to_string(bp.max_threads) + ")");
  std::set<int> ids;
  for (const auto& v : variants) ids.insert(v.id);
  for (int id : ids)
    for (int t : threads) plan.points.push_back({id, t});
  return plan;
}

std::vector<Measurement> run_sweep(const std::vector<PerformanceParams>& plan,
                                   CostProvider& provider, int reps) {
  if (reps < 1) throw std::invalid_argument("run_sweep: reps must be >= 1");
  std::vector<Measurement> out;
  out.reserve(plan.size());
  size_t failures = 0;
  for (const auto& pp : plan) {
    Measurement m;
    m.pp = pp;
    try {
      m.costs = provider.measure(pp, reps);
      if (m.costs.empty()) throw std::runtime_error("provider returned no costs");
      for (double c : m.costs)
        if (!(c > 0)) throw std::runtime_error("provider returned a non-positive cost");
      m.aggregate = aggregate_cost(m.costs);
    } catch (const std::exception& e) {
      m.status = MeasureStatus::failed;
      m.error = e.what();
      m.costs.clear();
      m.aggregate = 0;
      ++failures;
    }
    out.push_back(std::move(m));
  }
  if (failures == plan.size())
    throw std::runtime_error("no successful measurements (all " +
                             std::to_string(plan.size()) + " points failed)");
  return out;
}

PerformanceParams select_best(const std::vector<Measurement>& measurements,
                              int baseline_id) {
  const Measurement* best = nullptr;
  auto better = [&](const Measurement& a, const Measurement& b) {
    if (a.aggregate != b.aggregate) return a.aggregate < b.aggregate;
    if (a.pp.thread_count != b.pp.thread_count)
      return a.pp.thread_count < b.pp.thread_count;
    if (a.pp.variant_id != b.pp.variant_id) return a.pp.variant_id < b.pp.variant_id;
    return (a.pp.variant_id == baseline_id) && (b.pp.variant_id != baseline_id);
  };
  for (const auto& m : measurements) {
    if (m.status != MeasureStatus::ok) continue;
    if (!best || better(m, *best)) best = &m;
  }
  if (!best) throw std::runtime_error("select_best: no successful measurement");
  return best->pp;
}

namespace {

ordered_json to_json(const TuningResult& r) {
  ordered_json j;
  j["schema_version"] = r.schema_version;
  ordered_json bp;
  bp["kernel"] = r.bp.kernel_name;
  ordered_json params;
  for (const auto& [k, v] : r.bp.params) params[k] = v;
  bp["params"] = params;
  bp["max_threads"] = r.bp.max_threads;
  bp["env_tag"] = r.bp.env_tag;
  j["bp"] = bp;
  j["best"] = {{"variant_id", r.best.variant_id}, {"threads", r.best.thread_count}};
  ordered_json table = ordered_json::array();
  for (const auto& m : r.table) {
    ordered_json row;
    row["variant_id"] = m.pp.variant_id;
    row["threads"] = m.pp.thread_count;
    row["costs"] = m.costs;
    row["aggregate"] = m.aggregate;
    row["status"] = m.status == MeasureStatus::ok ? "ok" : "failed";
    table.push_back(row);
  }
  j["table"] = table;
  j["timestamp"] = r.timestamp;
  return j;
}

TuningResult from_json(const ordered_json& j, const std::string& path) {
  TuningResult r;
  int version = j.at("schema_version").get<int>();
  if (version != kStoreSchemaVersion)
    throw StoreError("tuning store '" + path + "': schema version mismatch: expected " +
                     std::to_string(kStoreSchemaVersion) + ", found " +
                     std::to_string(version));
  r.schema_version = version;
  const auto& bp = j.at("bp");
  r.bp.kernel_name = bp.at("kernel").get<std::string>();
  for (const auto& [k, v] : bp.at("params").items())
    r.bp.params.emplace_back(k, v.get<long long>());
  r.bp.max_threads = bp.at("max_threads").get<int>();
  r.bp.env_tag = bp.at("env_tag").get<std::string>();
  r.signature = bp_signature(r.bp);
  r.best.variant_id = j.at("best").at("variant_id").get<int>();
  r.best.thread_count = j.at("best").at("threads").get<int>();
  for (const auto& row : j.at("table")) {
    Measurement m;
    m.pp.variant_id = row.at("variant_id").get<int>();
    m.pp.thread_count = row.at("threads").get<int>();
    m.costs = row.at("costs").get<std::vector<double>>();
    m.aggregate = row.at("aggregate").get<double>();
    m.status = row.at("status").get<std::string>() == "ok" ? MeasureStatus::ok
                                                           : MeasureStatus::failed;
    r.table.push_back(std::move(m));
  }
  r.timestamp = j.at("timestamp").get<std::string>();
  return r;
}

// Advisory exclusive lock held for the duration of a store write.
class StoreLock {
 public:
  explicit StoreLock(const std::filesystem::path& target) {
    lock_path_ = target;
    lock_path_ += ".lock";
    fd_ = ::open(lock_path_.c_str(), O_CREAT | O_RDWR, 0644);
    if (fd_ >= 0) ::flock(fd_, LOCK_EX);
  }
  ~StoreLock() {
    if (fd_ >= 0) {
      ::flock(fd_, LOCK_UN);
      ::close(fd_);
    }
  }

 private:
  std::filesystem::path lock_path_;
  int fd_ = -1;
};

}  // namespace

void persist(const TuningResult& result, const std::filesystem::path& store_dir) {
  std::error_code ec;
  std::filesystem::create_directories(store_dir, ec);
  if (ec)
    throw StoreError("cannot create store directory '" + store_dir.string() +
                     "': " + ec.message());
  std::string sig = result.signature.empty() ? bp_signature(result.bp) : result.signature;
  std::filesystem::path target = store_dir / (sig + ".json");

  StoreLock lock(target);
  std::filesystem::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw StoreError("cannot write tuning store '" + tmp.string() + "'");
    f << to_json(result).dump(2) << "\n";
  }
  std::filesystem::rename(tmp, target, ec);
  if (ec)
    throw StoreError("cannot move tuning store into place at '" + target.string() +
                     "': " + ec.message());
}

std::optional<TuningResult> lookup(const std::string& signature,
                                   const std::filesystem::path& store_dir) {
  std::filesystem::path target = store_dir / (signature + ".json");
  std::ifstream f(target, std::ios::binary);
  if (!f) return std::nullopt;
  ordered_json j;
  try {
    j = ordered_json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw StoreError("tuning store '" + target.string() + "': parse error: " + e.what());
  }
  try {
    return from_json(j, target.string());
  } catch (const StoreError&) {
    throw;
  } catch (const nlohmann::json::exception& e) {
    throw StoreError("tuning store '" + target.string() +
                     "': malformed document: " + e.what());
  }
}

DispatchChoice choose_dispatch(const std::optional<TuningResult>& result,
                               const std::vector<Variant>& variants, int max_threads) {
  if (variants.empty()) throw std::runtime_error("choose_dispatch: no variants");
  const Variant* baseline = nullptr;
  for (const auto& v : variants)
    if (v.baseline) baseline = &v;
  if (!baseline) baseline = &variants.front();

  DispatchChoice choice;
  choice.variant = baseline;
  choice.threads = max_threads;
  if (!result) return choice;
  for (const auto& v : variants) {
    if (v.id == result->best.variant_id) {
      choice.variant = &v;
      choice.threads = result->best.thread_count;
      choice.from_store = true;
      return choice;
    }
  }
  return choice;  // persisted id unknown: baseline fallback
}

std::string now_iso8601_utc() {
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace oatforge
