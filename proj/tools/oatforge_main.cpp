// oatforge: enumerate OpenMP directive-placement / loop-collapse candidates
// for an annotated kernel, search (variant x thread count) for the cheapest
// configuration, and answer dispatch queries from the persisted results.

#include <sstream>
#include <cstdlib>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "oatforge/codegen.hpp"
#include "oatforge/exec.hpp"
#include "oatforge/parse.hpp"
#include "oatforge/report.hpp"
#include "oatforge/tuner.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUserError = 1;
constexpr int kExitVerifyFailure = 2;
constexpr int kExitMeasureFailure = 3;

struct Options {
  std::string kernel_path;
  std::string out_dir = "generated";
  std::string store_dir = "oatforge-store";
  std::string threads_list;
  std::string provider = "measured";
  std::string format = "table";
  std::string env_tag = "default";
  std::vector<std::string> param_overrides;
  int max_threads = 0;  // 0 -> hardware concurrency
  int reps = 5;
};

int hardware_threads() {
  unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<int>(n);
}

std::vector<int> parse_thread_list(const std::string& text) {
  std::vector<int> out;
  std::istringstream is(text);
  std::string item;
  while (std::getline(is, item, ',')) {
    if (item.empty()) continue;
    size_t used = 0;
    int v = std::stoi(item, &used);
    if (used != item.size()) throw std::runtime_error("bad thread count '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw std::runtime_error("empty thread list");
  return out;
}

oatforge::Kernel load_kernel(const Options& opt) {
  oatforge::Kernel k = oatforge::parse_kernel_file(opt.kernel_path);
  for (const auto& ov : opt.param_overrides) {
    size_t eq = ov.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("bad --set '" + ov + "' (expected name=value)");
    std::string name = ov.substr(0, eq);
    long long value = std::stoll(ov.substr(eq + 1));
    bool found = false;
    for (auto& [pname, pvalue] : k.params) {
      if (pname == name) {
        pvalue = value;
        found = true;
      }
    }
    if (!found)
      throw std::runtime_error("--set names unknown parameter '" + name + "'");
  }
  return k;
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

oatforge::BasicParams make_bp(const oatforge::Kernel& k, const Options& opt) {
  oatforge::BasicParams bp;
  bp.kernel_name = k.name;
  bp.params = k.params;
  bp.max_threads = opt.max_threads;
  bp.env_tag = opt.env_tag;
  return bp;
}

int cmd_generate(const Options& opt) {
  using namespace oatforge;
  Kernel k = load_kernel(opt);
  EnumerationResult enumeration = enumerate_variants(k);
  print_warnings(enumeration.warnings);
  EmittedSuite suite = emit_suite(k, enumeration.variants, opt.max_threads, opt.out_dir);

  Report report;
  report.title = "candidates for kernel '" + k.name + "'";
  report.columns = {"variant", "g", "d", "baseline", "subroutine", "label"};
  for (size_t i = 0; i < enumeration.variants.size(); ++i) {
    const Variant& v = enumeration.variants[i];
    report.add_row({static_cast<long long>(v.id), static_cast<long long>(v.group_size()),
                    static_cast<long long>(v.directive_depth),
                    std::string(v.baseline ? "yes" : ""),
                    suite.candidates[i].subroutine_name, variant_label(k, v)});
  }
  std::cout << render(report, parse_report_format(opt.format));
  std::cerr << "wrote " << suite.candidates_path.string() << " and "
            << suite.manifest_path.string() << "\n";
  return kExitOk;
}

int cmd_tune(const Options& opt) {
  using namespace oatforge;
  Kernel k = load_kernel(opt);
  EnumerationResult enumeration = enumerate_variants(k);
  print_warnings(enumeration.warnings);
  const std::vector<Variant>& variants = enumeration.variants;

  BasicParams bp = make_bp(k, opt);
  std::vector<int> ladder = opt.threads_list.empty()
                                ? default_thread_ladder(bp.max_threads)
                                : parse_thread_list(opt.threads_list);
  SweepPlan plan = plan_sweep(bp, variants, ladder);
  print_warnings(plan.warnings);

  std::unique_ptr<CostProvider> provider;
  std::unique_ptr<MeasuredRunner> runner;
  if (opt.provider == "measured") {
    const BuiltinKernel& builtin = find_builtin(k.name);
    runner = std::make_unique<MeasuredRunner>(k, builtin.make_workload(k), bp.max_threads);
    provider = std::make_unique<MeasuredCostProvider>(*runner, variants);
  } else if (opt.provider.rfind("synthetic:", 0) == 0) {
    provider = make_synthetic_provider(opt.provider.substr(10));
  } else {
    throw std::runtime_error("unknown provider '" + opt.provider +
                             "' (expected measured or synthetic:<spec>)");
  }

  std::vector<Measurement> table;
  try {
    table = run_sweep(plan.points, *provider, opt.reps);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitMeasureFailure;
  }

  int baseline_id = -1;
  for (const auto& v : variants)
    if (v.baseline) baseline_id = v.id;
  PerformanceParams best = select_best(table, baseline_id);

  TuningResult result;
  result.bp = bp;
  result.signature = bp_signature(bp);
  result.best = best;
  result.table = table;
  result.timestamp = now_iso8601_utc();
  persist(result, opt.store_dir);

  auto label_of = [&](int id) -> std::string {
    for (const auto& v : variants)
      if (v.id == id) return variant_label(k, v);
    return "";
  };
  Report report;
  report.title = "sweep for kernel '" + k.name + "' (bp " + result.signature + ")";
  report.columns = {"variant", "threads", "aggregate_s", "status", "best", "label"};
  for (const auto& m : table) {
    bool winner = m.pp == best;
    report.add_row({static_cast<long long>(m.pp.variant_id),
                    static_cast<long long>(m.pp.thread_count), m.aggregate,
                    std::string(m.status == MeasureStatus::ok ? "ok" : "failed"),
                    std::string(winner ? "<-- best" : ""), label_of(m.pp.variant_id)});
  }
  std::cout << render(report, parse_report_format(opt.format));
  std::cerr << "best: variant " << best.variant_id << " with " << best.thread_count
            << " threads; stored under " << opt.store_dir << "/" << result.signature
            << ".json\n";
  return kExitOk;
}

int cmd_best(const Options& opt) {
  using namespace oatforge;
  Kernel k = load_kernel(opt);
  EnumerationResult enumeration = enumerate_variants(k);
  BasicParams bp = make_bp(k, opt);
  std::string sig = bp_signature(bp);
  std::optional<TuningResult> stored = lookup(sig, opt.store_dir);
  DispatchChoice choice = choose_dispatch(stored, enumeration.variants, bp.max_threads);

  Report report;
  report.title = "best configuration for kernel '" + k.name + "' (bp " + sig + ")";
  report.columns = {"variant", "threads", "source", "label"};
  report.add_row({static_cast<long long>(choice.variant->id),
                  static_cast<long long>(choice.threads),
                  std::string(choice.from_store ? "store" : "absent: baseline fallback"),
                  variant_label(k, *choice.variant)});
  std::cout << render(report, parse_report_format(opt.format));
  return kExitOk;
}

// Speedup-vs-variant summary from the persisted sweep: per variant, the best
// thread count, the speedup over the original configuration (baseline at max
// threads), and the speedup over the variant's own max-thread run.
int cmd_report(const Options& opt) {
  using namespace oatforge;
  Kernel k = load_kernel(opt);
  EnumerationResult enumeration = enumerate_variants(k);
  BasicParams bp = make_bp(k, opt);
  std::string sig = bp_signature(bp);
  std::optional<TuningResult> stored = lookup(sig, opt.store_dir);
  if (!stored) {
    std::cerr << "error: no tuning result for bp " << sig << " under '" << opt.store_dir
              << "' (run tune first)\n";
    return kExitUserError;
  }

  int baseline_id = -1;
  for (const auto& v : enumeration.variants)
    if (v.baseline) baseline_id = v.id;
  auto aggregate_at = [&](int id, int threads) -> const Measurement* {
    for (const auto& m : stored->table)
      if (m.pp.variant_id == id && m.pp.thread_count == threads &&
          m.status == MeasureStatus::ok)
        return &m;
    return nullptr;
  };
  const Measurement* original = aggregate_at(baseline_id, bp.max_threads);

  Report report;
  report.title = "speedup vs variant for kernel '" + k.name + "' (bp " + sig + ")";
  report.columns = {"variant",         "label",           "best_threads", "aggregate_s",
                    "speedup_vs_orig", "speedup_vs_tmax", "best"};
  for (const auto& v : enumeration.variants) {
    std::vector<Measurement> mine;
    for (const auto& m : stored->table)
      if (m.pp.variant_id == v.id && m.status == MeasureStatus::ok) mine.push_back(m);
    std::vector<Cell> row{static_cast<long long>(v.id), variant_label(k, v)};
    if (mine.empty()) {
      row.insert(row.end(), {std::string("n/a"), std::string("n/a"), std::string("n/a"),
                             std::string("n/a"), std::string("")});
    } else {
      PerformanceParams best = select_best(mine, baseline_id);
      const Measurement* at_best = aggregate_at(v.id, best.thread_count);
      const Measurement* at_tmax = aggregate_at(v.id, bp.max_threads);
      row.push_back(static_cast<long long>(best.thread_count));
      row.push_back(at_best->aggregate);
      if (original)
        row.push_back(original->aggregate / at_best->aggregate);
      else
        row.push_back(std::string("n/a"));
      if (at_tmax)
        row.push_back(at_tmax->aggregate / at_best->aggregate);
      else
        row.push_back(std::string("n/a"));
      row.push_back(std::string(
          v.id == stored->best.variant_id && best.thread_count == stored->best.thread_count
              ? "<-- best"
              : ""));
    }
    report.add_row(std::move(row));
  }
  std::cout << render(report, parse_report_format(opt.format));
  return kExitOk;
}

int cmd_verify(const Options& opt) {
  using namespace oatforge;
  Kernel k = load_kernel(opt);
  EnumerationResult enumeration = enumerate_variants(k);
  print_warnings(enumeration.warnings);

  std::vector<int> threads = opt.threads_list.empty()
                                 ? std::vector<int>{1, 2, 3, 4}
                                 : parse_thread_list(opt.threads_list);
  for (int t : threads)
    if (t < 1) throw std::runtime_error("thread counts must be >= 1");

  const Variant* baseline = nullptr;
  for (const auto& v : enumeration.variants)
    if (v.baseline) baseline = &v;
  if (!baseline) baseline = &enumeration.variants.front();
  std::vector<long long> reference = run_trace(k, *baseline, 1).flattened_multiset();

  Report report;
  report.title = "trace equivalence for kernel '" + k.name + "'";
  report.columns = {"variant", "g", "d", "label", "status"};
  int failures = 0;
  std::string first_failure;
  for (const auto& v : enumeration.variants) {
    std::string status = "pass";
    for (int t : threads) {
      std::vector<long long> got = run_trace(k, v, t).flattened_multiset();
      if (got != reference) {
        status = "FAIL (t=" + std::to_string(t) + ")";
        ++failures;
        if (first_failure.empty()) {
          size_t w = static_cast<size_t>(k.depth());
          size_t limit = std::min(reference.size(), got.size());
          size_t row = 0;
          while (row * w < limit &&
                 std::equal(reference.begin() + row * w, reference.begin() + (row + 1) * w,
                            got.begin() + row * w))
            ++row;
          std::ostringstream os;
          os << "variant " << v.id << " (g=" << v.group_size()
             << ", d=" << v.directive_depth << ", t=" << t << ") first mismatching tuple (";
          for (size_t c = 0; c < w && row * w + c < got.size(); ++c)
            os << (c ? "," : "") << got[row * w + c];
          os << ") expected (";
          for (size_t c = 0; c < w && row * w + c < reference.size(); ++c)
            os << (c ? "," : "") << reference[row * w + c];
          os << ")";
          first_failure = os.str();
        }
        break;
      }
    }
    report.add_row({static_cast<long long>(v.id), static_cast<long long>(v.group_size()),
                    static_cast<long long>(v.directive_depth), variant_label(k, v),
                    status});
  }
  std::cout << render(report, parse_report_format(opt.format));
  if (failures > 0) {
    std::cerr << "error: " << failures << " variant(s) failed equivalence; "
              << first_failure << "\n";
    return kExitVerifyFailure;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  Options opt;
  opt.max_threads = hardware_threads();

  CLI::App app{"oatforge: OpenMP loop-nest autotuning toolkit"};
  app.require_subcommand(1);

  auto add_common = [&](CLI::App* sub, bool with_kernel = true) {
    if (with_kernel)
      sub->add_option("kernel", opt.kernel_path, "annotated kernel file")->required();
    sub->add_option("--max-threads", opt.max_threads,
                    "maximum OpenMP thread count (restore value)")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("--format", opt.format, "report format: table, json, csv")
        ->capture_default_str();
  };

  CLI::App* gen = app.add_subcommand("generate", "emit the candidate suite + manifest");
  add_common(gen);
  gen->add_option("--out", opt.out_dir, "output directory")->capture_default_str();

  CLI::App* tune = app.add_subcommand("tune", "sweep (variant x threads) and persist the best");
  add_common(tune);
  tune->add_option("--store", opt.store_dir, "tuning store directory")
      ->envname("OATFORGE_STORE")
      ->capture_default_str();
  tune->add_option("--threads", opt.threads_list,
                   "comma-separated thread candidates (default ladder 1,2,4,... up to max)");
  tune->add_option("--reps", opt.reps, "repetitions per measurement")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  tune->add_option("--provider", opt.provider,
                   "cost provider: measured | synthetic:const:<s> | synthetic:inv-threads"
                   " | synthetic:target:<variant>:<threads>")
      ->capture_default_str();
  tune->add_option("--env-tag", opt.env_tag, "environment tag in the store key")
      ->capture_default_str();

  CLI::App* best = app.add_subcommand("best", "print the persisted best configuration");
  add_common(best);
  best->add_option("--store", opt.store_dir, "tuning store directory")
      ->envname("OATFORGE_STORE")
      ->capture_default_str();
  best->add_option("--env-tag", opt.env_tag, "environment tag in the store key")
      ->capture_default_str();

  CLI::App* report = app.add_subcommand("report",
                                        "speedup-vs-variant table from the persisted sweep");
  add_common(report);
  report->add_option("--store", opt.store_dir, "tuning store directory")
      ->envname("OATFORGE_STORE")
      ->capture_default_str();
  report->add_option("--env-tag", opt.env_tag, "environment tag in the store key")
      ->capture_default_str();

  CLI::App* verify = app.add_subcommand("verify", "check every variant against the trace oracle");
  add_common(verify);
  verify->add_option("--threads", opt.threads_list,
                     "comma-separated thread counts to trace (default 1,2,3,4)");
  verify->add_option("--set", opt.param_overrides,
                     "override a kernel parameter, e.g. --set nz=2 (repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUserError;
  }

  try {
    if (gen->parsed()) return cmd_generate(opt);
    if (tune->parsed()) return cmd_tune(opt);
    if (best->parsed()) return cmd_best(opt);
    if (report->parsed()) return cmd_report(opt);
    if (verify->parsed()) return cmd_verify(opt);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUserError;
  }
  return kExitUserError;
}
