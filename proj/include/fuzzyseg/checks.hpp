#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "fuzzyseg/harness.hpp"

// Acceptance criteria as runnable checks, shared by `fuzzyseg verify` and the
// acceptance test binary. Each check compares the library against an
// independent brute-force oracle or runs the desk-scale experiment.

namespace fuzzyseg {

struct CheckResult {
  int criterion = 0;
  std::string name;
  bool passed = false;
  bool skipped = false;
  double seconds = 0.0;
  double budget_seconds = 0.0;  // 0: no runtime bound
  std::string detail;
};

std::string format_check(const CheckResult& r);

CheckResult check_fuzzy_labels(std::uint64_t seed = 1);
CheckResult check_entropy_weights(std::uint64_t seed = 2);
CheckResult check_rebalance(std::uint64_t seed = 3);
CheckResult check_gradients(std::size_t seeds = 10);
CheckResult check_kl_properties(std::uint64_t seed = 5);
CheckResult check_ema(std::uint64_t seed = 6);
CheckResult check_miou(std::uint64_t seed = 7);

// Training configuration used for the desk-scale experiments.
TrainConfig headline_config();

struct HeadlineRuns {
  AblationReport report;  // variants "full" and "baseline"
  std::string full_loss_csv;  // first seed
};
HeadlineRuns run_headline(const TrainConfig& config, const std::filesystem::path& out_dir);

CheckResult check_headline(const HeadlineRuns& runs, std::size_t rare_class, double seconds);

struct ConvergenceSummary {
  std::size_t window = 0;
  std::size_t length = 0;
  double total_at_200 = 0.0;
  double total_final = 0.0;
  double supervised_initial_slope = 0.0;  // per iteration, over iterations 100..200
  double supervised_final_slope = 0.0;    // per iteration, over the last 100
  bool descent_ok = false;
  bool plateau_ok = false;
};
ConvergenceSummary summarize_convergence(const LossSeries& series, std::size_t window = 100);
std::string format_convergence(const ConvergenceSummary& c);
CheckResult check_convergence(const std::string& loss_csv);

// Six variants at reduced length, each run twice; baseline compared with a
// dedicated supervised-only run.
CheckResult check_ablation_harness(const TrainConfig& config);

struct VerifyOptions {
  bool include_long = false;  // criteria 8-10
  std::vector<int> only;      // empty: all
  std::filesystem::path out_dir;
};

std::vector<CheckResult> run_checks(const VerifyOptions& options,
                                    const std::function<void(const CheckResult&)>& on_result = {});

}  // namespace fuzzyseg
