#pragma once

#include "uniada/io.hpp"
#include "uniada/metrics.hpp"

#include <string>
#include <vector>

namespace uniada {

/// Dispatches one attack method by name: "uniada" (adaptive weights),
/// "uniequal" (fixed equal weights), "fgsm", or "pa".
struct AttackOutcome {
  bool universal = true;
  Tensor tau;                  // universal methods
  PerFramePerturbation frames; // image-specific methods
  std::vector<StepTrace> trace;
};

bool method_is_universal(const std::string &method);

AttackOutcome run_method(const std::string &method, const Video &video, const VictimModel &model,
                         const std::vector<ObjectiveSpec> &objectives, const AttackConfig &cfg,
                         const BaselineConfig &baseline);

std::vector<ErrorRecord> outcome_errors(const AttackOutcome &outcome, const Video &video,
                                        const VictimModel &model,
                                        const std::vector<ObjectiveSpec> &objectives,
                                        const ConversionConfig &conv);

/// Repeated-seed comparison matrix: every method runs once per seed
/// (seed, seed+1, ...), each run is evaluated into a report, and the first two
/// methods are compared with two-sample t-tests on ME and on SR at every
/// threshold.
struct MethodRuns {
  std::string method;
  std::vector<EvalReport> per_seed;
};

struct ComparisonTest {
  std::string objective;
  std::string metric;  // "ME" or "SR"
  double threshold = 0.0; // SR only
  double mean_a = 0.0;
  double mean_b = 0.0;
  TTestResult test;
};

struct CompareOutput {
  std::vector<MethodRuns> methods;
  std::vector<ComparisonTest> tests;
};

CompareOutput run_compare(const Video &video, const VictimModel &model,
                          const std::vector<ObjectiveSpec> &objectives, const AttackConfig &base_cfg,
                          const BaselineConfig &baseline, const std::vector<std::string> &methods,
                          int n_seeds, const ConversionConfig &conv,
                          const std::vector<std::vector<double>> &threshold_ladders);

void write_compare_metrics_csv(const std::filesystem::path &path, const CompareOutput &out);
void write_compare_ttest_csv(const std::filesystem::path &path, const CompareOutput &out);

} // namespace uniada
