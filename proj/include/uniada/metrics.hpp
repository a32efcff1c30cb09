#pragma once

#include "uniada/attack.hpp"
#include "uniada/baselines.hpp"

#include <string>
#include <vector>

namespace uniada {

/// Converted-unit scales. Steering is always reported in degrees; the
/// acceleration scale is configurable because the raw-to-km/h factor depends
/// on the victim's data conventions (1.0 keeps raw units).
struct ConversionConfig {
  double accel_to_kmh = 1.0;
};

/// Linear, sign-preserving unit conversion for one objective's raw value.
double convert_units(double raw, const std::string &objective_id, const ConversionConfig &conv);

std::string objective_units(const std::string &objective_id, const ConversionConfig &conv);

/// Per-frame signed errors e_i = d_i * (m_i(x_adv) - m_i(x_ori)) in raw model
/// units plus their converted counterparts.
struct ErrorRecord {
  std::size_t frame = 0;
  std::vector<double> raw;
  std::vector<double> converted;
};

std::vector<ErrorRecord> signed_errors(const Video &video, const Tensor &tau,
                                       const VictimModel &model,
                                       const std::vector<ObjectiveSpec> &objectives,
                                       const ConversionConfig &conv);

/// Per-frame variant; the perturbation map must cover every frame id.
std::vector<ErrorRecord> signed_errors(const Video &video, const PerFramePerturbation &perturbation,
                                       const VictimModel &model,
                                       const std::vector<ObjectiveSpec> &objectives,
                                       const ConversionConfig &conv);

/// Arithmetic mean of the signed converted errors for one objective.
double mean_error(const std::vector<ErrorRecord> &records, std::size_t objective);

double mean_error_raw(const std::vector<ErrorRecord> &records, std::size_t objective);

/// Fraction of records whose signed converted error strictly exceeds delta.
double success_rate(const std::vector<ErrorRecord> &records, std::size_t objective, double delta);

/// Threshold ladders used for reporting, in converted units.
std::vector<double> default_threshold_ladder(const std::string &objective_id);

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  int direction = 0;    // sign of mean(a) - mean(b)
  bool degenerate = false; // zero pooled variance with unequal means
};

/// Two-sided two-sample Student t-test with pooled variance,
/// df = n_a + n_b - 2.
TTestResult two_sample_ttest(const std::vector<double> &group_a, const std::vector<double> &group_b);

struct ObjectiveReport {
  std::string id;
  int direction = +1;
  double mean_error = 0.0; // converted units
  double mean_error_raw = 0.0;
  std::string units;
  std::vector<double> thresholds;
  std::vector<double> success_rates;
};

struct EvalReport {
  std::string method;
  std::uint64_t seed = 0;
  std::string config_digest;
  std::vector<ObjectiveReport> objectives;
};

EvalReport build_report(const std::vector<ErrorRecord> &records,
                        const std::vector<ObjectiveSpec> &objectives, const ConversionConfig &conv,
                        const std::vector<std::vector<double>> &threshold_ladders,
                        const std::string &method, std::uint64_t seed,
                        const std::string &config_digest);

} // namespace uniada
