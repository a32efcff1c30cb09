#pragma once

#include "uniada/attack.hpp"
#include "uniada/baselines.hpp"
#include "uniada/metrics.hpp"
#include "uniada/victim.hpp"
#include "uniada/video.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace uniada {

// ---- images -------------------------------------------------------------

/// Binary PPM (P6, maxval 255). Pixel floats are rounded to whole values.
void write_ppm(const std::filesystem::path &path, const Tensor &frame);
Tensor read_ppm(const std::filesystem::path &path);

/// Loads every .ppm file in the directory in lexicographic filename order.
/// Frames that do not match the expected shape are rejected, not resampled.
Video load_video(const std::filesystem::path &directory,
                 const std::vector<std::size_t> &expected_shape);

void write_labels(const std::filesystem::path &path, const Labels &labels);
Labels load_labels(const std::filesystem::path &path);

// ---- perturbations -------------------------------------------------------

/// Universal perturbation file: magic "UADA", u32 version 1, u32 height,
/// width, channels, f32 epsilon, then h*w*c little-endian f32 values in
/// channel-major row-major order. The loader validates magic, version,
/// payload length, and the |value| <= epsilon bound.
void save_perturbation(const Tensor &tau, double epsilon, const std::filesystem::path &path);
std::pair<Tensor, double> load_perturbation(const std::filesystem::path &path);

/// Container of per-frame records: magic "UADC", u32 version 1, u32 count,
/// then (u32 frame id, embedded perturbation record) per frame.
void save_per_frame_perturbation(const PerFramePerturbation &p, double epsilon,
                                 const std::filesystem::path &path);
std::pair<PerFramePerturbation, double>
load_per_frame_perturbation(const std::filesystem::path &path);

// ---- models ---------------------------------------------------------------

/// Flat file of named parameter tensors: magic "UADM", u32 version 1, model
/// kind, input shape, then (name, shape, little-endian f32 payload) entries.
void save_model(const VictimModel &model, const std::filesystem::path &path);
VictimModel load_model(const std::filesystem::path &path);

// ---- config ----------------------------------------------------------------

/// Plain `key = value` lines, UTF-8, '#' comments. Every attack hyperparameter
/// name is a valid key (lr, lr_grad, bs, beta, epochs, gamma, theta, epsilon),
/// plus seed, decay_factor, decay_interval, pa_steps, pa_step_size.
std::map<std::string, std::string> parse_config_file(const std::filesystem::path &path);

struct BaselineConfig {
  int pa_steps = 50;
  double pa_step_size = 0.2;
};

/// Applies file values onto a config; unknown keys are rejected.
void apply_config(AttackConfig &cfg, BaselineConfig &baseline,
                  const std::map<std::string, std::string> &values);

/// Stable hex digest of the effective configuration, for report metadata.
std::string config_digest(const AttackConfig &cfg);

// ---- reports & traces -------------------------------------------------------

void write_trace_csv(const std::filesystem::path &path, const std::vector<StepTrace> &trace,
                     const std::vector<ObjectiveSpec> &objectives);

/// One row per objective metric: method, seed, objective, metric, threshold,
/// value, units.
void write_report_csv(const std::filesystem::path &path, const EvalReport &report);
void write_report_json(const std::filesystem::path &path, const EvalReport &report);

// ---- filesystem helpers ------------------------------------------------------

/// Writes via a temp file and renames into place.
void atomic_write(const std::filesystem::path &path, const std::string &bytes);

/// Removes files registered while a multi-output operation is in flight if it
/// fails before `commit`.
class OutputGuard {
public:
  ~OutputGuard();
  void track(const std::filesystem::path &path);
  void commit() { committed_ = true; }

private:
  std::vector<std::filesystem::path> paths_;
  bool committed_ = false;
};

} // namespace uniada
