#include "uniada/metrics.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace uniada {

double convert_units(double raw, const std::string &objective_id, const ConversionConfig &conv) {
  if (objective_id == "steering")
    return raw * (180.0 / std::numbers::pi);
  if (objective_id == "acceleration") {
    if (!(conv.accel_to_kmh > 0.0))
      throw std::invalid_argument("convert_units: acceleration scale must be positive");
    return raw * conv.accel_to_kmh;
  }
  throw std::invalid_argument("convert_units: unknown objective '" + objective_id + "'");
}

std::string objective_units(const std::string &objective_id, const ConversionConfig &conv) {
  if (objective_id == "steering")
    return "deg";
  if (objective_id == "acceleration")
    return conv.accel_to_kmh == 1.0 ? "raw" : "kmh";
  throw std::invalid_argument("objective_units: unknown objective '" + objective_id + "'");
}

namespace {

std::vector<ErrorRecord> errors_from_frames(const Video &original, const Video &adversarial,
                                            const VictimModel &model,
                                            const std::vector<ObjectiveSpec> &objectives,
                                            const ConversionConfig &conv) {
  std::vector<ErrorRecord> records;
  records.reserve(original.size());
  for (std::size_t n = 0; n < original.size(); ++n) {
    const auto orig = predict(model, original.frames[n]);
    const auto adv = predict(model, adversarial.frames[n]);
    ErrorRecord rec;
    rec.frame = original.ids[n];
    for (const ObjectiveSpec &obj : objectives) {
      const std::size_t h = model.head_index(obj.id);
      const double raw = obj.direction * (static_cast<double>(adv[h]) - static_cast<double>(orig[h]));
      rec.raw.push_back(raw);
      rec.converted.push_back(convert_units(raw, obj.id, conv));
    }
    records.push_back(std::move(rec));
  }
  return records;
}

} // namespace

std::vector<ErrorRecord> signed_errors(const Video &video, const Tensor &tau,
                                       const VictimModel &model,
                                       const std::vector<ObjectiveSpec> &objectives,
                                       const ConversionConfig &conv) {
  validate_objectives(objectives, model);
  if (video.size() == 0)
    throw std::invalid_argument("signed_errors: empty video");
  const Video adversarial = process_images(video, tau);
  return errors_from_frames(video, adversarial, model, objectives, conv);
}

std::vector<ErrorRecord> signed_errors(const Video &video, const PerFramePerturbation &perturbation,
                                       const VictimModel &model,
                                       const std::vector<ObjectiveSpec> &objectives,
                                       const ConversionConfig &conv) {
  validate_objectives(objectives, model);
  if (video.size() == 0)
    throw std::invalid_argument("signed_errors: empty video");

  Video adversarial;
  adversarial.ids = video.ids;
  for (std::size_t n = 0; n < video.size(); ++n) {
    const std::size_t id = video.ids[n];
    if (id >= perturbation.size())
      throw std::invalid_argument("signed_errors: perturbation map missing frame " +
                                  std::to_string(id));
    const Tensor &tau = perturbation.taus[id];
    if (!tau.same_shape(video.frames[n]))
      throw std::invalid_argument("signed_errors: perturbation for frame " + std::to_string(id) +
                                  " has shape " + shape_to_string(tau.shape()));
    Tensor adv = video.frames[n];
    for (std::size_t k = 0; k < adv.numel(); ++k)
      adv[k] = std::clamp(adv[k] + tau[k], 0.0f, 255.0f);
    adversarial.frames.push_back(std::move(adv));
  }
  return errors_from_frames(video, adversarial, model, objectives, conv);
}

double mean_error(const std::vector<ErrorRecord> &records, std::size_t objective) {
  if (records.empty())
    throw std::invalid_argument("mean_error: no records");
  double acc = 0.0;
  for (const ErrorRecord &r : records)
    acc += r.converted.at(objective);
  return acc / static_cast<double>(records.size());
}

double mean_error_raw(const std::vector<ErrorRecord> &records, std::size_t objective) {
  if (records.empty())
    throw std::invalid_argument("mean_error: no records");
  double acc = 0.0;
  for (const ErrorRecord &r : records)
    acc += r.raw.at(objective);
  return acc / static_cast<double>(records.size());
}

double success_rate(const std::vector<ErrorRecord> &records, std::size_t objective, double delta) {
  if (!(delta >= 0.0))
    throw std::invalid_argument("success_rate: threshold must be >= 0");
  if (records.empty())
    return 0.0;
  std::size_t hits = 0;
  for (const ErrorRecord &r : records)
    if (r.converted.at(objective) > delta)
      ++hits;
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

std::vector<double> default_threshold_ladder(const std::string &objective_id) {
  if (objective_id == "steering")
    return {3.5, 14.0, 21.0, 28.0};
  if (objective_id == "acceleration")
    return {4.6, 13.8, 23.0, 32.2};
  throw std::invalid_argument("default_threshold_ladder: unknown objective '" + objective_id + "'");
}

TTestResult two_sample_ttest(const std::vector<double> &a, const std::vector<double> &b) {
  if (a.size() < 2 || b.size() < 2)
    throw std::invalid_argument("two_sample_ttest: each group needs at least 2 samples");

  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  double mean_a = 0.0, mean_b = 0.0;
  for (double v : a)
    mean_a += v;
  for (double v : b)
    mean_b += v;
  mean_a /= na;
  mean_b /= nb;

  double ssa = 0.0, ssb = 0.0;
  for (double v : a)
    ssa += (v - mean_a) * (v - mean_a);
  for (double v : b)
    ssb += (v - mean_b) * (v - mean_b);

  const double df = na + nb - 2.0;
  const double pooled = (ssa + ssb) / df;
  const double diff = mean_a - mean_b;

  TTestResult res;
  res.direction = diff > 0.0 ? 1 : (diff < 0.0 ? -1 : 0);
  if (pooled == 0.0) {
    if (diff == 0.0) {
      res.t = 0.0;
      res.p = 1.0;
    } else {
      res.t = diff > 0.0 ? std::numeric_limits<double>::infinity()
                         : -std::numeric_limits<double>::infinity();
      res.p = 0.0;
      res.degenerate = true;
    }
    return res;
  }

  res.t = diff / std::sqrt(pooled * (1.0 / na + 1.0 / nb));
  const boost::math::students_t dist(df);
  res.p = 2.0 * boost::math::cdf(dist, -std::fabs(res.t));
  return res;
}

EvalReport build_report(const std::vector<ErrorRecord> &records,
                        const std::vector<ObjectiveSpec> &objectives, const ConversionConfig &conv,
                        const std::vector<std::vector<double>> &threshold_ladders,
                        const std::string &method, std::uint64_t seed,
                        const std::string &config_digest) {
  if (threshold_ladders.size() != objectives.size())
    throw std::invalid_argument("build_report: one threshold ladder per objective required");
  EvalReport report;
  report.method = method;
  report.seed = seed;
  report.config_digest = config_digest;
  for (std::size_t i = 0; i < objectives.size(); ++i) {
    ObjectiveReport obj;
    obj.id = objectives[i].id;
    obj.direction = objectives[i].direction;
    obj.mean_error = mean_error(records, i);
    obj.mean_error_raw = mean_error_raw(records, i);
    obj.units = objective_units(objectives[i].id, conv);
    obj.thresholds = threshold_ladders[i];
    for (double delta : threshold_ladders[i])
      obj.success_rates.push_back(success_rate(records, i, delta));
    report.objectives.push_back(std::move(obj));
  }
  return report;
}

} // namespace uniada
