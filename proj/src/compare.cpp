#include "uniada/compare.hpp"

#include <cstdio>
#include <stdexcept>

namespace uniada {

namespace {

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

} // namespace

bool method_is_universal(const std::string &method) {
  if (method == "uniada" || method == "uniequal")
    return true;
  if (method == "fgsm" || method == "pa")
    return false;
  throw std::invalid_argument("unknown method '" + method +
                              "' (expected uniada|uniequal|fgsm|pa)");
}

AttackOutcome run_method(const std::string &method, const Video &video, const VictimModel &model,
                         const std::vector<ObjectiveSpec> &objectives, const AttackConfig &cfg,
                         const BaselineConfig &baseline) {
  AttackOutcome outcome;
  outcome.universal = method_is_universal(method);
  if (method == "uniada" || method == "uniequal") {
    AttackResult res = run_attack(video, model, objectives, cfg, method == "uniada");
    outcome.tau = std::move(res.tau);
    outcome.trace = std::move(res.trace);
  } else if (method == "fgsm") {
    outcome.frames = fgsm_attack(video, model, objectives, cfg.epsilon, cfg.beta);
  } else {
    outcome.frames = pa_attack(video, model, objectives, cfg.epsilon, baseline.pa_steps,
                               baseline.pa_step_size, cfg.beta);
  }
  return outcome;
}

std::vector<ErrorRecord> outcome_errors(const AttackOutcome &outcome, const Video &video,
                                        const VictimModel &model,
                                        const std::vector<ObjectiveSpec> &objectives,
                                        const ConversionConfig &conv) {
  if (outcome.universal)
    return signed_errors(video, outcome.tau, model, objectives, conv);
  return signed_errors(video, outcome.frames, model, objectives, conv);
}

CompareOutput run_compare(const Video &video, const VictimModel &model,
                          const std::vector<ObjectiveSpec> &objectives, const AttackConfig &base_cfg,
                          const BaselineConfig &baseline, const std::vector<std::string> &methods,
                          int n_seeds, const ConversionConfig &conv,
                          const std::vector<std::vector<double>> &threshold_ladders) {
  if (methods.empty())
    throw std::invalid_argument("run_compare: need at least one method");
  if (n_seeds < 1)
    throw std::invalid_argument("run_compare: need at least one seed");
  for (const std::string &m : methods)
    method_is_universal(m); // validates the name

  CompareOutput out;
  for (const std::string &method : methods) {
    MethodRuns runs;
    runs.method = method;
    for (int s = 0; s < n_seeds; ++s) {
      AttackConfig cfg = base_cfg;
      cfg.seed = base_cfg.seed + static_cast<std::uint64_t>(s);
      const AttackOutcome outcome = run_method(method, video, model, objectives, cfg, baseline);
      const auto records = outcome_errors(outcome, video, model, objectives, conv);
      runs.per_seed.push_back(build_report(records, objectives, conv, threshold_ladders, method,
                                           cfg.seed, config_digest(cfg)));
    }
    out.methods.push_back(std::move(runs));
  }

  if (out.methods.size() >= 2 && n_seeds >= 2) {
    const MethodRuns &a = out.methods[0], &b = out.methods[1];
    for (std::size_t i = 0; i < objectives.size(); ++i) {
      auto collect_me = [&](const MethodRuns &m) {
        std::vector<double> v;
        for (const EvalReport &r : m.per_seed)
          v.push_back(r.objectives[i].mean_error);
        return v;
      };
      ComparisonTest me_test;
      me_test.objective = objectives[i].id;
      me_test.metric = "ME";
      const auto ga = collect_me(a), gb = collect_me(b);
      me_test.mean_a = 0.0;
      me_test.mean_b = 0.0;
      for (double v : ga)
        me_test.mean_a += v;
      for (double v : gb)
        me_test.mean_b += v;
      me_test.mean_a /= static_cast<double>(ga.size());
      me_test.mean_b /= static_cast<double>(gb.size());
      me_test.test = two_sample_ttest(ga, gb);
      out.tests.push_back(std::move(me_test));

      for (std::size_t k = 0; k < threshold_ladders[i].size(); ++k) {
        auto collect_sr = [&](const MethodRuns &m) {
          std::vector<double> v;
          for (const EvalReport &r : m.per_seed)
            v.push_back(r.objectives[i].success_rates[k]);
          return v;
        };
        ComparisonTest sr_test;
        sr_test.objective = objectives[i].id;
        sr_test.metric = "SR";
        sr_test.threshold = threshold_ladders[i][k];
        const auto sa = collect_sr(a), sb = collect_sr(b);
        for (double v : sa)
          sr_test.mean_a += v;
        for (double v : sb)
          sr_test.mean_b += v;
        sr_test.mean_a /= static_cast<double>(sa.size());
        sr_test.mean_b /= static_cast<double>(sb.size());
        sr_test.test = two_sample_ttest(sa, sb);
        out.tests.push_back(std::move(sr_test));
      }
    }
  }
  return out;
}

void write_compare_metrics_csv(const std::filesystem::path &path, const CompareOutput &out) {
  std::string csv = "method,seed,objective,metric,threshold,value,units\n";
  for (const MethodRuns &runs : out.methods) {
    for (const EvalReport &report : runs.per_seed) {
      for (const ObjectiveReport &obj : report.objectives) {
        const std::string prefix =
            report.method + "," + std::to_string(report.seed) + "," + obj.id;
        csv += prefix + ",ME,," + fmt_g(obj.mean_error) + "," + obj.units + "\n";
        csv += prefix + ",ME_raw,," + fmt_g(obj.mean_error_raw) + ",raw\n";
        for (std::size_t k = 0; k < obj.thresholds.size(); ++k)
          csv += prefix + ",SR," + fmt_g(obj.thresholds[k]) + "," + fmt_g(obj.success_rates[k]) +
                 ",fraction\n";
      }
    }
  }
  atomic_write(path, csv);
}

void write_compare_ttest_csv(const std::filesystem::path &path, const CompareOutput &out) {
  std::string csv =
      "objective,metric,threshold,method_a,method_b,mean_a,mean_b,t,p_value,significant,direction\n";
  const std::string ma = out.methods.size() > 0 ? out.methods[0].method : "";
  const std::string mb = out.methods.size() > 1 ? out.methods[1].method : "";
  for (const ComparisonTest &test : out.tests) {
    csv += test.objective + "," + test.metric + ",";
    csv += test.metric == "SR" ? fmt_g(test.threshold) : "";
    csv += "," + ma + "," + mb + "," + fmt_g(test.mean_a) + "," + fmt_g(test.mean_b) + "," +
           fmt_g(test.test.t) + "," + fmt_g(test.test.p) + "," +
           (test.test.p <= 0.05 ? "true" : "false") + "," + std::to_string(test.test.direction) +
           "\n";
  }
  atomic_write(path, csv);
}

} // namespace uniada
