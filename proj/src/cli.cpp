#include "uniada/cli.hpp"

#include "uniada/compare.hpp"
#include "uniada/io.hpp"

#include <CLI11.hpp>

#include <cinttypes>
#include <cstdio>
#include <iostream>
#include <random>

namespace fs = std::filesystem;

namespace uniada {

namespace {

struct VictimArgs {
  std::string model = "toy-cnn"; // toy-cnn | linear | path to a model file
  std::uint64_t model_seed = 0;
  int train_epochs = 0;
  double train_step = 0.05;
};

void add_victim_flags(CLI::App *cmd, VictimArgs &args) {
  cmd->add_option("--model", args.model, "Victim: toy-cnn, linear, or a saved model file");
  cmd->add_option("--model-seed", args.model_seed, "Seed for built-in victim parameters");
  cmd->add_option("--train-epochs", args.train_epochs,
                  "Quick-train epochs on the video's labels.csv before attacking");
  cmd->add_option("--train-step", args.train_step, "Quick-train initial step size");
}

struct ConfigFlags {
  std::string config_file;
  AttackConfig cfg;
  BaselineConfig baseline;
  CLI::Option *lr = nullptr, *lr_grad = nullptr, *bs = nullptr, *beta = nullptr, *epochs = nullptr,
              *gamma = nullptr, *theta = nullptr, *epsilon = nullptr, *seed = nullptr,
              *decay_factor = nullptr, *decay_interval = nullptr, *trace_stride = nullptr,
              *pa_steps = nullptr, *pa_step_size = nullptr;
  double v_lr = 0, v_lr_grad = 0, v_beta = 0, v_gamma = 0, v_theta = 0, v_epsilon = 0,
         v_decay_factor = 0, v_pa_step_size = 0;
  int v_bs = 0, v_epochs = 0, v_decay_interval = 0, v_trace_stride = 0, v_pa_steps = 0;
  std::uint64_t v_seed = 0;
};

void add_config_flags(CLI::App *cmd, ConfigFlags &f) {
  cmd->add_option("--config", f.config_file, "Config file of 'key = value' lines; flags override");
  f.lr = cmd->add_option("--lr", f.v_lr, "Perturbation searching learning rate");
  f.lr_grad = cmd->add_option("--lr-grad", f.v_lr_grad, "Adaptive weighting learning rate");
  f.bs = cmd->add_option("--bs", f.v_bs, "Batch size");
  f.beta = cmd->add_option("--beta", f.v_beta, "Loss sharpness");
  f.epochs = cmd->add_option("--epochs", f.v_epochs, "Number of epochs");
  f.gamma = cmd->add_option("--gamma", f.v_gamma, "Rebalance strength");
  f.theta = cmd->add_option("--theta", f.v_theta, "Gradient rescale threshold");
  f.epsilon = cmd->add_option("--epsilon", f.v_epsilon, "Max perturbation per channel value");
  f.seed = cmd->add_option("--seed", f.v_seed, "Attack RNG seed");
  f.decay_factor = cmd->add_option("--decay-factor", f.v_decay_factor, "Rate decay factor");
  f.decay_interval = cmd->add_option("--decay-interval", f.v_decay_interval, "Decay interval (epochs)");
  f.trace_stride = cmd->add_option("--trace-stride", f.v_trace_stride,
                                   "Record full-video trace entries every N steps (0 = final only)");
  f.pa_steps = cmd->add_option("--pa-steps", f.v_pa_steps, "Iterations for the pa method");
  f.pa_step_size = cmd->add_option("--pa-step-size", f.v_pa_step_size, "Step size for the pa method");
}

// File values first, explicit flags on top.
void resolve_config(ConfigFlags &f) {
  if (!f.config_file.empty())
    apply_config(f.cfg, f.baseline, parse_config_file(f.config_file));
  if (f.lr->count()) f.cfg.lr = f.v_lr;
  if (f.lr_grad->count()) f.cfg.lr_grad = f.v_lr_grad;
  if (f.bs->count()) f.cfg.batch_size = f.v_bs;
  if (f.beta->count()) f.cfg.beta = f.v_beta;
  if (f.epochs->count()) f.cfg.epochs = f.v_epochs;
  if (f.gamma->count()) f.cfg.gamma = f.v_gamma;
  if (f.theta->count()) f.cfg.theta = f.v_theta;
  if (f.epsilon->count()) f.cfg.epsilon = f.v_epsilon;
  if (f.seed->count()) f.cfg.seed = f.v_seed;
  if (f.decay_factor->count()) f.cfg.decay_factor = f.v_decay_factor;
  if (f.decay_interval->count()) f.cfg.decay_interval = f.v_decay_interval;
  if (f.trace_stride->count()) f.cfg.trace_stride = f.v_trace_stride;
  if (f.pa_steps->count()) f.baseline.pa_steps = f.v_pa_steps;
  if (f.pa_step_size->count()) f.baseline.pa_step_size = f.v_pa_step_size;
  validate_config(f.cfg);
}

std::vector<std::size_t> discover_frame_shape(const fs::path &video_dir) {
  std::vector<fs::path> files;
  for (const auto &entry : fs::directory_iterator(video_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".ppm")
      files.push_back(entry.path());
  if (files.empty())
    throw std::runtime_error("no .ppm frames in " + video_dir.string());
  std::sort(files.begin(), files.end(),
            [](const fs::path &a, const fs::path &b) { return a.filename() < b.filename(); });
  return read_ppm(files.front()).shape();
}

VictimModel resolve_model(const VictimArgs &args, const std::vector<std::size_t> &input_shape) {
  if (args.model == "toy-cnn")
    return build_toy_cnn(args.model_seed, input_shape);
  if (args.model == "linear")
    return build_linear_victim(args.model_seed, input_shape);
  VictimModel model = load_model(args.model);
  if (model.graph.input_shape != input_shape)
    throw std::runtime_error("model input shape " + shape_to_string(model.graph.input_shape) +
                             " does not match video frames " + shape_to_string(input_shape));
  return model;
}

struct LoadedScene {
  Video video;
  VictimModel model;
};

LoadedScene load_scene(const std::string &video_dir, const VictimArgs &victim) {
  LoadedScene scene;
  std::vector<std::size_t> shape;
  if (victim.model != "toy-cnn" && victim.model != "linear")
    shape = load_model(victim.model).graph.input_shape;
  else
    shape = discover_frame_shape(video_dir);
  scene.video = load_video(video_dir, shape);
  scene.model = resolve_model(victim, shape);
  if (victim.train_epochs > 0) {
    const Labels labels = load_labels(fs::path(video_dir) / "labels.csv");
    scene.model =
        quick_train(scene.model, scene.video, labels, victim.train_epochs, victim.train_step);
  }
  return scene;
}

std::vector<ObjectiveSpec> parse_objectives(const std::string &objectives,
                                            const std::string &directions) {
  std::vector<ObjectiveSpec> specs;
  std::istringstream obj_ss(objectives);
  std::string token;
  while (std::getline(obj_ss, token, ','))
    if (!token.empty())
      specs.push_back({token, +1});
  if (specs.empty())
    throw std::invalid_argument("no objectives given");
  if (!directions.empty()) {
    std::istringstream dir_ss(directions);
    std::size_t i = 0;
    while (std::getline(dir_ss, token, ',')) {
      if (i >= specs.size())
        throw std::invalid_argument("more directions than objectives");
      if (token == "+1" || token == "1")
        specs[i].direction = +1;
      else if (token == "-1")
        specs[i].direction = -1;
      else
        throw std::invalid_argument("direction must be +1 or -1, got '" + token + "'");
      ++i;
    }
    if (i != specs.size())
      throw std::invalid_argument("need one direction per objective");
  }
  return specs;
}

std::vector<double> parse_ladder(const std::string &csv) {
  std::vector<double> v;
  std::istringstream ss(csv);
  std::string token;
  while (std::getline(ss, token, ','))
    if (!token.empty())
      v.push_back(std::stod(token));
  if (v.empty())
    throw std::invalid_argument("empty threshold list");
  return v;
}

std::vector<std::vector<double>> ladders_for(const std::vector<ObjectiveSpec> &objectives,
                                             const std::string &steer_csv,
                                             const std::string &accel_csv) {
  std::vector<std::vector<double>> ladders;
  for (const auto &obj : objectives) {
    if (obj.id == "steering" && !steer_csv.empty())
      ladders.push_back(parse_ladder(steer_csv));
    else if (obj.id == "acceleration" && !accel_csv.empty())
      ladders.push_back(parse_ladder(accel_csv));
    else
      ladders.push_back(default_threshold_ladder(obj.id));
  }
  return ladders;
}

// ---- subcommands ----------------------------------------------------------

int cmd_synth(const std::string &out_dir, std::uint64_t seed, std::size_t frames,
              const std::string &scenario, std::size_t height, std::size_t width, double noise) {
  fs::create_directories(out_dir);
  auto [video, labels] =
      synth_video(seed, frames, {3, height, width}, scenario_from_string(scenario), noise);
  OutputGuard guard;
  for (std::size_t n = 0; n < video.size(); ++n) {
    char name[32];
    std::snprintf(name, sizeof name, "%05zu.ppm", n);
    const fs::path file = fs::path(out_dir) / name;
    guard.track(file);
    write_ppm(file, video.frames[n]);
  }
  const fs::path labels_file = fs::path(out_dir) / "labels.csv";
  guard.track(labels_file);
  write_labels(labels_file, labels);
  guard.commit();
  std::cout << "wrote " << video.size() << " frames + labels.csv to " << out_dir << "\n";
  return 0;
}

int cmd_attack(const std::string &video_dir, const std::string &out_dir, const VictimArgs &victim,
               const std::string &method, const std::vector<ObjectiveSpec> &objectives,
               const AttackConfig &cfg, const BaselineConfig &baseline,
               const std::string &save_model_path) {
  LoadedScene scene = load_scene(video_dir, victim);
  validate_objectives(objectives, scene.model);

  const AttackOutcome outcome =
      run_method(method, scene.video, scene.model, objectives, cfg, baseline);

  fs::create_directories(out_dir);
  OutputGuard guard;
  if (outcome.universal) {
    const fs::path tau_file = fs::path(out_dir) / "perturbation.uada";
    guard.track(tau_file);
    save_perturbation(outcome.tau, cfg.epsilon, tau_file);
    const fs::path trace_file = fs::path(out_dir) / "trace.csv";
    guard.track(trace_file);
    write_trace_csv(trace_file, outcome.trace, objectives);
    std::cout << "wrote " << tau_file.string() << " and trace.csv\n";
  } else {
    const fs::path tau_file = fs::path(out_dir) / "perturbation.uadc";
    guard.track(tau_file);
    save_per_frame_perturbation(outcome.frames, cfg.epsilon, tau_file);
    std::cout << "wrote " << tau_file.string() << "\n";
  }
  if (!save_model_path.empty()) {
    guard.track(save_model_path);
    save_model(scene.model, save_model_path);
    std::cout << "wrote " << save_model_path << "\n";
  }
  guard.commit();
  return 0;
}

int cmd_eval(const std::string &video_dir, const std::string &perturbation_file,
             const std::string &out_prefix, const VictimArgs &victim,
             const std::vector<ObjectiveSpec> &objectives, double accel_scale,
             const std::string &steer_ladder, const std::string &accel_ladder,
             const std::string &method_label, std::uint64_t seed) {
  LoadedScene scene = load_scene(video_dir, victim);
  validate_objectives(objectives, scene.model);
  const ConversionConfig conv{accel_scale};

  // Both container types share the same leading magic length.
  std::ifstream probe(perturbation_file, std::ios::binary);
  if (!probe)
    throw std::runtime_error("cannot open " + perturbation_file);
  char magic[4] = {};
  probe.read(magic, 4);
  probe.close();

  std::vector<ErrorRecord> records;
  if (std::string(magic, 4) == "UADC") {
    const auto [frames, eps] = load_per_frame_perturbation(perturbation_file);
    records = signed_errors(scene.video, frames, scene.model, objectives, conv);
  } else {
    const auto [tau, eps] = load_perturbation(perturbation_file);
    records = signed_errors(scene.video, tau, scene.model, objectives, conv);
  }

  AttackConfig meta_cfg;
  meta_cfg.seed = seed;
  const EvalReport report =
      build_report(records, objectives, conv, ladders_for(objectives, steer_ladder, accel_ladder),
                   method_label, seed, config_digest(meta_cfg));

  if (!fs::path(out_prefix).parent_path().empty())
    fs::create_directories(fs::path(out_prefix).parent_path());
  OutputGuard guard;
  guard.track(out_prefix + ".csv");
  write_report_csv(out_prefix + ".csv", report);
  guard.track(out_prefix + ".json");
  write_report_json(out_prefix + ".json", report);
  guard.commit();

  for (const ObjectiveReport &obj : report.objectives) {
    std::printf("%s: ME %.6g %s (raw %.6g)\n", obj.id.c_str(), obj.mean_error, obj.units.c_str(),
                obj.mean_error_raw);
    for (std::size_t k = 0; k < obj.thresholds.size(); ++k)
      std::printf("%s: SR(delta=%g) %.4f\n", obj.id.c_str(), obj.thresholds[k],
                  obj.success_rates[k]);
  }
  return 0;
}

int cmd_compare(const std::string &video_dir, const std::string &out_prefix,
                const VictimArgs &victim, const std::string &methods_csv, int seeds,
                const std::vector<ObjectiveSpec> &objectives, const AttackConfig &cfg,
                const BaselineConfig &baseline, double accel_scale,
                const std::string &steer_ladder, const std::string &accel_ladder) {
  LoadedScene scene = load_scene(video_dir, victim);
  validate_objectives(objectives, scene.model);

  std::vector<std::string> methods;
  std::istringstream ss(methods_csv);
  std::string token;
  while (std::getline(ss, token, ','))
    if (!token.empty())
      methods.push_back(token);

  const ConversionConfig conv{accel_scale};
  const CompareOutput out =
      run_compare(scene.video, scene.model, objectives, cfg, baseline, methods, seeds, conv,
                  ladders_for(objectives, steer_ladder, accel_ladder));

  if (!fs::path(out_prefix).parent_path().empty())
    fs::create_directories(fs::path(out_prefix).parent_path());
  OutputGuard guard;
  guard.track(out_prefix + "_metrics.csv");
  write_compare_metrics_csv(out_prefix + "_metrics.csv", out);
  guard.track(out_prefix + "_ttest.csv");
  write_compare_ttest_csv(out_prefix + "_ttest.csv", out);
  guard.commit();

  for (const MethodRuns &runs : out.methods) {
    for (std::size_t i = 0; i < objectives.size(); ++i) {
      double mean = 0.0;
      for (const EvalReport &r : runs.per_seed)
        mean += r.objectives[i].mean_error;
      mean /= static_cast<double>(runs.per_seed.size());
      std::printf("%s %s: mean ME over %d seeds = %.6g %s\n", runs.method.c_str(),
                  objectives[i].id.c_str(), seeds, mean,
                  runs.per_seed.front().objectives[i].units.c_str());
    }
  }
  for (const ComparisonTest &test : out.tests) {
    if (test.metric == "ME")
      std::printf("t-test %s ME: t=%.4g p=%.4g%s\n", test.objective.c_str(), test.test.t,
                  test.test.p, test.test.p <= 0.05 ? " (significant)" : "");
  }
  return 0;
}

int cmd_gradcheck(const VictimArgs &victim, std::uint64_t seed, int coords, double h,
                  double rel_tol, double abs_tol) {
  const std::vector<std::size_t> shape{3, 48, 64};
  VictimModel model;
  if (victim.model == "toy-cnn")
    model = build_toy_cnn(seed, shape);
  else if (victim.model == "linear")
    model = build_linear_victim(seed, shape);
  else
    model = load_model(victim.model);

  auto [video, labels] = synth_video(seed, 1, model.graph.input_shape, Scenario::Stop);
  const Tensor &x = video.frames[0];

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, x.numel() - 1);

  bool pass = true;
  double max_rel = 0.0, max_abs = 0.0;
  for (std::size_t head = 0; head < model.head_count(); ++head) {
    const ForwardResult fwd = forward_eval(model.graph, x);
    const Tensor grad = backward_eval(fwd.trace, head);
    std::vector<std::size_t> idx(static_cast<std::size_t>(coords));
    for (auto &i : idx)
      i = pick(rng);
    const auto fd = finite_diff_gradient_at(
        [&](const Tensor &p) { return eval_head_ref(model.graph, p, head); }, x, idx, h);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const double ad = grad[idx[k]];
      const double abs_err = std::fabs(ad - fd[k]);
      const double rel_err = abs_err / std::max(std::fabs(fd[k]), 1e-300);
      max_abs = std::max(max_abs, abs_err);
      max_rel = std::max(max_rel, rel_err);
      if (!(rel_err <= rel_tol || abs_err <= abs_tol))
        pass = false;
    }
  }
  std::printf("gradcheck %s seed=%" PRIu64 ": max rel err %.3g, max abs err %.3g, tolerance %.3g "
              "(abs fallback %.3g): %s\n",
              victim.model.c_str(), seed, max_rel, max_abs, rel_tol, abs_tol,
              pass ? "PASS" : "FAIL");
  return pass ? 0 : 2;
}

} // namespace

int run_cli(int argc, const char *const *argv) {
  CLI::App app{"Universal multi-objective adversarial perturbations for driving regressors"};
  app.require_subcommand(1);

  // synth
  auto *synth = app.add_subcommand("synth", "Write a synthetic driving video and labels");
  std::string synth_out, synth_scenario = "stop";
  std::uint64_t synth_seed = 0;
  std::size_t synth_frames = 18, synth_h = 48, synth_w = 64;
  double synth_noise = 5.0;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--seed", synth_seed, "RNG seed");
  synth->add_option("--frames", synth_frames, "Frame count");
  synth->add_option("--scenario", synth_scenario, "straight | curve | stop");
  synth->add_option("--height", synth_h, "Frame height");
  synth->add_option("--width", synth_w, "Frame width");
  synth->add_option("--noise", synth_noise, "Additive pixel noise amplitude (max 5)");

  // attack
  auto *attack = app.add_subcommand("attack", "Search a perturbation for a video");
  std::string attack_video, attack_out, attack_method = "uniada";
  std::string attack_objectives = "steering,acceleration", attack_directions = "+1,+1";
  std::string attack_save_model;
  VictimArgs attack_victim;
  ConfigFlags attack_cfg;
  attack->add_option("--video", attack_video, "Directory of .ppm frames")->required();
  attack->add_option("--out", attack_out, "Output directory")->required();
  attack->add_option("--method", attack_method, "uniada | uniequal | fgsm | pa");
  attack->add_option("--objectives", attack_objectives, "Comma-separated model heads");
  attack->add_option("--directions", attack_directions, "Comma-separated +1/-1 per objective");
  attack->add_option("--save-model", attack_save_model, "Also save the (trained) victim");
  add_victim_flags(attack, attack_victim);
  add_config_flags(attack, attack_cfg);

  // eval
  auto *eval = app.add_subcommand("eval", "Evaluate a saved perturbation");
  std::string eval_video, eval_perturbation, eval_out, eval_method_label = "attack";
  std::string eval_objectives = "steering,acceleration", eval_directions = "+1,+1";
  std::string eval_steer_ladder, eval_accel_ladder;
  double eval_accel_scale = 1.0;
  std::uint64_t eval_seed = 0;
  VictimArgs eval_victim;
  eval->add_option("--video", eval_video, "Directory of .ppm frames")->required();
  eval->add_option("--perturbation", eval_perturbation, "Perturbation file")->required();
  eval->add_option("--out", eval_out, "Report prefix (writes .csv and .json)")->required();
  eval->add_option("--objectives", eval_objectives, "Comma-separated model heads");
  eval->add_option("--directions", eval_directions, "Comma-separated +1/-1 per objective");
  eval->add_option("--accel-scale", eval_accel_scale, "Acceleration raw-to-km/h factor");
  eval->add_option("--thresholds-steering", eval_steer_ladder, "Steering SR thresholds (deg)");
  eval->add_option("--thresholds-accel", eval_accel_ladder, "Acceleration SR thresholds");
  eval->add_option("--method-label", eval_method_label, "Method name for report metadata");
  eval->add_option("--seed", eval_seed, "Seed recorded in report metadata");
  add_victim_flags(eval, eval_victim);

  // compare
  auto *compare = app.add_subcommand("compare", "Run methods across seeds and t-test them");
  std::string cmp_video, cmp_out, cmp_methods = "uniada,uniequal";
  std::string cmp_objectives = "steering,acceleration", cmp_directions = "+1,+1";
  std::string cmp_steer_ladder, cmp_accel_ladder;
  double cmp_accel_scale = 1.0;
  int cmp_seeds = 5;
  VictimArgs cmp_victim;
  ConfigFlags cmp_cfg;
  cmp_cfg.cfg.trace_stride = 0; // final-only traces across the run matrix
  compare->add_option("--video", cmp_video, "Directory of .ppm frames")->required();
  compare->add_option("--out", cmp_out, "Output prefix")->required();
  compare->add_option("--methods", cmp_methods, "Comma-separated methods (first two are t-tested)");
  compare->add_option("--seeds", cmp_seeds, "Number of repeated seeds");
  compare->add_option("--objectives", cmp_objectives, "Comma-separated model heads");
  compare->add_option("--directions", cmp_directions, "Comma-separated +1/-1 per objective");
  compare->add_option("--accel-scale", cmp_accel_scale, "Acceleration raw-to-km/h factor");
  compare->add_option("--thresholds-steering", cmp_steer_ladder, "Steering SR thresholds (deg)");
  compare->add_option("--thresholds-accel", cmp_accel_ladder, "Acceleration SR thresholds");
  add_victim_flags(compare, cmp_victim);
  add_config_flags(compare, cmp_cfg);

  // gradcheck
  auto *gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient verification");
  VictimArgs gc_victim;
  std::uint64_t gc_seed = 0;
  int gc_coords = 64;
  double gc_h = 1e-2, gc_tol = 1e-3, gc_abs_tol = 1e-5;
  gradcheck->add_option("--model", gc_victim.model, "toy-cnn, linear, or a saved model file");
  gradcheck->add_option("--seed", gc_seed, "Model and probe seed");
  gradcheck->add_option("--coords", gc_coords, "Random coordinates per head");
  gradcheck->add_option("--h", gc_h, "Central-difference step");
  gradcheck->add_option("--tolerance", gc_tol, "Relative error tolerance");
  gradcheck->add_option("--abs-tolerance", gc_abs_tol, "Absolute error fallback");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed())
      return cmd_synth(synth_out, synth_seed, synth_frames, synth_scenario, synth_h, synth_w,
                       synth_noise);
    if (attack->parsed()) {
      resolve_config(attack_cfg);
      return cmd_attack(attack_video, attack_out, attack_victim, attack_method,
                        parse_objectives(attack_objectives, attack_directions), attack_cfg.cfg,
                        attack_cfg.baseline, attack_save_model);
    }
    if (eval->parsed())
      return cmd_eval(eval_video, eval_perturbation, eval_out, eval_victim,
                      parse_objectives(eval_objectives, eval_directions), eval_accel_scale,
                      eval_steer_ladder, eval_accel_ladder, eval_method_label, eval_seed);
    if (compare->parsed()) {
      resolve_config(cmp_cfg);
      return cmd_compare(cmp_video, cmp_out, cmp_victim, cmp_methods, cmp_seeds,
                         parse_objectives(cmp_objectives, cmp_directions), cmp_cfg.cfg,
                         cmp_cfg.baseline, cmp_accel_scale, cmp_steer_ladder, cmp_accel_ladder);
    }
    if (gradcheck->parsed())
      return cmd_gradcheck(gc_victim, gc_seed, gc_coords, gc_h, gc_tol, gc_abs_tol);
  } catch (const std::invalid_argument &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

} // namespace uniada
