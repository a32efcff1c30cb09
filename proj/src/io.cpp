#include "uniada/io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace uniada {

namespace {

void append_u32_le(std::string &out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void append_f32_le(std::string &out, float v) {
  append_u32_le(out, std::bit_cast<std::uint32_t>(v));
}

class ByteReader {
public:
  ByteReader(const std::string &bytes, std::string file) : bytes_(bytes), file_(std::move(file)) {}

  std::uint32_t u32(const char *field) {
    need(4, field);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i)
      v = (v << 8) | static_cast<unsigned char>(bytes_[pos_ + i]);
    pos_ += 4;
    return v;
  }

  float f32(const char *field) { return std::bit_cast<float>(u32(field)); }

  std::string raw(std::size_t n, const char *field) {
    need(n, field);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool exhausted() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  [[noreturn]] void fail(const std::string &field) const {
    throw std::runtime_error(file_ + ": invalid " + field);
  }

private:
  void need(std::size_t n, const char *field) {
    if (pos_ + n > bytes_.size())
      fail(field);
  }

  const std::string &bytes_;
  std::string file_;
  std::size_t pos_ = 0;
};

std::string read_file(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

void append_perturbation_record(std::string &out, const Tensor &tau, double epsilon) {
  if (tau.shape().size() != 3)
    throw std::invalid_argument("save_perturbation: tau must be (C,H,W), got " +
                                shape_to_string(tau.shape()));
  const float eps = static_cast<float>(epsilon);
  if (!(eps > 0.0f))
    throw std::invalid_argument("save_perturbation: epsilon must be positive");
  for (float v : tau.data())
    if (!(std::fabs(v) <= eps))
      throw std::invalid_argument("save_perturbation: tau exceeds epsilon bound " +
                                  std::to_string(epsilon));
  out += "UADA";
  append_u32_le(out, 1);
  append_u32_le(out, static_cast<std::uint32_t>(tau.shape()[1])); // height
  append_u32_le(out, static_cast<std::uint32_t>(tau.shape()[2])); // width
  append_u32_le(out, static_cast<std::uint32_t>(tau.shape()[0])); // channels
  append_f32_le(out, eps);
  for (float v : tau.data())
    append_f32_le(out, v);
}

std::pair<Tensor, double> parse_perturbation_record(ByteReader &r) {
  if (r.raw(4, "magic") != "UADA")
    r.fail("magic");
  if (r.u32("version") != 1)
    r.fail("version");
  const std::uint32_t h = r.u32("height"), w = r.u32("width"), c = r.u32("channels");
  if (h == 0 || w == 0 || c == 0)
    r.fail("shape");
  const float eps = r.f32("epsilon");
  if (!(eps > 0.0f) || !std::isfinite(eps))
    r.fail("epsilon");
  const std::size_t n = static_cast<std::size_t>(h) * w * c;
  if (r.remaining() < 4 * n)
    r.fail("payload length");
  std::vector<float> data(n);
  for (std::size_t i = 0; i < n; ++i) {
    data[i] = r.f32("payload length");
    if (!(std::fabs(data[i]) <= eps))
      r.fail("bounds");
  }
  return {Tensor({c, h, w}, std::move(data)), static_cast<double>(eps)};
}

} // namespace

void atomic_write(const fs::path &path, const std::string &bytes) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out)
      throw std::runtime_error("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out)
      throw std::runtime_error("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

OutputGuard::~OutputGuard() {
  if (committed_)
    return;
  for (const fs::path &p : paths_) {
    std::error_code ec;
    fs::remove(p, ec);
  }
}

void OutputGuard::track(const fs::path &path) { paths_.push_back(path); }

// ---- images -------------------------------------------------------------

void write_ppm(const fs::path &path, const Tensor &frame) {
  if (frame.shape().size() != 3 || frame.shape()[0] != 3)
    throw std::invalid_argument("write_ppm: frame must be (3,H,W), got " +
                                shape_to_string(frame.shape()));
  const std::size_t h = frame.shape()[1], w = frame.shape()[2];
  std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  out.reserve(out.size() + 3 * h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = std::clamp(static_cast<double>(frame[(c * h + y) * w + x]), 0.0, 255.0);
        out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v))));
      }
  atomic_write(path, out);
}

namespace {

// Reads one whitespace-delimited PPM header token, skipping '#' comments.
std::string ppm_token(const std::string &bytes, std::size_t &pos, const fs::path &path) {
  while (pos < bytes.size()) {
    if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
      ++pos;
    } else if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n')
        ++pos;
    } else {
      break;
    }
  }
  std::size_t start = pos;
  while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos])))
    ++pos;
  if (start == pos)
    throw std::runtime_error(path.string() + ": truncated PPM header");
  return bytes.substr(start, pos - start);
}

} // namespace

Tensor read_ppm(const fs::path &path) {
  const std::string bytes = read_file(path);
  std::size_t pos = 0;
  if (ppm_token(bytes, pos, path) != "P6")
    throw std::runtime_error(path.string() + ": not a binary PPM (P6) file");
  const std::string ws = ppm_token(bytes, pos, path), hs = ppm_token(bytes, pos, path);
  const std::string maxval = ppm_token(bytes, pos, path);
  std::size_t w = 0, h = 0;
  try {
    w = std::stoul(ws);
    h = std::stoul(hs);
  } catch (const std::exception &) {
    throw std::runtime_error(path.string() + ": malformed PPM dimensions");
  }
  if (maxval != "255")
    throw std::runtime_error(path.string() + ": unsupported PPM maxval " + maxval);
  if (w == 0 || h == 0)
    throw std::runtime_error(path.string() + ": empty PPM image");
  ++pos; // single whitespace after maxval
  if (bytes.size() - pos < 3 * w * h)
    throw std::runtime_error(path.string() + ": truncated PPM payload");

  std::vector<float> px(3 * h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        px[(c * h + y) * w + x] =
            static_cast<float>(static_cast<unsigned char>(bytes[pos + (y * w + x) * 3 + c]));
  return Tensor({3, h, w}, std::move(px));
}

Video load_video(const fs::path &directory, const std::vector<std::size_t> &expected_shape) {
  if (!fs::is_directory(directory))
    throw std::runtime_error("load_video: " + directory.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto &entry : fs::directory_iterator(directory))
    if (entry.is_regular_file() && entry.path().extension() == ".ppm")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end(),
            [](const fs::path &a, const fs::path &b) { return a.filename() < b.filename(); });
  if (files.empty())
    throw std::runtime_error("load_video: no .ppm frames in " + directory.string());

  Video video;
  for (const fs::path &file : files) {
    Tensor frame = read_ppm(file);
    if (frame.shape() != expected_shape)
      throw std::runtime_error("load_video: " + file.string() + " has shape " +
                               shape_to_string(frame.shape()) + ", expected " +
                               shape_to_string(expected_shape));
    video.ids.push_back(video.frames.size());
    video.frames.push_back(std::move(frame));
  }
  return video;
}

void write_labels(const fs::path &path, const Labels &labels) {
  std::string out = "frame,steering,acceleration\n";
  for (std::size_t i = 0; i < labels.size(); ++i)
    out += std::to_string(i) + "," + fmt_g(labels[i][0]) + "," + fmt_g(labels[i][1]) + "\n";
  atomic_write(path, out);
}

Labels load_labels(const fs::path &path) {
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("cannot open " + path.string());
  Labels labels;
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error(path.string() + ": empty labels file");
  while (std::getline(in, line)) {
    if (line.empty())
      continue;
    std::istringstream ss(line);
    std::string frame, steering, accel;
    if (!std::getline(ss, frame, ',') || !std::getline(ss, steering, ',') ||
        !std::getline(ss, accel))
      throw std::runtime_error(path.string() + ": malformed label line '" + line + "'");
    labels.push_back({std::stod(steering), std::stod(accel)});
  }
  return labels;
}

// ---- perturbations ---------------------------------------------------------

void save_perturbation(const Tensor &tau, double epsilon, const fs::path &path) {
  std::string out;
  append_perturbation_record(out, tau, epsilon);
  atomic_write(path, out);
}

std::pair<Tensor, double> load_perturbation(const fs::path &path) {
  const std::string bytes = read_file(path);
  ByteReader r(bytes, path.string());
  auto rec = parse_perturbation_record(r);
  if (!r.exhausted())
    r.fail("payload length");
  return rec;
}

void save_per_frame_perturbation(const PerFramePerturbation &p, double epsilon,
                                 const fs::path &path) {
  if (p.size() == 0)
    throw std::invalid_argument("save_per_frame_perturbation: no frames");
  std::string out = "UADC";
  append_u32_le(out, 1);
  append_u32_le(out, static_cast<std::uint32_t>(p.size()));
  for (std::size_t id = 0; id < p.size(); ++id) {
    append_u32_le(out, static_cast<std::uint32_t>(id));
    append_perturbation_record(out, p.taus[id], epsilon);
  }
  atomic_write(path, out);
}

std::pair<PerFramePerturbation, double> load_per_frame_perturbation(const fs::path &path) {
  const std::string bytes = read_file(path);
  ByteReader r(bytes, path.string());
  if (r.raw(4, "magic") != "UADC")
    r.fail("magic");
  if (r.u32("version") != 1)
    r.fail("version");
  const std::uint32_t count = r.u32("frame count");
  if (count == 0)
    r.fail("frame count");

  PerFramePerturbation p;
  p.taus.resize(count);
  std::vector<bool> seen(count, false);
  double epsilon = 0.0;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t id = r.u32("frame id");
    if (id >= count || seen[id])
      r.fail("frame id");
    seen[id] = true;
    auto rec = parse_perturbation_record(r);
    p.taus[id] = std::move(rec.first);
    epsilon = rec.second;
  }
  if (!r.exhausted())
    r.fail("payload length");
  return {std::move(p), epsilon};
}

// ---- models -----------------------------------------------------------------

namespace {

void append_string(std::string &out, const std::string &s) {
  append_u32_le(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

void append_shape(std::string &out, const std::vector<std::size_t> &shape) {
  append_u32_le(out, static_cast<std::uint32_t>(shape.size()));
  for (std::size_t d : shape)
    append_u32_le(out, static_cast<std::uint32_t>(d));
}

std::vector<std::size_t> read_shape(ByteReader &r, const char *field) {
  const std::uint32_t ndim = r.u32(field);
  if (ndim == 0 || ndim > 8)
    r.fail(field);
  std::vector<std::size_t> shape(ndim);
  for (std::uint32_t i = 0; i < ndim; ++i) {
    shape[i] = r.u32(field);
    if (shape[i] == 0)
      r.fail(field);
  }
  return shape;
}

} // namespace

void save_model(const VictimModel &model, const fs::path &path) {
  std::string out = "UADM";
  append_u32_le(out, 1);
  append_string(out, model.kind);
  append_shape(out, model.graph.input_shape);
  const auto params = model.named_params();
  append_u32_le(out, static_cast<std::uint32_t>(params.size()));
  for (const auto &[name, tensor] : params) {
    append_string(out, name);
    append_shape(out, tensor->shape());
    for (float v : tensor->data())
      append_f32_le(out, v);
  }
  atomic_write(path, out);
}

VictimModel load_model(const fs::path &path) {
  const std::string bytes = read_file(path);
  ByteReader r(bytes, path.string());
  if (r.raw(4, "magic") != "UADM")
    r.fail("magic");
  if (r.u32("version") != 1)
    r.fail("version");
  const std::uint32_t kind_len = r.u32("kind");
  const std::string kind = r.raw(kind_len, "kind");
  const auto input_shape = read_shape(r, "input shape");

  VictimModel model;
  if (kind == "toy-cnn")
    model = build_toy_cnn(0, input_shape);
  else if (kind == "linear")
    model = build_linear_victim(0, input_shape);
  else
    r.fail("kind");

  auto params = model.named_params();
  const std::uint32_t count = r.u32("parameter count");
  if (count != params.size())
    r.fail("parameter count");
  std::vector<bool> filled(params.size(), false);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = r.u32("parameter name");
    const std::string name = r.raw(name_len, "parameter name");
    const auto shape = read_shape(r, "parameter shape");
    const std::size_t n = shape_numel(shape);
    std::vector<float> data(n);
    for (std::size_t k = 0; k < n; ++k)
      data[k] = r.f32("parameter payload");

    bool matched = false;
    for (std::size_t p = 0; p < params.size(); ++p) {
      if (params[p].first != name)
        continue;
      if (filled[p] || params[p].second->shape() != shape)
        r.fail("parameter shape");
      *params[p].second = Tensor(shape, std::move(data));
      filled[p] = true;
      matched = true;
      break;
    }
    if (!matched)
      r.fail("parameter name");
  }
  if (!r.exhausted())
    r.fail("payload length");
  validate_graph(model.graph);
  return model;
}

// ---- config -------------------------------------------------------------------

std::map<std::string, std::string> parse_config_file(const fs::path &path) {
  std::ifstream in(path);
  if (!in)
    throw std::invalid_argument("cannot open config file " + path.string());
  std::map<std::string, std::string> values;
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos)
      line = line.substr(0, hash);
    line = trim(line);
    if (line.empty())
      continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(path.string() + ":" + std::to_string(lineno) +
                                  ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw std::invalid_argument(path.string() + ":" + std::to_string(lineno) +
                                  ": expected 'key = value'");
    values[key] = value;
  }
  return values;
}

namespace {

double parse_double(const std::string &key, const std::string &value) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception &) {
    used = 0;
  }
  if (used != value.size())
    throw std::invalid_argument("config: bad numeric value '" + value + "' for key '" + key + "'");
  return v;
}

long long parse_int(const std::string &key, const std::string &value) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(value, &used);
  } catch (const std::exception &) {
    used = 0;
  }
  if (used != value.size())
    throw std::invalid_argument("config: bad integer value '" + value + "' for key '" + key + "'");
  return v;
}

} // namespace

void apply_config(AttackConfig &cfg, BaselineConfig &baseline,
                  const std::map<std::string, std::string> &values) {
  for (const auto &[key, value] : values) {
    if (key == "lr")
      cfg.lr = parse_double(key, value);
    else if (key == "lr_grad")
      cfg.lr_grad = parse_double(key, value);
    else if (key == "bs")
      cfg.batch_size = static_cast<int>(parse_int(key, value));
    else if (key == "beta")
      cfg.beta = parse_double(key, value);
    else if (key == "epochs")
      cfg.epochs = static_cast<int>(parse_int(key, value));
    else if (key == "gamma")
      cfg.gamma = parse_double(key, value);
    else if (key == "theta")
      cfg.theta = parse_double(key, value);
    else if (key == "epsilon")
      cfg.epsilon = parse_double(key, value);
    else if (key == "seed")
      cfg.seed = static_cast<std::uint64_t>(parse_int(key, value));
    else if (key == "decay_factor")
      cfg.decay_factor = parse_double(key, value);
    else if (key == "decay_interval")
      cfg.decay_interval = static_cast<int>(parse_int(key, value));
    else if (key == "trace_stride")
      cfg.trace_stride = static_cast<int>(parse_int(key, value));
    else if (key == "pa_steps")
      baseline.pa_steps = static_cast<int>(parse_int(key, value));
    else if (key == "pa_step_size")
      baseline.pa_step_size = parse_double(key, value);
    else
      throw std::invalid_argument("config: unknown key '" + key + "'");
  }
}

std::string config_digest(const AttackConfig &cfg) {
  std::string canon;
  canon += "beta=" + fmt_g(cfg.beta);
  canon += ";bs=" + std::to_string(cfg.batch_size);
  canon += ";decay_factor=" + fmt_g(cfg.decay_factor);
  canon += ";decay_interval=" + std::to_string(cfg.decay_interval);
  canon += ";epochs=" + std::to_string(cfg.epochs);
  canon += ";epsilon=" + fmt_g(cfg.epsilon);
  canon += ";gamma=" + fmt_g(cfg.gamma);
  canon += ";lr=" + fmt_g(cfg.lr);
  canon += ";lr_grad=" + fmt_g(cfg.lr_grad);
  canon += ";seed=" + std::to_string(cfg.seed);
  canon += ";theta=" + fmt_g(cfg.theta);

  std::uint64_t hash = 0xcbf29ce484222325ull; // FNV-1a
  for (unsigned char c : canon) {
    hash ^= c;
    hash *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

// ---- reports & traces -----------------------------------------------------------

void write_trace_csv(const fs::path &path, const std::vector<StepTrace> &trace,
                     const std::vector<ObjectiveSpec> &objectives) {
  std::string out = "step,epoch,lr,lr_grad,joint_loss";
  for (const auto &obj : objectives)
    out += ",loss_" + obj.id + ",weight_" + obj.id + ",me_" + obj.id;
  out += ",tau_linf,pixel_min,pixel_max,weight_sum\n";

  for (const StepTrace &st : trace) {
    out += std::to_string(st.step) + "," + std::to_string(st.epoch) + "," + fmt_g(st.lr) + "," +
           fmt_g(st.lr_grad) + ",";
    out += st.full_video_recorded ? fmt_g(st.joint) : "";
    for (std::size_t i = 0; i < objectives.size(); ++i) {
      out += "," + fmt_g(st.batch_mean_loss[i]) + "," + fmt_g(st.weights[i]) + ",";
      out += st.full_video_recorded ? fmt_g(st.mean_error_raw[i]) : "";
    }
    out += "," + fmt_g(st.tau_linf) + "," + fmt_g(st.pixel_min) + "," + fmt_g(st.pixel_max) + "," +
           fmt_g(st.weight_sum) + "\n";
  }
  atomic_write(path, out);
}

void write_report_csv(const fs::path &path, const EvalReport &report) {
  std::string out = "method,seed,objective,metric,threshold,value,units\n";
  for (const ObjectiveReport &obj : report.objectives) {
    const std::string prefix = report.method + "," + std::to_string(report.seed) + "," + obj.id;
    out += prefix + ",ME,," + fmt_g(obj.mean_error) + "," + obj.units + "\n";
    out += prefix + ",ME_raw,," + fmt_g(obj.mean_error_raw) + ",raw\n";
    for (std::size_t k = 0; k < obj.thresholds.size(); ++k)
      out += prefix + ",SR," + fmt_g(obj.thresholds[k]) + "," + fmt_g(obj.success_rates[k]) +
             ",fraction\n";
  }
  atomic_write(path, out);
}

void write_report_json(const fs::path &path, const EvalReport &report) {
  nlohmann::ordered_json j;
  j["method"] = report.method;
  j["seed"] = report.seed;
  j["config_digest"] = report.config_digest;
  j["objectives"] = nlohmann::ordered_json::array();
  for (const ObjectiveReport &obj : report.objectives) {
    nlohmann::ordered_json o;
    o["id"] = obj.id;
    o["direction"] = obj.direction;
    o["mean_error"] = obj.mean_error;
    o["mean_error_raw"] = obj.mean_error_raw;
    o["units"] = obj.units;
    o["thresholds"] = obj.thresholds;
    o["success_rates"] = obj.success_rates;
    j["objectives"].push_back(std::move(o));
  }
  atomic_write(path, j.dump(2) + "\n");
}

} // namespace uniada
