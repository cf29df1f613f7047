#include "spectral_core/cli.hpp"

#include <openssl/evp.h>

#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <json.hpp>
#include <sstream>

#include "spectral_core/checks.hpp"

namespace spectral_core {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

void flatten_json(const json& j, const std::string& prefix, Config& out) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it->is_object()) {
      flatten_json(*it, key, out);
    } else if (it->is_string()) {
      out.set(key, it->get<std::string>());
    } else {
      out.set(key, it->dump());
    }
  }
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read " + path.string());
  return in;
}

double parse_double(const std::string& text, const std::string& what) {
  double v = 0.0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end) throw ValidationError("invalid number for " + what + ": '" + text + "'");
  return v;
}

std::uint64_t parse_u64(const std::string& text, const std::string& what) {
  std::uint64_t v = 0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end) throw ValidationError("invalid integer for " + what + ": '" + text + "'");
  return v;
}

class Manifest {
 public:
  explicit Manifest(const CommandContext& ctx) : ctx_(ctx), start_(std::chrono::steady_clock::now()) {}

  void output(const fs::path& path) { outputs_.push_back(path); }
  void record(const std::string& key, json value) { extra_[key] = std::move(value); }

  void write() {
    json j;
    j["artifact_version"] = kArtifactVersion;
    j["command"] = ctx_.command;
    j["base_seed"] = config_seed(ctx_.config);
    json cfg = json::object();
    for (const auto& [k, v] : ctx_.config.values()) cfg[k] = v;
    j["config"] = cfg;
    json files = json::object();
    for (const auto& p : outputs_) files[fs::relative(p, ctx_.out_dir).generic_string()] = file_sha256(p);
    j["outputs"] = files;
    j["results"] = extra_;
    j["timings"] = {{"wall_seconds",
                     std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count()}};
    auto out = open_out(ctx_.out_dir / "manifest.json");
    out << j.dump(2) << '\n';
  }

 private:
  const CommandContext& ctx_;
  std::chrono::steady_clock::time_point start_;
  std::vector<fs::path> outputs_;
  json extra_ = json::object();
};

std::ostream& log_of(const CommandContext& ctx) {
  static std::ostringstream sink;
  if (ctx.log) return *ctx.log;
  sink.str({});
  return sink;
}

template <typename Fn>
int guarded(const CommandContext& ctx, Fn&& fn) {
  try {
    return fn();
  } catch (const NumericalError& e) {
    std::cerr << ctx.command << ": numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << ctx.command << ": " << e.what() << '\n';
    return kExitValidation;
  }
}

void write_matrix_rows(std::ostream& out, const Matrix& m) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) out << (c ? " " : "") << format_double(m(r, c));
    out << '\n';
  }
}

void write_vector(std::ostream& out, const Vector& v) {
  for (std::size_t i = 0; i < v.size(); ++i) out << (i ? " " : "") << format_double(v[i]);
  out << '\n';
}

std::string expect_token(std::istream& in, const std::string& what) {
  std::string tok;
  if (!(in >> tok)) throw ValidationError("model file truncated: expected " + what);
  return tok;
}

void expect_keyword(std::istream& in, const std::string& keyword) {
  const std::string tok = expect_token(in, keyword);
  if (tok != keyword) throw ValidationError("model file: expected '" + keyword + "', found '" + tok + "'");
}

std::size_t read_size(std::istream& in, const std::string& what) {
  return static_cast<std::size_t>(parse_u64(expect_token(in, what), what));
}

Vector read_values(std::istream& in, std::size_t n, const std::string& what) {
  Vector v(n);
  for (auto& x : v) x = parse_double(expect_token(in, what), what);
  if (!all_finite(v)) throw ValidationError("model file: non-finite entry in " + what);
  return v;
}

std::string model_name(std::size_t h, Parametrization p, std::size_t trial) {
  return "h" + std::to_string(h) + "_" + std::string(to_string(p)) + "_t" + std::to_string(trial);
}

}  // namespace

// ---- Config ---------------------------------------------------------------

Config Config::from_string(const std::string& text) {
  Config cfg;
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    json j;
    try {
      j = json::parse(text);
    } catch (const json::exception& e) {
      throw ValidationError(std::string("config: invalid JSON: ") + e.what());
    }
    flatten_json(j.contains("config") ? j["config"] : j, "", cfg);
    return cfg;
  }
  std::istringstream in(text);
  std::string line;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ValidationError("config line " + std::to_string(line_no) + ": bad section");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (key.empty()) throw ValidationError("config line " + std::to_string(line_no) + ": empty key");
    cfg.set(section.empty() ? key : section + "." + key, value);
  }
  return cfg;
}

Config Config::from_file(const fs::path& path) {
  auto in = open_in(path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_string(buffer.str());
}

std::optional<std::string> Config::raw(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  return raw(key).value_or(fallback);
}

double Config::get_double(const std::string& key, double fallback) const {
  const auto v = raw(key);
  return v ? parse_double(*v, key) : fallback;
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
  const auto v = raw(key);
  return v ? parse_u64(*v, key) : fallback;
}

std::size_t Config::get_size(const std::string& key, std::size_t fallback) const {
  return static_cast<std::size_t>(get_u64(key, fallback));
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  const auto v = raw(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  throw ValidationError("invalid boolean for " + key + ": '" + *v + "'");
}

std::vector<std::size_t> Config::get_sizes(const std::string& key, const std::vector<std::size_t>& fallback) const {
  const auto v = raw(key);
  if (!v) return fallback;
  std::string text = *v;
  if (!text.empty() && text.front() == '[' && text.back() == ']') text = text.substr(1, text.size() - 2);
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(static_cast<std::size_t>(parse_u64(item, key)));
  }
  return out;
}

void Config::merge(const Config& overrides) {
  for (const auto& [k, v] : overrides.values_) values_[k] = v;
}

std::string Config::to_text() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

// ---- Derived settings -----------------------------------------------------

std::uint64_t config_seed(const Config& cfg) { return cfg.get_u64("seed", 1); }

Activation config_activation(const Config& cfg) {
  try {
    return Activation{parse_activation(cfg.get_string("activation", "tanh"))};
  } catch (const std::invalid_argument& e) {
    throw ValidationError(e.what());
  }
}

TeacherSpec config_teacher(const Config& cfg) {
  TeacherSpec spec;
  spec.input_dim = cfg.get_size("teacher.input_dim", spec.input_dim);
  spec.hidden = cfg.get_sizes("teacher.hidden", spec.hidden);
  spec.seed = cfg.get_u64("teacher.seed", SeededRng(config_seed(cfg)).child_seed(0));
  spec.activation = config_activation(cfg);
  if (spec.input_dim == 0) throw ValidationError("teacher.input_dim must be positive");
  if (spec.hidden.empty()) throw ValidationError("teacher.hidden must list at least one layer");
  for (std::size_t h : spec.hidden)
    if (h == 0) throw ValidationError("teacher.hidden sizes must be positive");
  return spec;
}

TrialConfig config_trial(const Config& cfg) {
  TrialConfig t;
  t.train.epochs = cfg.get_size("train.epochs", t.train.epochs);
  t.train.learning_rate = cfg.get_double("train.learning_rate", t.train.learning_rate);
  t.train.adam_beta1 = cfg.get_double("train.beta1", t.train.adam_beta1);
  t.train.adam_beta2 = cfg.get_double("train.beta2", t.train.adam_beta2);
  t.train.adam_epsilon = cfg.get_double("train.epsilon", t.train.adam_epsilon);
  t.train.eval_every = cfg.get_size("train.eval_every", t.train.eval_every);
  t.train.reg.alpha_w = cfg.get_double("reg.alpha_w", t.train.reg.alpha_w);
  t.train.reg.alpha_lambda = cfg.get_double("reg.alpha_lambda", t.train.reg.alpha_lambda);
  t.train.reg.alpha_phi = cfg.get_double("reg.alpha_phi", t.train.reg.alpha_phi);
  t.batch_standard = cfg.get_size("train.batch_standard", t.batch_standard);
  t.batch_spectral = cfg.get_size("train.batch_spectral", t.batch_spectral);
  t.tau = cfg.get_double("prune.tau", t.tau);
  try {
    t.train.batch_size = std::max<std::size_t>(1, std::min(t.batch_standard, t.batch_spectral));
    t.train.validate();
  } catch (const std::invalid_argument& e) {
    throw ValidationError(e.what());
  }
  if (t.batch_standard == 0 || t.batch_spectral == 0) throw ValidationError("batch sizes must be positive");
  if (!(t.tau > 0.0 && t.tau < 1.0)) throw ValidationError("prune.tau must lie in (0, 1)");
  return t;
}

SweepConfig config_sweep(const Config& cfg) {
  SweepConfig s;
  s.teacher = config_teacher(cfg);
  s.h_values = cfg.get_sizes("sweep.h", s.h_values);
  s.trials_per_h = cfg.get_size("sweep.trials", s.trials_per_h);
  s.trial = config_trial(cfg);
  s.train_size = cfg.get_size("sweep.train_size", s.train_size);
  s.test_size = cfg.get_size("sweep.test_size", s.test_size);
  const std::uint64_t seed = config_seed(cfg);
  s.base_seed = cfg.get_u64("sweep.base_seed", seed);
  s.data_seed = cfg.get_u64("sweep.data_seed", SeededRng(seed).child_seed(1));
  s.second_hidden = cfg.get_size("student.second_hidden", s.second_hidden);
  s.parallel = cfg.get_size("sweep.parallel", 1);
  if (const auto names = cfg.raw("sweep.parametrizations")) {
    s.parametrizations.clear();
    std::stringstream ss(*names);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (item.empty()) continue;
      try {
        s.parametrizations.push_back(parse_parametrization(item));
      } catch (const std::invalid_argument& e) {
        throw ValidationError(e.what());
      }
    }
  }
  if (s.h_values.empty()) throw ValidationError("sweep.h must list at least one width");
  for (std::size_t h : s.h_values)
    if (h == 0) throw ValidationError("sweep.h widths must be positive");
  if (s.train_size == 0 || s.test_size == 0) throw ValidationError("dataset sizes must be positive");
  if (s.second_hidden == 0) throw ValidationError("student.second_hidden must be positive");
  return s;
}

// ---- Serialization --------------------------------------------------------

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf, ptr);
}

void save_model(std::ostream& out, const Network& net) {
  net.validate();
  out << "spectral-core-model 1\n";
  out << "activation " << to_string(net.activation.kind) << '\n';
  out << "layers " << net.layers.size() << '\n';
  for (const auto& layer : net.layers) {
    if (const auto* d = std::get_if<DenseLayer>(&layer)) {
      out << "dense " << d->n_out() << ' ' << d->n_in() << '\n';
      out << "weights\n";
      write_matrix_rows(out, d->weights);
    } else {
      const auto& s = std::get<SpectralLayer>(layer);
      out << "spectral " << s.n_out() << ' ' << s.n_in() << '\n';
      out << "trainable " << (s.lambda_in_trainable ? 1 : 0) << ' ' << (s.lambda_out_trainable ? 1 : 0) << '\n';
      out << "phi\n";
      write_matrix_rows(out, s.phi);
      out << "lambda_in\n";
      write_vector(out, s.lambda_in);
      out << "lambda_out\n";
      write_vector(out, s.lambda_out);
    }
  }
}

Network load_model(std::istream& in) {
  expect_keyword(in, "spectral-core-model");
  if (expect_token(in, "version") != "1") throw ValidationError("model file: unsupported version");
  expect_keyword(in, "activation");
  Network net;
  try {
    net.activation.kind = parse_activation(expect_token(in, "activation name"));
  } catch (const std::invalid_argument& e) {
    throw ValidationError(e.what());
  }
  expect_keyword(in, "layers");
  const std::size_t count = read_size(in, "layer count");
  for (std::size_t k = 0; k < count; ++k) {
    const std::string kind = expect_token(in, "layer kind");
    const std::size_t rows = read_size(in, "rows");
    const std::size_t cols = read_size(in, "cols");
    if (kind == "dense") {
      expect_keyword(in, "weights");
      net.layers.emplace_back(DenseLayer{Matrix(rows, cols, read_values(in, rows * cols, "weights"))});
    } else if (kind == "spectral") {
      SpectralLayer s;
      expect_keyword(in, "trainable");
      s.lambda_in_trainable = read_size(in, "flag") != 0;
      s.lambda_out_trainable = read_size(in, "flag") != 0;
      expect_keyword(in, "phi");
      s.phi = Matrix(rows, cols, read_values(in, rows * cols, "phi"));
      expect_keyword(in, "lambda_in");
      s.lambda_in = read_values(in, cols, "lambda_in");
      expect_keyword(in, "lambda_out");
      s.lambda_out = read_values(in, rows, "lambda_out");
      net.layers.emplace_back(std::move(s));
    } else {
      throw ValidationError("model file: unknown layer kind '" + kind + "'");
    }
  }
  try {
    net.validate();
  } catch (const ShapeError& e) {
    throw ValidationError(std::string("model file: ") + e.what());
  }
  return net;
}

void save_model(const fs::path& path, const Network& net) {
  auto out = open_out(path);
  save_model(out, net);
}

Network load_model(const fs::path& path) {
  auto in = open_in(path);
  return load_model(in);
}

void save_dataset_csv(const fs::path& path, const Dataset& data) {
  auto out = open_out(path);
  const std::size_t dim = data.inputs.cols();
  for (std::size_t j = 0; j < dim; ++j) out << 'x' << j << ',';
  out << "y\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < dim; ++j) out << format_double(data.inputs(i, j)) << ',';
    out << format_double(data.targets[i]) << '\n';
  }
}

Dataset load_dataset_csv(const fs::path& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("dataset file is empty: " + path.string());
  const auto columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  if (columns < 2) throw ValidationError("dataset file needs at least one input column");
  std::vector<double> inputs;
  Dataset data;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t col = 0;
    while (std::getline(ss, cell, ',')) {
      const double v = parse_double(trim(cell), "dataset line " + std::to_string(line_no));
      if (col + 1 < columns) {
        inputs.push_back(v);
      } else if (col + 1 == columns) {
        data.targets.push_back(v);
      }
      ++col;
    }
    if (col != columns) throw ValidationError("dataset line " + std::to_string(line_no) + ": wrong column count");
  }
  if (data.targets.empty()) throw ValidationError("dataset file has no rows: " + path.string());
  data.inputs = Matrix(data.targets.size(), columns - 1, std::move(inputs));
  return data;
}

std::string file_sha256(const fs::path& path) {
  auto in = std::ifstream(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> md(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  EVP_DigestInit_ex(md.get(), EVP_sha256(), nullptr);
  char buf[1 << 15];
  while (in) {
    in.read(buf, sizeof buf);
    EVP_DigestUpdate(md.get(), buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(md.get(), digest, &len);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

// ---- Commands -------------------------------------------------------------

int cmd_gen_teacher(const CommandContext& ctx) {
  return guarded(ctx, [&] {
    Manifest manifest(ctx);
    const TeacherSpec spec = config_teacher(ctx.config);
    const Network teacher = build_teacher(spec);
    const fs::path path = ctx.out_dir / "teacher.model";
    save_model(path, teacher);
    manifest.output(path);
    manifest.record("teacher_seed", spec.seed);
    manifest.write();
    std::ostream& log = log_of(ctx);
    log << "teacher " << spec.input_dim;
    for (std::size_t h : spec.hidden) log << '-' << h;
    log << "-1 written to " << path.string() << " (seed " << spec.seed << ")\n";
    return kExitOk;
  });
}

int cmd_sweep(const CommandContext& ctx, const std::optional<fs::path>& teacher_file) {
  return guarded(ctx, [&] {
    Manifest manifest(ctx);
    const SweepConfig cfg = config_sweep(ctx.config);
    const bool save_models = ctx.config.get_bool("sweep.save_models", true);
    std::ostream& log = log_of(ctx);

    SweepData data;
    if (teacher_file) {
      data.teacher = load_model(*teacher_file);
      if (data.teacher.input_dim() != cfg.teacher.input_dim)
        throw ValidationError("teacher input dimension does not match teacher.input_dim");
      SeededRng rng(cfg.data_seed);
      data.train = generate_dataset(data.teacher, cfg.train_size, rng.child_seed(0));
      data.test = generate_dataset(data.teacher, cfg.test_size, rng.child_seed(1));
    } else {
      data = prepare_sweep_data(cfg);
    }
    fs::create_directories(ctx.out_dir);
    const fs::path teacher_path = ctx.out_dir / "teacher.model";
    save_model(teacher_path, data.teacher);
    const fs::path test_path = ctx.out_dir / "test_set.csv";
    save_dataset_csv(test_path, data.test);
    manifest.output(teacher_path);
    manifest.output(test_path);

    // Rows stream to a partial file in completion order; the final file is
    // rewritten sorted so parallel runs produce identical bytes.
    const fs::path partial_path = ctx.out_dir / "sweep_summary.csv.partial";
    auto partial = open_out(partial_path);
    partial << "h,parametrization,trial,train_mse,test_mse,core_size\n" << std::flush;
    auto row = [](const TrialResult& r) {
      std::ostringstream s;
      s << r.h << ',' << to_string(r.parametrization) << ',' << r.trial_index << ',';
      if (r.ok) {
        s << format_double(r.train_mse) << ',' << format_double(r.test_mse) << ',' << r.core_size;
      } else {
        s << "nan,nan,";
      }
      return s.str();
    };
    std::vector<fs::path> trial_files;
    auto on_result = [&](const TrialResult& r) {
      partial << row(r) << '\n' << std::flush;
      const std::string name = model_name(r.h, r.parametrization, r.trial_index);
      if (!r.ok) {
        std::cerr << "sweep: trial " << name << " failed: " << r.error << '\n';
        return;
      }
      log << name << " test_mse=" << format_double(r.test_mse) << " core=" << r.core_size << '\n';
      if (save_models) {
        const fs::path mp = ctx.out_dir / "models" / (name + ".model");
        save_model(mp, r.model);
        trial_files.push_back(mp);
        const fs::path hp = ctx.out_dir / "history" / (name + ".csv");
        auto h = open_out(hp);
        h << "epoch,train_loss,test_mse\n";
        for (const auto& e : r.history.epochs) {
          h << e.epoch << ',' << format_double(e.train_loss) << ',';
          if (!std::isnan(e.test_mse)) h << format_double(e.test_mse);
          h << '\n';
        }
        trial_files.push_back(hp);
      }
    };
    const std::vector<TrialResult> results = run_sweep(cfg, data, on_result);
    partial.close();

    const fs::path summary_path = ctx.out_dir / "sweep_summary.csv";
    {
      auto summary = open_out(summary_path);
      summary << "h,parametrization,trial,train_mse,test_mse,core_size\n";
      for (const auto& r : results) summary << row(r) << '\n';
    }
    fs::remove(partial_path);

    const fs::path hist_path = ctx.out_dir / "histograms.csv";
    {
      auto hist = open_out(hist_path);
      hist << "h,parametrization,bin_lo,bin_hi,count\n";
      for (std::size_t h : cfg.h_values) {
        for (Parametrization p : cfg.parametrizations) {
          Vector pooled;
          for (const auto& r : results)
            if (r.ok && r.h == h && r.parametrization == p)
              pooled.insert(pooled.end(), r.relevance.normalized.begin(), r.relevance.normalized.end());
          const Histogram hg = histogram(pooled);
          for (std::size_t b = 0; b < hg.counts.size(); ++b) {
            hist << h << ',' << to_string(p) << ',' << format_double(hg.bin_edges[b]) << ','
                 << format_double(hg.bin_edges[b + 1]) << ',' << hg.counts[b] << '\n';
          }
        }
      }
    }
    manifest.output(summary_path);
    manifest.output(hist_path);
    std::sort(trial_files.begin(), trial_files.end());
    for (const auto& p : trial_files) manifest.output(p);

    std::size_t failures = 0;
    for (const auto& r : results) failures += r.ok ? 0 : 1;
    manifest.record("trials", results.size());
    manifest.record("failed_trials", failures);
    manifest.write();
    log << results.size() << " trials, " << failures << " failed\n";
    return failures == 0 ? kExitOk : kExitNumerical;
  });
}

int cmd_prune(const CommandContext& ctx, const PruneOptions& opts) {
  return guarded(ctx, [&] {
    Manifest manifest(ctx);
    const Network net = load_model(opts.model);
    const Dataset test = load_dataset_csv(opts.data);
    if (test.inputs.cols() != net.input_dim())
      throw ValidationError("model input dimension " + std::to_string(net.input_dim()) +
                            " does not match data width " + std::to_string(test.inputs.cols()));
    if (net.layers.size() < 2) throw ValidationError("model needs at least two layers to prune");
    const double tau = ctx.config.get_double("prune.tau", kDefaultCoreTau);
    if (!(tau > 0.0 && tau < 1.0)) throw ValidationError("prune.tau must lie in (0, 1)");
    const std::size_t n_teacher = ctx.config.get_size("prune.n_teacher", config_teacher(ctx.config).hidden.front());

    const RelevanceVector rel = relevance(net.layers[0]);
    const std::size_t core = estimate_core_size(rel, tau);
    const PruneCurve curve = prune_curve(net, rel, test, n_teacher);
    const std::size_t h = layer_n_out(net.layers[0]);

    const fs::path path = ctx.out_dir / "prune_curve.csv";
    {
      auto out = open_out(path);
      out << "h,trial,n_lambda,n_teacher,delta_mse\n";
      for (const auto& p : curve.points)
        out << h << ',' << opts.trial << ',' << p.n_lambda << ',' << n_teacher << ',' << format_double(p.delta_mse)
            << '\n';
    }
    manifest.output(path);
    manifest.record("tau", tau);
    manifest.record("core_size", core);
    manifest.record("full_mse", curve.full_mse);
    manifest.write();
    std::ostream& log = log_of(ctx);
    log << "# tau=" << format_double(tau) << " core_size=" << core << " h=" << h << " n_teacher=" << n_teacher
        << '\n';
    log << "full test mse " << format_double(curve.full_mse) << ", " << curve.points.size()
        << " curve points written to " << path.string() << '\n';
    return kExitOk;
  });
}

int cmd_paths(const CommandContext& ctx, const PathsOptions& opts) {
  return guarded(ctx, [&] {
    Manifest manifest(ctx);
    auto prepare = [&](const fs::path& file) {
      Network net = load_model(file);
      if (net.layers.size() < 2) throw ValidationError(file.string() + ": need at least two linear transfers");
      if (opts.prune_tau && std::holds_alternative<SpectralLayer>(net.layers[0])) {
        const auto keep = core_indices(relevance(net.layers[0]), *opts.prune_tau);
        if (!keep.empty()) net = prune_to(net, keep);
      }
      return net;
    };
    const Network a = prepare(opts.model_a);
    const Network b = prepare(opts.model_b);
    const PathSpectrum sa = path_spectrum(path_tensor(a));
    const PathSpectrum sb = path_spectrum(path_tensor(b));
    const double distance = spectrum_distance(sa, sb);

    const fs::path path = ctx.out_dir / "paths.csv";
    {
      auto out = open_out(path);
      out << "network_id,frac_index,gamma_value\n";
      for (const auto& [id, s] : {std::pair{"a", &sa}, std::pair{"b", &sb}})
        for (std::size_t i = 0; i < s->sorted_values.size(); ++i)
          out << id << ',' << format_double(s->frac_index[i]) << ',' << format_double(s->sorted_values[i]) << '\n';
    }
    manifest.output(path);
    manifest.record("distance", distance);
    manifest.record("hidden_a", layer_n_out(a.layers[0]));
    manifest.record("hidden_b", layer_n_out(b.layers[0]));
    manifest.write();
    log_of(ctx) << "a: " << opts.model_a.string() << " (" << sa.sorted_values.size() << " paths)\n"
                << "b: " << opts.model_b.string() << " (" << sb.sorted_values.size() << " paths)\n"
                << "distance " << format_double(distance) << '\n';
    return kExitOk;
  });
}

int cmd_grad_check(const CommandContext& ctx, bool corrupt_gradient) {
  return guarded(ctx, [&] {
    Manifest manifest(ctx);
    GradSuiteConfig cfg;
    cfg.seeds = ctx.config.get_size("gradcheck.seeds", cfg.seeds);
    cfg.base_seed = config_seed(ctx.config);
    cfg.step = ctx.config.get_double("gradcheck.step", cfg.step);
    cfg.dims = ctx.config.get_sizes("gradcheck.dims", cfg.dims);
    if (const auto act = ctx.config.raw("gradcheck.activation"); act && *act != "all") {
      cfg.activations = {config_activation(Config::from_string("activation = " + *act)).kind};
    }
    if (corrupt_gradient) cfg.corrupt_scale = 1.01;
    const double tolerance = ctx.config.get_double("gradcheck.tolerance", 1e-6);

    const auto entries = run_grad_suite(cfg);
    std::ostream& log = log_of(ctx);
    bool pass = true;
    json report = json::array();
    for (const auto& e : entries) {
      const bool ok = e.max_relative_error < tolerance && e.untrainable_gradients_zero;
      pass = pass && ok;
      log << (ok ? "PASS " : "FAIL ") << std::left << std::setw(20) << to_string(e.kind) << std::setw(10)
          << to_string(e.activation) << " max_rel_error=" << format_double(e.max_relative_error)
          << (e.untrainable_gradients_zero ? "" : " untrainable-gradient-nonzero") << '\n';
      report.push_back({{"layer", to_string(e.kind)},
                        {"activation", to_string(e.activation)},
                        {"max_relative_error", e.max_relative_error},
                        {"untrainable_zero", e.untrainable_gradients_zero}});
    }
    manifest.record("grad_check", report);
    manifest.record("pass", pass);
    manifest.write();
    return pass ? kExitOk : kExitNumerical;
  });
}

int cmd_conv_demo(const CommandContext& ctx) {
  return guarded(ctx, [&] {
    Manifest manifest(ctx);
    std::ostream& log = log_of(ctx);
    ConvSpec demo;
    demo.filter = Matrix{{1.0, 2.0}, {3.0, 4.0}};
    const ToeplitzOperator op = toeplitz_matrix(demo);
    const DuplicatedForm dup = duplicated_form(demo);
    log << "4x4 input, 2x2 filter [[1,2],[3,4]], stride 1, pad 0\n";
    log << "toeplitz operator (" << op.matrix.rows() << "x" << op.matrix.cols() << "):\n";
    write_matrix_rows(log, op.matrix);
    log << "duplication map:";
    for (std::size_t v : dup.duplication_map) log << ' ' << v;
    log << "\nlambda_in (filter weight per duplicated column):\n";
    write_vector(log, dup.lambda_in);

    SeededRng rng(config_seed(ctx.config));
    const ConvCheck fixed = check_conv_case(demo, rng, 20);
    ConvSpec strided = demo;
    strided.stride_x = strided.stride_y = 2;
    const ConvCheck stride2 = check_conv_case(strided, rng, 20);
    const std::size_t cases = ctx.config.get_size("conv.cases", 50);
    const ConvCheck random = check_conv_equivalence(cases, rng.child_seed(9));

    auto line = [&](const char* name, const ConvCheck& c) {
      log << name << ": toeplitz=" << format_double(c.max_toeplitz_error)
          << " duplicated=" << format_double(c.max_duplicated_error)
          << " lambda_in=" << format_double(c.max_lambda_in_error)
          << " relevance1=" << format_double(c.max_relevance_error)
          << " relevance0.5=" << format_double(c.max_half_relevance_error) << '\n';
    };
    line("default case", fixed);
    line("stride 2 case", stride2);
    line("randomized cases", random);
    const double worst = std::max({fixed.max_error(), stride2.max_error(), random.max_error()});
    log << "max equivalence error " << format_double(worst) << '\n';

    if (ctx.config.get_bool("conv.dump_toeplitz", false)) {
      const fs::path path = ctx.out_dir / "toeplitz.csv";
      auto out = open_out(path);
      for (std::size_t r = 0; r < op.matrix.rows(); ++r) {
        for (std::size_t c = 0; c < op.matrix.cols(); ++c) out << (c ? "," : "") << format_double(op.matrix(r, c));
        out << '\n';
      }
      out.close();
      manifest.output(path);
    }
    manifest.record("max_error", worst);
    manifest.write();
    const bool pass = worst < 1e-12 && random.single_nonzero_columns && random.toeplitz_entries_from_filter;
    return pass ? kExitOk : kExitNumerical;
  });
}

}  // namespace spectral_core
