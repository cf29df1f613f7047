#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "spectral_core/experiment.hpp"

namespace spectral_core {

inline constexpr const char* kArtifactVersion = "1.0.0";

enum ExitCode : int { kExitOk = 0, kExitValidation = 1, kExitNumerical = 2 };

/// Flat view of a hierarchical key-value file. Keys are dotted paths
/// ("train.epochs"); a "[train]" section header prefixes the keys below it.
/// Lines starting with '#' or ';' are comments. A JSON run manifest is also
/// accepted, in which case its "config" object is read.
class Config {
 public:
  static Config from_file(const std::filesystem::path& path);
  static Config from_string(const std::string& text);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::optional<std::string> raw(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::size_t> get_sizes(const std::string& key, const std::vector<std::size_t>& fallback) const;

  /// Later values win.
  void merge(const Config& overrides);
  const std::map<std::string, std::string>& values() const { return values_; }
  std::string to_text() const;

 private:
  std::map<std::string, std::string> values_;
};

/// Thrown for malformed configuration or inputs (exit code 1).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Effective settings derived from a Config with documented defaults.
std::uint64_t config_seed(const Config& cfg);
Activation config_activation(const Config& cfg);
TeacherSpec config_teacher(const Config& cfg);
TrialConfig config_trial(const Config& cfg);
SweepConfig config_sweep(const Config& cfg);

// Model files are text: a header line, the activation, then one block per
// layer with kind, shape, trainability flags and entries printed in
// shortest round-trip decimal form.
void save_model(std::ostream& out, const Network& net);
Network load_model(std::istream& in);
void save_model(const std::filesystem::path& path, const Network& net);
Network load_model(const std::filesystem::path& path);

/// CSV with header x0..x{d-1},y and full-precision values.
void save_dataset_csv(const std::filesystem::path& path, const Dataset& data);
Dataset load_dataset_csv(const std::filesystem::path& path);

/// Shortest decimal string that parses back to the same double.
std::string format_double(double v);

/// SHA-256 of a file, lowercase hex.
std::string file_sha256(const std::filesystem::path& path);

struct CommandContext {
  Config config;
  std::filesystem::path out_dir = ".";
  std::string command;
  std::ostream* log = nullptr;  // human-readable report, may be null
};

struct PathsOptions {
  std::filesystem::path model_a;
  std::filesystem::path model_b;
  std::optional<double> prune_tau;  // prune spectral models to their core first
};

struct PruneOptions {
  std::filesystem::path model;
  std::filesystem::path data;
  std::size_t trial = 0;
};

// Subcommands; each writes its outputs plus manifest.json into out_dir and
// returns an ExitCode.
int cmd_gen_teacher(const CommandContext& ctx);
int cmd_sweep(const CommandContext& ctx, const std::optional<std::filesystem::path>& teacher_file = {});
int cmd_prune(const CommandContext& ctx, const PruneOptions& opts);
int cmd_paths(const CommandContext& ctx, const PathsOptions& opts);
int cmd_grad_check(const CommandContext& ctx, bool corrupt_gradient = false);
int cmd_conv_demo(const CommandContext& ctx);

}  // namespace spectral_core
