#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "spectral_core/analysis.hpp"
#include "spectral_core/training.hpp"

namespace spectral_core {

enum class Parametrization { standard, spectral };

std::string_view to_string(Parametrization p);
Parametrization parse_parametrization(std::string_view name);

/// Frozen supervisor: dense hidden layers, output weights fixed at one.
struct TeacherSpec {
  std::size_t input_dim = 10;
  std::vector<std::size_t> hidden = {20, 20};
  std::size_t output_dim = 1;
  std::uint64_t seed = 1;
  Activation activation;
};

/// Student of shape input_dim - h - second_hidden - 1.
struct StudentSpec {
  std::size_t h = 20;
  Parametrization parametrization = Parametrization::spectral;
  std::uint64_t seed = 0;
  std::size_t input_dim = 10;
  std::size_t second_hidden = 20;
  Activation activation;
};

Network build_teacher(const TeacherSpec& spec);

/// Standard-normal inputs labelled by the teacher, without noise.
Dataset generate_dataset(const Network& teacher, std::size_t n, std::uint64_t seed);

struct StudentPair {
  Network standard;
  Network spectral;
};

/// Both students share every Glorot draw. The spectral first layer uses
/// lambda_out = 1, lambda_in = 0 (untrained) and phi = -w, so the two
/// networks compute the same function at initialization.
StudentPair build_student_pair(const StudentSpec& spec);

struct TrialConfig {
  TrainConfig train;  // batch_size here is ignored; see below
  std::size_t batch_standard = 500;
  std::size_t batch_spectral = 300;
  double tau = kDefaultCoreTau;
};

struct TrialResult {
  std::size_t h = 0;
  Parametrization parametrization = Parametrization::spectral;
  std::size_t trial_index = 0;
  std::uint64_t seed = 0;
  double train_mse = 0.0;
  double test_mse = 0.0;
  RelevanceVector relevance;
  std::size_t core_size = 0;
  Network model;
  TrainHistory history;
  bool ok = true;
  std::string error;
};

/// Trains one student. The student seed is base_seed + trial_index; the
/// shuffling stream is a child of that seed.
TrialResult run_trial(const Dataset& train_set, const Dataset& test_set, const StudentSpec& spec,
                      std::size_t trial_index, const TrialConfig& cfg);

struct SweepConfig {
  TeacherSpec teacher;
  std::vector<std::size_t> h_values = {10, 20, 40, 60, 100, 200, 500, 700, 1000};
  std::size_t trials_per_h = 30;
  std::vector<Parametrization> parametrizations = {Parametrization::standard, Parametrization::spectral};
  TrialConfig trial;
  std::size_t train_size = 13000;
  std::size_t test_size = 1000;
  std::uint64_t base_seed = 1000;
  std::uint64_t data_seed = 7;
  std::size_t second_hidden = 20;
  std::size_t parallel = 1;
};

struct SweepData {
  Network teacher;
  Dataset train;
  Dataset test;
};

/// One teacher and one train/test pair per sweep.
SweepData prepare_sweep_data(const SweepConfig& cfg);

using TrialCallback = std::function<void(const TrialResult&)>;

/// Runs every (h, parametrization, trial). Results come back sorted by
/// (h, parametrization, trial); on_result fires as each trial finishes,
/// serialized across worker threads. Failed trials carry ok = false.
std::vector<TrialResult> run_sweep(const SweepConfig& cfg, const SweepData& data,
                                   const TrialCallback& on_result = {});
std::vector<TrialResult> run_sweep(const SweepConfig& cfg, const TrialCallback& on_result = {});

}  // namespace spectral_core
