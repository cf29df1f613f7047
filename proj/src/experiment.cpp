#include "spectral_core/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <tuple>

namespace spectral_core {

std::string_view to_string(Parametrization p) {
  return p == Parametrization::standard ? "standard" : "spectral";
}

Parametrization parse_parametrization(std::string_view name) {
  if (name == "standard") return Parametrization::standard;
  if (name == "spectral") return Parametrization::spectral;
  throw std::invalid_argument("unknown parametrization '" + std::string(name) + "'");
}

Network build_teacher(const TeacherSpec& spec) {
  if (spec.input_dim == 0 || spec.output_dim == 0) throw std::invalid_argument("teacher: dimensions must be positive");
  for (std::size_t h : spec.hidden)
    if (h == 0) throw std::invalid_argument("teacher: hidden sizes must be positive");
  SeededRng rng(spec.seed);
  Network net;
  net.activation = spec.activation;
  std::size_t fan_in = spec.input_dim;
  for (std::size_t h : spec.hidden) {
    net.layers.emplace_back(DenseLayer{glorot_uniform(rng, fan_in, h)});
    fan_in = h;
  }
  net.layers.emplace_back(DenseLayer{Matrix(spec.output_dim, fan_in, 1.0)});
  return net;
}

Dataset generate_dataset(const Network& teacher, std::size_t n, std::uint64_t seed) {
  SeededRng rng(seed);
  Dataset data;
  data.inputs = sample_standard_gaussian(rng, teacher.input_dim(), n);
  const Matrix out = forward_batch(teacher, data.inputs);
  data.targets.resize(n);
  for (std::size_t i = 0; i < n; ++i) data.targets[i] = out(i, 0);
  return data;
}

StudentPair build_student_pair(const StudentSpec& spec) {
  if (spec.h == 0 || spec.input_dim == 0 || spec.second_hidden == 0)
    throw std::invalid_argument("student: dimensions must be positive");
  SeededRng rng(spec.seed);
  const Matrix w1 = glorot_uniform(rng, spec.input_dim, spec.h);
  const Matrix w2 = glorot_uniform(rng, spec.h, spec.second_hidden);
  const Matrix w3 = glorot_uniform(rng, spec.second_hidden, 1);

  StudentPair pair;
  pair.standard.activation = spec.activation;
  pair.standard.layers = {DenseLayer{w1}, DenseLayer{w2}, DenseLayer{w3}};

  SpectralLayer first;
  first.phi = scale(w1, -1.0);
  first.lambda_in.assign(spec.input_dim, 0.0);
  first.lambda_out.assign(spec.h, 1.0);
  first.lambda_in_trainable = false;
  first.lambda_out_trainable = true;
  pair.spectral.activation = spec.activation;
  pair.spectral.layers = {first, DenseLayer{w2}, DenseLayer{w3}};
  return pair;
}

TrialResult run_trial(const Dataset& train_set, const Dataset& test_set, const StudentSpec& spec,
                      std::size_t trial_index, const TrialConfig& cfg) {
  TrialResult result;
  result.h = spec.h;
  result.parametrization = spec.parametrization;
  result.trial_index = trial_index;
  result.seed = spec.seed;

  StudentPair pair = build_student_pair(spec);
  Network student = spec.parametrization == Parametrization::spectral ? std::move(pair.spectral)
                                                                     : std::move(pair.standard);
  TrainConfig tc = cfg.train;
  tc.batch_size = spec.parametrization == Parametrization::spectral ? cfg.batch_spectral : cfg.batch_standard;
  tc.batch_size = std::min(tc.batch_size, train_set.size());
  tc.seed = SeededRng(spec.seed).child_seed(1);

  TrainResult trained = train(std::move(student), train_set, &test_set, tc);
  result.model = std::move(trained.network);
  result.history = std::move(trained.history);
  result.train_mse = mse(result.model, train_set);
  result.test_mse = mse(result.model, test_set);
  result.relevance = relevance(result.model.layers.at(0));
  result.core_size = estimate_core_size(result.relevance, cfg.tau);
  return result;
}

SweepData prepare_sweep_data(const SweepConfig& cfg) {
  SweepData data;
  data.teacher = build_teacher(cfg.teacher);
  SeededRng rng(cfg.data_seed);
  data.train = generate_dataset(data.teacher, cfg.train_size, rng.child_seed(0));
  data.test = generate_dataset(data.teacher, cfg.test_size, rng.child_seed(1));
  return data;
}

std::vector<TrialResult> run_sweep(const SweepConfig& cfg, const SweepData& data,
                                   const TrialCallback& on_result) {
  struct Job {
    std::size_t h;
    Parametrization p;
    std::size_t trial;
  };
  std::vector<Job> jobs;
  for (std::size_t h : cfg.h_values)
    for (std::size_t t = 0; t < cfg.trials_per_h; ++t)
      for (Parametrization p : cfg.parametrizations) jobs.push_back({h, p, t});

  std::vector<TrialResult> results(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex callback_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      const Job& job = jobs[i];
      StudentSpec spec;
      spec.h = job.h;
      spec.parametrization = job.p;
      spec.seed = cfg.base_seed + job.trial;
      spec.input_dim = cfg.teacher.input_dim;
      spec.second_hidden = cfg.second_hidden;
      spec.activation = cfg.teacher.activation;
      TrialResult r;
      try {
        r = run_trial(data.train, data.test, spec, job.trial, cfg.trial);
      } catch (const std::exception& e) {
        r = TrialResult{};
        r.h = job.h;
        r.parametrization = job.p;
        r.trial_index = job.trial;
        r.seed = spec.seed;
        r.ok = false;
        r.error = e.what();
      }
      if (on_result) {
        std::lock_guard lock(callback_mutex);
        on_result(r);
      }
      results[i] = std::move(r);
    }
  };

  const std::size_t threads = std::clamp<std::size_t>(cfg.parallel, 1, std::max<std::size_t>(jobs.size(), 1));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  std::sort(results.begin(), results.end(), [](const TrialResult& a, const TrialResult& b) {
    return std::tuple(a.h, a.parametrization, a.trial_index) < std::tuple(b.h, b.parametrization, b.trial_index);
  });
  return results;
}

std::vector<TrialResult> run_sweep(const SweepConfig& cfg, const TrialCallback& on_result) {
  return run_sweep(cfg, prepare_sweep_data(cfg), on_result);
}

}  // namespace spectral_core
