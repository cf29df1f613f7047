#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "spectral_core/cli.hpp"

namespace sc = spectral_core;

namespace {

struct CommonFlags {
  std::string config_path;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
  std::optional<std::string> h_list;
  std::optional<std::size_t> trials;
  std::optional<std::size_t> parallel;
  std::optional<double> tau;
  std::optional<double> alpha_lambda;
  std::optional<double> alpha_phi;
  std::optional<double> alpha_w;
};

void add_common(CLI::App* app, CommonFlags& f) {
  app->add_option("--config", f.config_path, "Config file (key = value, or a run manifest)");
  app->add_option("--out", f.out_dir, "Output directory");
  app->add_option("--seed", f.seed, "Base seed");
  app->add_option("--h", f.h_list, "Comma-separated hidden widths");
  app->add_option("--trials", f.trials, "Trials per width");
  app->add_option("--parallel", f.parallel, "Concurrent trials");
  app->add_option("--tau", f.tau, "Core-size threshold on normalized relevance");
  app->add_option("--alpha-lambda", f.alpha_lambda, "Penalty on eigenvalues");
  app->add_option("--alpha-phi", f.alpha_phi, "Penalty on eigenvector entries");
  app->add_option("--alpha-w", f.alpha_w, "Penalty on dense weights");
}

std::optional<std::size_t> thread_cap() {
  const char* env = std::getenv("SPECTRAL_CORE_THREADS");
  if (env == nullptr || *env == '\0') return std::nullopt;
  std::size_t v = 0;
  const char* end = env + std::char_traits<char>::length(env);
  auto [ptr, ec] = std::from_chars(env, end, v);
  if (ec != std::errc{} || ptr != end || v == 0)
    throw sc::ValidationError("SPECTRAL_CORE_THREADS must be a positive integer");
  return v;
}

sc::CommandContext make_context(const CommonFlags& f, const std::string& command) {
  sc::CommandContext ctx;
  ctx.command = command;
  ctx.out_dir = f.out_dir;
  ctx.log = &std::cout;
  if (!f.config_path.empty()) ctx.config = sc::Config::from_file(f.config_path);
  sc::Config& c = ctx.config;
  if (f.seed) c.set("seed", std::to_string(*f.seed));
  if (f.h_list) c.set("sweep.h", *f.h_list);
  if (f.trials) c.set("sweep.trials", std::to_string(*f.trials));
  if (f.parallel) c.set("sweep.parallel", std::to_string(*f.parallel));
  if (f.tau) c.set("prune.tau", sc::format_double(*f.tau));
  if (f.alpha_lambda) c.set("reg.alpha_lambda", sc::format_double(*f.alpha_lambda));
  if (f.alpha_phi) c.set("reg.alpha_phi", sc::format_double(*f.alpha_phi));
  if (f.alpha_w) c.set("reg.alpha_w", sc::format_double(*f.alpha_w));
  if (const auto cap = thread_cap()) {
    const std::size_t requested = c.get_size("sweep.parallel", 1);
    c.set("sweep.parallel", std::to_string(std::min(requested, *cap)));
  }
  return ctx;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral-parametrization teacher/student experiments"};
  app.set_help_flag("--help", "Print this help message and exit");
  app.require_subcommand(1);

  CommonFlags flags;

  auto* gen = app.add_subcommand("gen-teacher", "Build and save the teacher network");
  add_common(gen, flags);

  auto* sweep = app.add_subcommand("sweep", "Train student grids and summarize relevance");
  add_common(sweep, flags);
  std::optional<std::string> teacher_path;
  sweep->add_option("--teacher", teacher_path, "Existing teacher model file");

  auto* prune = app.add_subcommand("prune", "Prune a trained student and record the MSE curve");
  add_common(prune, flags);
  std::optional<std::string> prune_model, prune_data;
  std::optional<std::size_t> prune_trial;
  prune->add_option("--model", prune_model, "Student model file");
  prune->add_option("--data", prune_data, "Test set CSV");
  prune->add_option("--trial", prune_trial, "Trial index written to the CSV");

  auto* paths = app.add_subcommand("paths", "Compare path spectra of two models");
  add_common(paths, flags);
  std::optional<std::string> model_a, model_b;
  bool prune_first = false;
  paths->add_option("model_a", model_a, "First model file");
  paths->add_option("model_b", model_b, "Second model file");
  paths->add_flag("--prune-core", prune_first, "Reduce spectral models to their core (uses --tau)");

  auto* grad = app.add_subcommand("grad-check", "Finite-difference check of all gradients");
  add_common(grad, flags);
  bool corrupt = false;
  grad->add_flag("--corrupt-gradient", corrupt, "Scale analytic gradients by 1.01 (negative control)");

  auto* conv = app.add_subcommand("conv-demo", "Convolution as spectral layer equivalence report");
  add_common(conv, flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? sc::kExitOk : sc::kExitValidation;
  }

  sc::CommandContext ctx;
  try {
    ctx = make_context(flags, app.get_subcommands().front()->get_name());
    // Per-command inputs live in the config too, so a manifest replays the run.
    sc::Config& c = ctx.config;
    if (teacher_path) c.set("sweep.teacher", *teacher_path);
    if (prune_model) c.set("prune.model", *prune_model);
    if (prune_data) c.set("prune.data", *prune_data);
    if (prune_trial) c.set("prune.trial", std::to_string(*prune_trial));
    if (model_a) c.set("paths.model_a", *model_a);
    if (model_b) c.set("paths.model_b", *model_b);
    if (prune_first) c.set("paths.prune_core", "true");
    if (corrupt) c.set("gradcheck.corrupt", "true");
    for (const char* key : {"prune.model", "prune.data"})
      if (*prune && !c.has(key)) throw sc::ValidationError(std::string("missing --") + (key + 6));
    for (const char* key : {"paths.model_a", "paths.model_b"})
      if (*paths && !c.has(key)) throw sc::ValidationError("paths needs two model files");
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return sc::kExitValidation;
  }

  const sc::Config& c = ctx.config;
  if (*gen) return sc::cmd_gen_teacher(ctx);
  if (*sweep) {
    std::optional<std::filesystem::path> teacher;
    if (const auto t = c.raw("sweep.teacher")) teacher = *t;
    return sc::cmd_sweep(ctx, teacher);
  }
  if (*prune) {
    sc::PruneOptions opts;
    opts.model = c.get_string("prune.model", "");
    opts.data = c.get_string("prune.data", "");
    opts.trial = c.get_size("prune.trial", 0);
    return sc::cmd_prune(ctx, opts);
  }
  if (*paths) {
    sc::PathsOptions opts{c.get_string("paths.model_a", ""), c.get_string("paths.model_b", ""), std::nullopt};
    if (c.get_bool("paths.prune_core", false)) opts.prune_tau = c.get_double("prune.tau", sc::kDefaultCoreTau);
    return sc::cmd_paths(ctx, opts);
  }
  if (*grad) return sc::cmd_grad_check(ctx, c.get_bool("gradcheck.corrupt", false));
  if (*conv) return sc::cmd_conv_demo(ctx);
  return sc::kExitValidation;
}
