#include <CLI11.hpp>
#include <cstdio>

#include "tomoloc/pipeline.hpp"

namespace {

struct CommonFlags {
  std::string config, seed, dims, context, tau, jobs, out;
  CLI::Option *o_config = nullptr, *o_seed = nullptr, *o_dims = nullptr, *o_context = nullptr,
              *o_tau = nullptr, *o_jobs = nullptr, *o_out = nullptr;
};

void add_common(CLI::App* sub, CommonFlags& f) {
  f.o_config = sub->add_option("--config", f.config, "key=value config file");
  f.o_seed = sub->add_option("--seed", f.seed, "master seed (uint64)");
  f.o_dims = sub->add_option("--dims", f.dims, "comma-separated model dimensions d^2");
  f.o_context = sub->add_option("--context", f.context, "full, real or both");
  f.o_tau = sub->add_option("--tau", f.tau, "rank threshold");
  f.o_jobs = sub->add_option("--jobs", f.jobs, "worker count (1 = serial reference)");
  f.o_out = sub->add_option("--out", f.out, "output directory");
}

tomoloc::PipelineConfig resolve(const CommonFlags& f) {
  tomoloc::PipelineConfig cfg =
      f.o_config->count() ? tomoloc::load_config(f.config) : tomoloc::PipelineConfig{};
  if (f.o_seed->count()) tomoloc::apply_key(cfg, "seed", f.seed);
  if (f.o_dims->count()) tomoloc::apply_key(cfg, "dims", f.dims);
  if (f.o_context->count()) tomoloc::apply_key(cfg, "context", f.context);
  if (f.o_tau->count()) tomoloc::apply_key(cfg, "tau", f.tau);
  if (f.o_jobs->count()) tomoloc::apply_key(cfg, "jobs", f.jobs);
  if (f.o_out->count()) tomoloc::apply_key(cfg, "out", f.out);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tomoloc: synthetic prepare-and-measure test of tomographic locality"};
  app.require_subcommand(1);

  CommonFlags fg, ff, fl, fp, fc;
  CLI::App* generate = app.add_subcommand("generate", "sample a synthetic dataset");
  CLI::App* fit = app.add_subcommand("fit", "dimension scan with train/test selection");
  CLI::App* locality =
      app.add_subcommand("locality", "fit, secondary extraction and rank verdicts");
  CLI::App* pipeline = app.add_subcommand("pipeline", "generate + fit + locality in one run");
  CLI::App* calibrate =
      app.add_subcommand("calibrate", "noise-scale estimate and threshold calibration");
  add_common(generate, fg);
  add_common(fit, ff);
  add_common(locality, fl);
  add_common(pipeline, fp);
  add_common(calibrate, fc);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(tomoloc::ErrorCategory::validation);
  }

  try {
    if (generate->parsed()) tomoloc::run_generate(resolve(fg));
    else if (fit->parsed()) tomoloc::run_fit(resolve(ff));
    else if (locality->parsed()) tomoloc::run_locality(resolve(fl));
    else if (pipeline->parsed()) tomoloc::run_pipeline(resolve(fp));
    else if (calibrate->parsed()) tomoloc::run_calibrate(resolve(fc));
  } catch (const tomoloc::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(e.category);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "unexpected error: %s\n", e.what());
    return 1;
  }
  return 0;
}
