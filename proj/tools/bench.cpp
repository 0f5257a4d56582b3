#include <chrono>
#include <cstdio>
#include <string>

#include "tomoloc/parallel.hpp"
#include "tomoloc/pipeline.hpp"

using namespace tomoloc;
using Clock = std::chrono::steady_clock;

namespace {

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

void report(const char* name, double serial_ms, double parallel_ms, bool identical) {
  std::printf("%-28s %10.1f ms %10.1f ms %7.2fx   %s\n", name, serial_ms, parallel_ms,
              serial_ms / parallel_ms, identical ? "identical" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  int jobs = default_jobs();
  for (int a = 1; a < argc; ++a) {
    const std::string arg = argv[a];
    if (arg == "--jobs" && a + 1 < argc) jobs = std::stoi(argv[++a]);
  }
  std::printf("comparing serial reference (jobs=1) against OpenMP kernels (jobs=%d)\n\n", jobs);
  std::printf("%-28s %13s %13s %9s   %s\n", "kernel", "serial", "parallel", "speedup",
              "check");

  const Catalog catalog = build_catalog();
  const AngleTable table = angle_table(catalog);
  const DataMatrix ideal = ideal_matrix(catalog, table, 0.94);

  {  // dataset sampling across many seeds
    const int redraws = 200;
    auto run = [&](int j) {
      Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(60, 60);
      for (int r = 0; r < redraws; ++r) {
        ExperimentConfig cfg;
        cfg.seed = 1000 + r;
        acc += sample_counts(ideal, cfg, j).freqs;
      }
      return acc;
    };
    const auto t0 = Clock::now();
    const Eigen::MatrixXd serial = run(1);
    const double ts = ms_since(t0);
    const auto t1 = Clock::now();
    const Eigen::MatrixXd parallel = run(jobs);
    const double tp = ms_since(t1);
    report("sample_counts x200", ts, tp, serial == parallel);
  }

  {  // secondary extraction on the ideal model
    GptModel gm;
    gm.d = 4;
    gm.S.resize(60, 16);
    gm.E.resize(16, 60);
    for (const auto& el : catalog.elements) {
      gm.S.row(el.index) = el.gpt_state.transpose();
      gm.E.col(el.index) = el.gpt_effect;
      gm.row_ids.push_back(el.index);
      gm.col_ids.push_back(el.index);
    }
    gm.gauge_fixed = true;
    auto run = [&](int j) {
      const SecondarySets sets = secondary_sets(gm, catalog, {}, j);
      Eigen::VectorXd res(sets.states.size() + sets.effects.size());
      int k = 0;
      for (const auto& s : sets.states) res[k++] = s.residual;
      for (const auto& s : sets.effects) res[k++] = s.residual;
      return res;
    };
    const auto t0 = Clock::now();
    const Eigen::VectorXd serial = run(1);
    const double ts = ms_since(t0);
    const auto t1 = Clock::now();
    const Eigen::VectorXd parallel = run(jobs);
    const double tp = ms_since(t1);
    report("secondary_sets (ideal)", ts, tp, serial == parallel);
  }

  {  // small dimension scan on sampled data
    ExperimentConfig cfg;
    cfg.seed = 7;
    const DataMatrix D = sample_counts(ideal, cfg, 1);
    FitOptions fo;
    fo.restarts = 2;
    fo.min_attempts = 2;
    fo.warmup_iters = 300;
    fo.gn_iters = 4;
    fo.ladder_iters = 4;
    auto run = [&](int j) {
      const DimensionScan scan = dimension_scan(D, catalog, table, {1, 4}, 4, 0.9, fo, 99, j);
      Eigen::VectorXd out(scan.fits.size() * scan.dims.size());
      int k = 0;
      for (const auto& rep : scan.fits)
        for (const auto& f : rep) out[k++] = f.chi2_train;
      return out;
    };
    const auto t0 = Clock::now();
    const Eigen::VectorXd serial = run(1);
    const double ts = ms_since(t0);
    const auto t1 = Clock::now();
    const Eigen::VectorXd parallel = run(jobs);
    const double tp = ms_since(t1);
    report("dimension_scan {1,4} x4", ts, tp, serial == parallel);
  }

  return 0;
}
