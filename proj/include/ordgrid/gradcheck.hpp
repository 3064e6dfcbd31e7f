#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "ordgrid/autodiff.hpp"
#include "ordgrid/rng.hpp"

namespace ordgrid {

struct GradcheckResult {
  double max_rel_error = 0.0;
  std::size_t probes = 0;
};

/// Compares the reverse-mode gradient of the scalar returned by `build` with
/// respect to `param` against central differences at up to `probes` distinct
/// random coordinates (all coordinates when the tensor is smaller).
/// Relative error uses the denominator max(|a|, |b|, 1e-8).
///
/// `build` must construct a fresh graph from the current parameter values on
/// every call. The parameter's accumulated gradient is left unchanged.
GradcheckResult gradcheck(const std::function<ad::Var()>& build, ad::Parameter& param, std::size_t probes,
                          double step, Rng& rng);

double relative_error(double analytic, double numeric);

/// One registered entry of the gradient suite.
struct GradcheckEntry {
  std::string op;
  double max_rel_error = 0.0;
  std::size_t probes = 0;
  bool passed = false;
};

struct GradcheckSuiteOptions {
  std::size_t probes = 100;
  double step = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t seed = 7;
};

/// Runs every registered op check plus the full composite network loss.
std::vector<GradcheckEntry> run_gradcheck_suite(const GradcheckSuiteOptions& options = {});

}  // namespace ordgrid
