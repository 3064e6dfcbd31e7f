#include "ordgrid/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ordgrid {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

GradcheckResult gradcheck(const std::function<ad::Var()>& build, ad::Parameter& param, std::size_t probes,
                          double step, Rng& rng) {
  if (step <= 0.0) throw std::invalid_argument("gradcheck: step must be positive");
  auto& node = *param.node;
  if (!node.is_leaf()) throw ad::GraphError("gradcheck: parameter must be a leaf");

  const Tensor saved_grad = node.has_grad() ? node.grad() : Tensor();
  node.zero_grad();
  ad::Var out = build();
  if (out->value().size() != 1)
    throw ShapeError("gradcheck: output must be scalar, got " + shape_str(out->value().shape()));
  ad::backward(out);
  const Tensor analytic = node.grad();
  if (saved_grad.empty())
    node.zero_grad();
  else
    node.grad() = saved_grad;

  const std::size_t n = node.value().size();
  std::vector<std::size_t> coords(n);
  std::iota(coords.begin(), coords.end(), 0);
  const std::size_t count = std::min(probes, n);
  // Partial Fisher-Yates: the first `count` entries are a uniform sample.
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(coords[i], coords[pick(rng)]);
  }

  GradcheckResult result;
  result.probes = count;
  auto& values = node.mutable_value();
  for (std::size_t p = 0; p < count; ++p) {
    const std::size_t i = coords[p];
    const double original = values[i];
    values[i] = original + step;
    const double plus = build()->value()[0];
    values[i] = original - step;
    const double minus = build()->value()[0];
    values[i] = original;
    const double numeric = (plus - minus) / (2.0 * step);
    result.max_rel_error = std::max(result.max_rel_error, relative_error(analytic[i], numeric));
  }
  return result;
}

}  // namespace ordgrid
