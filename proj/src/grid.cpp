#include "ordgrid/grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "ordgrid/sample.hpp"

namespace ordgrid {

std::size_t drop_count(std::size_t s, double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("drop ratio must lie in [0, 1]");
  const double cells = static_cast<double>(s * s);
  // Round half up; the slack absorbs representation error in p (e.g. 2/9).
  const auto k = static_cast<std::size_t>(std::floor(cells * p + 0.5 + 1e-9));
  return std::min(k, s * s);
}

std::size_t GridSpec::k() const { return drop_count(s, p); }

void GridSpec::validate() const {
  if (s == 0) throw std::invalid_argument("grid size s must be positive");
  (void)drop_count(s, p);
  if (!std::isfinite(fill_value)) throw std::invalid_argument("fill value must be finite");
}

std::size_t MaskLabel::zeros() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{0}));
}

MaskLabel mask_from_dropped(std::size_t s, std::span<const std::size_t> dropped) {
  MaskLabel m{std::vector<std::uint8_t>(s * s, 1)};
  for (auto i : dropped) {
    if (i >= m.bits.size()) throw std::out_of_range("dropped cell index " + std::to_string(i) + " out of range");
    m.bits[i] = 0;
  }
  return m;
}

GridGeometry partition(std::size_t height, std::size_t width, std::size_t s) {
  if (s == 0) throw std::invalid_argument("partition: s must be positive");
  if (height < s || width < s)
    throw std::invalid_argument("partition: image " + std::to_string(height) + "x" + std::to_string(width) +
                                " cannot hold " + std::to_string(s) + " non-empty cells per side");
  GridGeometry g;
  g.row_bounds.resize(s + 1);
  g.col_bounds.resize(s + 1);
  for (std::size_t i = 0; i <= s; ++i) {
    g.row_bounds[i] = i * height / s;
    g.col_bounds[i] = i * width / s;
  }
  return g;
}

MaskLabel sample_mask(const GridSpec& spec, Rng& rng) {
  const std::size_t n = spec.cells();
  const std::size_t k = spec.k();
  std::vector<std::size_t> cells(n);
  std::iota(cells.begin(), cells.end(), 0);
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(cells[i], cells[pick(rng)]);
  }
  return mask_from_dropped(spec.s, std::span<const std::size_t>(cells.data(), k));
}

Tensor apply_mask(const Tensor& image, const MaskLabel& mask, const GridGeometry& geom, double fill) {
  require_rank(image, 3, "apply_mask image");
  if (image.dim(1) != geom.height() || image.dim(2) != geom.width())
    throw ShapeError("apply_mask: geometry " + std::to_string(geom.height()) + "x" + std::to_string(geom.width()) +
                     " does not match image " + shape_str(image.shape()));
  const std::size_t s = geom.s();
  if (mask.size() != s * s)
    throw ShapeError("apply_mask: mask has " + std::to_string(mask.size()) + " bits, geometry has " +
                     std::to_string(s * s) + " cells");
  Tensor out = image;
  for (std::size_t cell = 0; cell < mask.size(); ++cell) {
    if (mask.bits[cell]) continue;
    const std::size_t r = cell / s, c = cell % s;
    for (std::size_t ch = 0; ch < image.dim(0); ++ch)
      for (std::size_t y = geom.row_bounds[r]; y < geom.row_bounds[r + 1]; ++y)
        for (std::size_t x = geom.col_bounds[c]; x < geom.col_bounds[c + 1]; ++x) out.at(ch, y, x) = fill;
  }
  return out;
}

std::uint64_t binomial(std::uint64_t n, std::uint64_t r) {
  if (r > n) return 0;
  r = std::min(r, n - r);
  __extension__ typedef unsigned __int128 wide;
  wide acc = 1;
  for (std::uint64_t i = 1; i <= r; ++i) {
    // acc * (n - r + i) / i stays integral at every step.
    acc = acc * (n - r + i) / i;
    if (acc > std::numeric_limits<std::uint64_t>::max())
      throw MultiplicityOverflow("C(" + std::to_string(n) + ", " + std::to_string(r) + ") exceeds 64 bits");
  }
  return static_cast<std::uint64_t>(acc);
}

std::uint64_t multiplicity(std::size_t s, double p) { return binomial(s * s, drop_count(s, p)); }

Sample augment_sample(const Sample& sample, const GridSpec& spec, Rng& rng) {
  if (sample.mask_label) throw std::invalid_argument("augment_sample: sample " + sample.id + " is already masked");
  spec.validate();
  const auto geom = partition(sample.image.dim(1), sample.image.dim(2), spec.s);
  Sample out;
  out.mask_label = sample_mask(spec, rng);
  out.image = apply_mask(sample.image, *out.mask_label, geom, spec.fill_value);
  out.label = sample.label;
  out.id = sample.id;
  return out;
}

Sample augment_sample(const Sample& sample, const GridSpec& spec, std::uint64_t seed, std::uint64_t epoch,
                      std::uint64_t index) {
  Rng rng = derive_stream(seed, Stream::augment, epoch, index);
  return augment_sample(sample, spec, rng);
}

}  // namespace ordgrid
