#pragma once

// Grid dropout: partition an image into s x s cells, black out k of them and
// record which cells survived as the masking label.

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "ordgrid/rng.hpp"
#include "ordgrid/tensor.hpp"

namespace ordgrid {

struct Sample;

struct GridSpec {
  std::size_t s = 5;
  double p = 0.25;  // fraction of cells dropped
  double fill_value = 0.0;

  std::size_t cells() const { return s * s; }
  /// Drop count, round-half-up of s*s*p.
  std::size_t k() const;
  void validate() const;
};

std::size_t drop_count(std::size_t s, double p);

/// Per-cell keep flags in row-major cell order: 1 = kept, 0 = dropped.
struct MaskLabel {
  std::vector<std::uint8_t> bits;

  std::size_t size() const { return bits.size(); }
  std::size_t zeros() const;
  friend bool operator==(const MaskLabel&, const MaskLabel&) = default;
};

MaskLabel mask_from_dropped(std::size_t s, std::span<const std::size_t> dropped);

struct GridGeometry {
  std::vector<std::size_t> row_bounds;
  std::vector<std::size_t> col_bounds;

  std::size_t s() const { return row_bounds.size() - 1; }
  std::size_t height() const { return row_bounds.back(); }
  std::size_t width() const { return col_bounds.back(); }
};

/// Cell bounds floor(i * dim / s); cells differ in size by at most one pixel.
GridGeometry partition(std::size_t height, std::size_t width, std::size_t s);

/// Uniformly random k-subset of cells via partial Fisher-Yates.
MaskLabel sample_mask(const GridSpec& spec, Rng& rng);

/// Copy of `image` (C x H x W) with every dropped cell set to `fill` in all channels.
Tensor apply_mask(const Tensor& image, const MaskLabel& mask, const GridGeometry& geom, double fill);

class MultiplicityOverflow : public std::overflow_error {
 public:
  using std::overflow_error::overflow_error;
};

/// Exact binomial C(n, r); throws MultiplicityOverflow beyond 64 bits.
std::uint64_t binomial(std::uint64_t n, std::uint64_t r);

/// Number of distinct masks per image: C(s*s, k).
std::uint64_t multiplicity(std::size_t s, double p);

/// Masked copy of `sample` with its masking label attached.
Sample augment_sample(const Sample& sample, const GridSpec& spec, Rng& rng);

/// Same as above with the stream derived from (seed, epoch, sample index).
Sample augment_sample(const Sample& sample, const GridSpec& spec, std::uint64_t seed, std::uint64_t epoch,
                      std::uint64_t index);

}  // namespace ordgrid
