#pragma once

#include <cstddef>
#include <optional>
#include <string>

#include "ordgrid/grid.hpp"
#include "ordgrid/tensor.hpp"

namespace ordgrid {

/// One training example: image (C x H x W, values in [0,1]), ordinal level,
/// and the masking label once grid dropout has been applied.
struct Sample {
  Tensor image;
  std::size_t label = 0;
  std::optional<MaskLabel> mask_label;
  std::string id;
};

}  // namespace ordgrid
