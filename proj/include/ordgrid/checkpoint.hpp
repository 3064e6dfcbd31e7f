#pragma once

// Parameter checkpoint format:
//   "ORDG1\n"
//   per parameter, names in lexicographic order:
//     name "\n"
//     space-separated extents "\n"
//     product(extents) little-endian IEEE-754 doubles

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "ordgrid/autodiff.hpp"
#include "ordgrid/tensor.hpp"

namespace ordgrid {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string encode_checkpoint(const std::map<std::string, Tensor>& tensors);
std::map<std::string, Tensor> decode_checkpoint(const std::string& bytes);

void save_parameters(const std::filesystem::path& path, const std::vector<ad::Parameter>& params);
/// Overwrites parameter values by name; every parameter must be present with a matching shape.
void load_parameters(const std::filesystem::path& path, std::vector<ad::Parameter>& params);

}  // namespace ordgrid
