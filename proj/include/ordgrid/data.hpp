#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ordgrid/sample.hpp"

namespace ordgrid {

/// Synthetic ordinal task: level l is a filled disk of radius
/// base_radius + radius_step * l on a dark background, plus clamped noise.
struct SynthSpec {
  std::size_t num_classes = 8;
  std::size_t image_size = 48;
  double base_radius = 4.0;
  double radius_step = 2.0;
  double noise_sigma = 0.05;
  double center_jitter = 3.0;
  std::uint64_t seed = 0;

  double radius(std::size_t level) const { return base_radius + radius_step * static_cast<double>(level); }
  void validate() const;
};

/// `count_per_class` samples per level, ordered by level then index.
std::vector<Sample> generate(const SynthSpec& spec, std::size_t count_per_class);

/// Stratified k-fold split over sample indices. Per-class fold sizes differ by
/// at most one and the folds partition [0, labels.size()).
std::vector<std::vector<std::size_t>> kfold(std::span<const std::size_t> labels, std::size_t k, std::uint64_t seed);
std::vector<std::vector<std::size_t>> kfold(const std::vector<Sample>& samples, std::size_t k, std::uint64_t seed);

/// Indices of every fold except `test_fold`, in ascending order.
std::vector<std::size_t> train_indices(const std::vector<std::vector<std::size_t>>& folds, std::size_t test_fold);

std::vector<Sample> gather(const std::vector<Sample>& samples, std::span<const std::size_t> indices);

// --- PGM ------------------------------------------------------------------

class PgmError : public std::runtime_error {
 public:
  enum class Kind { malformed_header, truncated_payload, unsupported_maxval };
  PgmError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Binary P5 with maxval 255; byte = round(255 * v) after clamping to [0, 1].
std::string write_pgm(const Tensor& image);
Tensor read_pgm(const std::string& bytes);

void write_pgm_file(const std::filesystem::path& path, const Tensor& image);
Tensor read_pgm_file(const std::filesystem::path& path);

// --- dataset directory ------------------------------------------------------

struct ManifestEntry {
  std::string id;
  std::string path;  // relative to the dataset directory
  std::size_t label = 0;
};

std::string manifest_line(const ManifestEntry& entry);
ManifestEntry parse_manifest_line(const std::string& line);

/// Writes images/<id>.pgm and manifest.jsonl under `dir`.
void write_dataset(const std::filesystem::path& dir, const std::vector<Sample>& samples);
std::vector<Sample> read_dataset(const std::filesystem::path& dir);

}  // namespace ordgrid
