#include "ordgrid/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ordgrid/rng.hpp"

namespace ordgrid {

void SynthSpec::validate() const {
  if (num_classes < 2) throw std::invalid_argument("synth: num_classes must be at least 2");
  if (image_size < 2) throw std::invalid_argument("synth: image_size too small");
  if (noise_sigma < 0.0 || center_jitter < 0.0 || base_radius <= 0.0 || radius_step < 0.0)
    throw std::invalid_argument("synth: radii, noise and jitter must be non-negative");
  const double max_extent = radius(num_classes - 1) + center_jitter;
  if (max_extent >= static_cast<double>(image_size) / 2.0)
    throw std::invalid_argument("synth: largest disk plus jitter does not fit inside the image");
}

std::vector<Sample> generate(const SynthSpec& spec, std::size_t count_per_class) {
  spec.validate();
  if (count_per_class == 0) throw std::invalid_argument("synth: count_per_class must be at least 1");
  const std::size_t n = spec.image_size;
  std::vector<Sample> out;
  out.reserve(spec.num_classes * count_per_class);
  for (std::size_t level = 0; level < spec.num_classes; ++level) {
    const double r = spec.radius(level);
    for (std::size_t i = 0; i < count_per_class; ++i) {
      Rng rng = derive_stream(spec.seed, Stream::synth, level, i);
      std::uniform_real_distribution<double> jitter(-spec.center_jitter, spec.center_jitter);
      const double cy = static_cast<double>(n) / 2.0 + (spec.center_jitter > 0 ? jitter(rng) : 0.0);
      const double cx = static_cast<double>(n) / 2.0 + (spec.center_jitter > 0 ? jitter(rng) : 0.0);
      std::normal_distribution<double> noise(0.0, spec.noise_sigma);
      Tensor img(Shape{1, n, n}, 0.0);
      for (std::size_t y = 0; y < n; ++y) {
        for (std::size_t x = 0; x < n; ++x) {
          const double dy = static_cast<double>(y) + 0.5 - cy;
          const double dx = static_cast<double>(x) + 0.5 - cx;
          double v = dy * dy + dx * dx <= r * r ? 1.0 : 0.0;
          if (spec.noise_sigma > 0.0) v += noise(rng);
          img.at(0, y, x) = std::clamp(v, 0.0, 1.0);
        }
      }
      char id[32];
      std::snprintf(id, sizeof id, "l%zu_%05zu", level, i);
      out.push_back(Sample{std::move(img), level, std::nullopt, id});
    }
  }
  return out;
}

std::vector<std::vector<std::size_t>> kfold(std::span<const std::size_t> labels, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("kfold: k must be at least 2");
  if (labels.size() < k)
    throw std::invalid_argument("kfold: " + std::to_string(labels.size()) + " items cannot fill " +
                                std::to_string(k) + " folds");
  std::map<std::size_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);

  std::vector<std::vector<std::size_t>> folds(k);
  std::size_t offset = 0;  // rotates so small classes do not pile onto fold 0
  for (auto& [label, members] : by_class) {
    Rng rng = derive_stream(seed, Stream::folds, label, 0);
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t j = 0; j < members.size(); ++j) folds[(offset + j) % k].push_back(members[j]);
    offset = (offset + members.size()) % k;
  }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

std::vector<std::vector<std::size_t>> kfold(const std::vector<Sample>& samples, std::size_t k, std::uint64_t seed) {
  std::vector<std::size_t> labels(samples.size());
  std::transform(samples.begin(), samples.end(), labels.begin(), [](const Sample& s) { return s.label; });
  return kfold(labels, k, seed);
}

std::vector<std::size_t> train_indices(const std::vector<std::vector<std::size_t>>& folds, std::size_t test_fold) {
  if (test_fold >= folds.size()) throw std::out_of_range("test fold index out of range");
  std::vector<std::size_t> out;
  for (std::size_t f = 0; f < folds.size(); ++f)
    if (f != test_fold) out.insert(out.end(), folds[f].begin(), folds[f].end());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Sample> gather(const std::vector<Sample>& samples, std::span<const std::size_t> indices) {
  std::vector<Sample> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(samples.at(i));
  return out;
}

// --- PGM ------------------------------------------------------------------

std::string write_pgm(const Tensor& image) {
  require_rank(image, 3, "write_pgm image");
  if (image.dim(0) != 1) throw ShapeError("write_pgm: expected a single-channel image");
  const std::size_t h = image.dim(1), w = image.dim(2);
  std::string out = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  out.reserve(out.size() + h * w);
  for (double v : image.data()) {
    const double q = std::round(255.0 * std::clamp(v, 0.0, 1.0));
    out.push_back(static_cast<char>(static_cast<unsigned char>(q)));
  }
  return out;
}

Tensor read_pgm(const std::string& bytes) {
  using K = PgmError::Kind;
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_uint = [&](const char* what) {
    skip_space();
    const std::size_t start = pos;
    std::size_t v = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      v = v * 10 + static_cast<std::size_t>(bytes[pos] - '0');
      if (v > (1u << 24)) throw PgmError(K::malformed_header, std::string("PGM ") + what + " too large");
      ++pos;
    }
    if (pos == start) throw PgmError(K::malformed_header, std::string("PGM header: expected ") + what);
    return v;
  };

  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw PgmError(K::malformed_header, "not a binary PGM (P5)");
  pos = 2;
  const std::size_t w = read_uint("width");
  const std::size_t h = read_uint("height");
  const std::size_t maxval = read_uint("maxval");
  if (w == 0 || h == 0) throw PgmError(K::malformed_header, "PGM dimensions must be positive");
  if (maxval != 255) throw PgmError(K::unsupported_maxval, "PGM maxval " + std::to_string(maxval) + " is not 255");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
    throw PgmError(K::malformed_header, "PGM header must end with a single whitespace byte");
  ++pos;
  if (bytes.size() - pos < w * h)
    throw PgmError(K::truncated_payload, "PGM payload has " + std::to_string(bytes.size() - pos) + " bytes, expected " +
                                             std::to_string(w * h));
  Tensor img(Shape{1, h, w});
  for (std::size_t i = 0; i < w * h; ++i) img[i] = static_cast<unsigned char>(bytes[pos + i]) / 255.0;
  return img;
}

void write_pgm_file(const std::filesystem::path& path, const Tensor& image) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  const auto bytes = write_pgm(image);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

Tensor read_pgm_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return read_pgm(ss.str());
}

// --- dataset directory ------------------------------------------------------

std::string manifest_line(const ManifestEntry& e) {
  nlohmann::ordered_json j;
  j["id"] = e.id;
  j["path"] = e.path;
  j["label"] = e.label;
  return j.dump();
}

ManifestEntry parse_manifest_line(const std::string& line) {
  const auto j = nlohmann::json::parse(line);
  return ManifestEntry{j.at("id").get<std::string>(), j.at("path").get<std::string>(), j.at("label").get<std::size_t>()};
}

void write_dataset(const std::filesystem::path& dir, const std::vector<Sample>& samples) {
  std::filesystem::create_directories(dir / "images");
  std::ofstream manifest(dir / "manifest.jsonl", std::ios::trunc);
  if (!manifest) throw std::runtime_error("cannot write " + (dir / "manifest.jsonl").string());
  for (const auto& s : samples) {
    const std::string rel = "images/" + s.id + ".pgm";
    write_pgm_file(dir / rel, s.image);
    manifest << manifest_line({s.id, rel, s.label}) << '\n';
  }
  if (!manifest) throw std::runtime_error("failed writing manifest");
}

std::vector<Sample> read_dataset(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.jsonl");
  if (!manifest) throw std::runtime_error("cannot read " + (dir / "manifest.jsonl").string());
  std::vector<Sample> out;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    const auto e = parse_manifest_line(line);
    out.push_back(Sample{read_pgm_file(dir / e.path), e.label, std::nullopt, e.id});
  }
  return out;
}

}  // namespace ordgrid
