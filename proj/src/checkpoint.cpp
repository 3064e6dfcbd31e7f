#include "ordgrid/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace ordgrid {

namespace {

constexpr std::string_view kMagic = "ORDG1\n";

void put_f64_le(std::string& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double get_f64_le(const char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

std::string encode_checkpoint(const std::map<std::string, Tensor>& tensors) {
  std::string out(kMagic);
  for (const auto& [name, t] : tensors) {  // std::map iterates in lexicographic order
    if (name.empty() || name.find('\n') != std::string::npos)
      throw CheckpointError("invalid parameter name '" + name + "'");
    out += name;
    out += '\n';
    for (std::size_t i = 0; i < t.rank(); ++i) {
      if (i) out += ' ';
      out += std::to_string(t.dim(i));
    }
    out += '\n';
    for (double v : t.data()) put_f64_le(out, v);
  }
  return out;
}

std::map<std::string, Tensor> decode_checkpoint(const std::string& bytes) {
  if (bytes.compare(0, kMagic.size(), kMagic) != 0) throw CheckpointError("missing ORDG1 magic");
  std::map<std::string, Tensor> out;
  std::size_t pos = kMagic.size();
  auto read_line = [&](const char* what) {
    const auto nl = bytes.find('\n', pos);
    if (nl == std::string::npos) throw CheckpointError(std::string("truncated checkpoint while reading ") + what);
    std::string line = bytes.substr(pos, nl - pos);
    pos = nl + 1;
    return line;
  };
  while (pos < bytes.size()) {
    std::string name = read_line("name");
    std::istringstream shape_line(read_line("shape"));
    Shape shape;
    std::size_t e;
    while (shape_line >> e) shape.push_back(e);
    if (shape.empty()) throw CheckpointError("parameter " + name + " has no shape");
    const std::size_t n = shape_numel(shape);
    if (bytes.size() - pos < n * 8) throw CheckpointError("truncated data for parameter " + name);
    std::vector<double> data(n);
    for (std::size_t i = 0; i < n; ++i) data[i] = get_f64_le(bytes.data() + pos + 8 * i);
    pos += n * 8;
    if (!out.emplace(name, Tensor(std::move(shape), std::move(data))).second)
      throw CheckpointError("duplicate parameter " + name);
  }
  return out;
}

void save_parameters(const std::filesystem::path& path, const std::vector<ad::Parameter>& params) {
  std::map<std::string, Tensor> tensors;
  for (const auto& p : params) tensors.emplace(p.name, p.node->value());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError("cannot open " + path.string() + " for writing");
  const auto bytes = encode_checkpoint(tensors);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw CheckpointError("failed writing " + path.string());
}

void load_parameters(const std::filesystem::path& path, std::vector<ad::Parameter>& params) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  const auto tensors = decode_checkpoint(ss.str());
  for (auto& p : params) {
    auto it = tensors.find(p.name);
    if (it == tensors.end()) throw CheckpointError("checkpoint lacks parameter " + p.name);
    if (it->second.shape() != p.node->value().shape())
      throw CheckpointError("shape mismatch for " + p.name + ": " + shape_str(it->second.shape()) + " vs " +
                            shape_str(p.node->value().shape()));
    p.node->mutable_value() = it->second;
  }
}

}  // namespace ordgrid
