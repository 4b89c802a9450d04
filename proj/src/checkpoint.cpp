// SPDX-License-Identifier: Apache-2.0
#include "tsiars/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "tsiars/error.hpp"

namespace tsiars::checkpoint {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

fs::path sidecar_path(const fs::path& path) {
  if (fs::is_directory(path)) return path / "encoder.json";
  return path;
}

json read_sidecar(const fs::path& path) {
  const fs::path side = sidecar_path(path);
  std::ifstream in(side);
  if (!in) throw DataError("cannot open checkpoint '" + side.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("checkpoint '" + side.string() + "' is not valid JSON: " + e.what());
  }
}

template <typename Stored, typename T>
std::vector<T> read_values(std::ifstream& in, std::size_t offset, std::size_t count) {
  std::vector<Stored> raw(count);
  in.seekg(static_cast<std::streamoff>(offset * sizeof(Stored)));
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(count * sizeof(Stored)));
  if (!in) throw DataError("checkpoint binary is truncated");
  return std::vector<T>(raw.begin(), raw.end());
}

}  // namespace

template <typename T>
void save(const fs::path& dir, const encoder::EncoderParams<T>& params) {
  fs::create_directories(dir);
  const auto& c = params.config;
  json meta;
  meta["format_version"] = kFormatVersion;
  meta["precision"] = sizeof(T) == 4 ? "f32" : "f64";
  meta["binary"] = "encoder.bin";
  meta["config"] = {{"input_dim", c.input_dim},   {"hidden_dim", c.hidden_dim}, {"output_dim", c.output_dim},
                    {"num_blocks", c.num_blocks}, {"kernel_width", c.kernel_width}, {"layer_norm", c.layer_norm},
                    {"seed", c.seed}};
  json tensors = json::array();
  std::ofstream bin(dir / "encoder.bin", std::ios::binary);
  if (!bin) throw DataError("cannot write '" + (dir / "encoder.bin").string() + "'");
  std::size_t offset = 0;
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    const auto& t = params.tensors[i];
    tensors.push_back({{"name", params.names[i]}, {"shape", t.shape()}, {"offset", offset}});
    bin.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(T)));
    offset += t.size();
  }
  meta["tensors"] = tensors;
  std::ofstream side(dir / "encoder.json");
  side << meta.dump(2) << "\n";
}

template <typename T>
encoder::EncoderParams<T> load(const fs::path& path) {
  const json meta = read_sidecar(path);
  try {
    if (meta.at("format_version").get<int>() != kFormatVersion) {
      throw DataError("unsupported checkpoint format version " + meta.at("format_version").dump());
    }
    const fs::path side = sidecar_path(path);
    const fs::path bin_path = side.parent_path() / meta.at("binary").get<std::string>();
    std::ifstream bin(bin_path, std::ios::binary);
    if (!bin) throw DataError("cannot open checkpoint binary '" + bin_path.string() + "'");
    const auto& c = meta.at("config");
    encoder::EncoderParams<T> params;
    params.config.input_dim = c.at("input_dim");
    params.config.hidden_dim = c.at("hidden_dim");
    params.config.output_dim = c.at("output_dim");
    params.config.num_blocks = c.at("num_blocks");
    params.config.kernel_width = c.at("kernel_width");
    params.config.layer_norm = c.at("layer_norm");
    params.config.seed = c.at("seed");
    const bool f32 = meta.at("precision").get<std::string>() == "f32";
    for (const auto& entry : meta.at("tensors")) {
      const numerics::Shape shape = entry.at("shape").get<numerics::Shape>();
      const std::size_t offset = entry.at("offset"), count = numerics::element_count(shape);
      auto values = f32 ? read_values<float, T>(bin, offset, count) : read_values<double, T>(bin, offset, count);
      params.names.push_back(entry.at("name"));
      params.tensors.emplace_back(shape, std::move(values));
    }
    if (params.tensors.size() != params.config.num_blocks + 4) {
      throw DataError("checkpoint tensor count does not match its encoder config");
    }
    return params;
  } catch (const json::exception& e) {
    throw DataError("malformed checkpoint sidecar: " + std::string(e.what()));
  }
}

std::string stored_precision(const fs::path& path) { return read_sidecar(path).at("precision").get<std::string>(); }

template void save(const fs::path&, const encoder::EncoderParams<float>&);
template void save(const fs::path&, const encoder::EncoderParams<double>&);
template encoder::EncoderParams<float> load(const fs::path&);
template encoder::EncoderParams<double> load(const fs::path&);

}  // namespace tsiars::checkpoint
