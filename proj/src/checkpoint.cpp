// Copyright 2026 The STAM Authors
// SPDX-License-Identifier: Apache-2.0

#include <bit>
#include <cstring>
#include <fstream>

#include "stam/error.hpp"
#include "stam/model.hpp"

namespace stam {
namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'S', 'T', 'A', 'M', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void write_pod(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::string& path) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw FormatError("truncated checkpoint " + path);
  return value;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const StamModel& model) {
  json header;
  header["format"] = "stam-checkpoint";
  header["config"] = to_json(model.config());
  header["arrays"] = json::array();
  for (const auto& p : model.parameters()) header["arrays"].push_back({{"name", p.name}, {"shape", p.value.shape()}});
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof(kMagic));
  write_pod(out, kCheckpointVersion);
  write_pod(out, static_cast<std::uint64_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& p : model.parameters()) {
    const auto data = p.value.data();
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size_bytes()));
  }
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

StamModel load_checkpoint(const std::filesystem::path& path) {
  const std::string name = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + name);
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw FormatError(name + " is not a STAM checkpoint");
  const auto version = read_pod<std::uint32_t>(in, name);
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) + " in " + name);
  }
  const auto header_size = read_pod<std::uint64_t>(in, name);
  std::error_code ec;
  const auto file_size = std::filesystem::file_size(path, ec);
  if (ec || header_size > file_size) throw FormatError("truncated checkpoint header in " + name);
  std::string text(header_size, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_size));
  if (!in) throw FormatError("truncated checkpoint header in " + name);

  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError("corrupt checkpoint header in " + name + ": " + e.what());
  }
  if (!header.is_object() || !header.contains("config") || !header.contains("arrays") ||
      !header.at("arrays").is_array()) {
    throw FormatError("checkpoint header in " + name + " lacks config or arrays");
  }
  StamModel model(model_config_from_json(header.at("config")));
  const auto& arrays = header.at("arrays");
  const auto& params = model.parameters();
  if (arrays.size() != params.size()) throw FormatError("checkpoint " + name + " does not match its config");
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::string stored_name;
    Shape stored_shape;
    try {
      stored_name = arrays[i].at("name").get<std::string>();
      stored_shape = arrays[i].at("shape").get<Shape>();
    } catch (const json::exception& e) {
      throw FormatError("corrupt array directory in " + name + ": " + e.what());
    }
    if (stored_name != params[i].name || stored_shape != params[i].value.shape()) {
      throw FormatError("checkpoint array '" + stored_name + "' does not match parameter '" + params[i].name + "'");
    }
    Tensor t = params[i].value;
    auto dst = t.mutable_data();
    in.read(reinterpret_cast<char*>(dst.data()), static_cast<std::streamsize>(dst.size_bytes()));
    if (!in) throw FormatError("truncated checkpoint data in " + name);
    check_finite(dst, "checkpoint");
  }
  if (in.peek() != std::ifstream::traits_type::eof()) throw FormatError("trailing bytes in checkpoint " + name);
  return model;
}

}  // namespace stam
