// Copyright (c) 2026 The foley-synth Authors
// SPDX-License-Identifier: Apache-2.0

#include "foley/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

#include "foley/rng.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace foley {

namespace {

std::string param_file_name(const std::string& param_name) {
  std::string s = param_name;
  for (char& c : s)
    if (c == '/' || c == '\\') c = '_';
  return s + ".bin";
}

std::string shape_str(const std::vector<int>& dims) {
  std::string s = "[";
  for (size_t i = 0; i < dims.size(); ++i)
    s += (i ? "x" : "") + std::to_string(dims[i]);
  return s + "]";
}

json read_meta_json(const std::string& dir) {
  std::ifstream f(dir + "/meta.json");
  if (!f) throw std::runtime_error("checkpoint: cannot open " + dir + "/meta.json");
  json j;
  f >> j;
  return j;
}

CheckpointMeta meta_from_json(const json& j) {
  CheckpointMeta meta;
  meta.schema = j.at("schema").get<std::string>();
  meta.module = j.at("module").get<std::string>();
  meta.config_hash = j.at("config_hash").get<std::string>();
  if (j.contains("upstream"))
    for (auto& [k, v] : j.at("upstream").items())
      meta.upstream[k] = v.get<std::string>();
  if (j.contains("extra"))
    for (auto& [k, v] : j.at("extra").items()) meta.extra[k] = v.get<std::string>();
  return meta;
}

}  // namespace

void save_checkpoint(const std::string& dir, const ParamStore& store,
                     const CheckpointMeta& meta) {
  fs::create_directories(dir);
  json manifest = json::array();
  for (const Param* p : store.params()) {
    manifest.push_back({{"name", p->name}, {"shape", p->value.dims}});
    std::ofstream f(dir + "/" + param_file_name(p->name), std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot write parameter " + p->name);
    std::vector<unsigned char> bytes;
    bytes.reserve(p->value.v.size() * 4);
    for (double d : p->value.v) {
      float x = static_cast<float>(d);
      unsigned char b[4];
      std::memcpy(b, &x, 4);
      bytes.insert(bytes.end(), b, b + 4);
    }
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("checkpoint: write failed for " + p->name);
  }
  json j = {{"schema", meta.schema},
            {"module", meta.module},
            {"config_hash", meta.config_hash},
            {"upstream", meta.upstream},
            {"extra", meta.extra},
            {"manifest", manifest}};
  std::ofstream f(dir + "/meta.json");
  if (!f) throw std::runtime_error("checkpoint: cannot write meta.json in " + dir);
  f << j.dump(2) << "\n";
}

CheckpointMeta load_checkpoint(const std::string& dir, ParamStore& store) {
  json j = read_meta_json(dir);
  CheckpointMeta meta = meta_from_json(j);
  if (meta.schema != kCheckpointSchema)
    throw std::runtime_error("checkpoint: schema version mismatch in " + dir +
                             " (found '" + meta.schema + "', expected '" +
                             kCheckpointSchema + "')");
  const json& manifest = j.at("manifest");
  size_t matched = 0;
  for (const auto& entry : manifest) {
    std::string name = entry.at("name").get<std::string>();
    std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
    Param* p = store.find(name);
    if (!p)
      throw std::runtime_error("checkpoint: parameter '" + name +
                               "' not registered in model");
    if (p->value.dims != shape)
      throw std::runtime_error("checkpoint: shape mismatch for parameter '" + name +
                               "' (archive " + shape_str(shape) + ", model " +
                               p->value.shape_str() + ")");
    std::ifstream f(dir + "/" + param_file_name(name), std::ios::binary);
    if (!f)
      throw std::runtime_error("checkpoint: missing file for parameter '" + name + "'");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                     std::istreambuf_iterator<char>());
    size_t expected = static_cast<size_t>(shape_size(shape)) * 4;
    if (bytes.size() != expected)
      throw std::runtime_error("checkpoint: byte length mismatch for parameter '" +
                               name + "' (found " + std::to_string(bytes.size()) +
                               ", expected " + std::to_string(expected) + ")");
    for (size_t i = 0; i < p->value.v.size(); ++i) {
      float x;
      std::memcpy(&x, bytes.data() + 4 * i, 4);
      p->value.v[i] = static_cast<double>(x);
    }
    ++matched;
  }
  if (matched != store.params().size())
    throw std::runtime_error("checkpoint: archive in " + dir + " provides " +
                             std::to_string(matched) + " parameters, model expects " +
                             std::to_string(store.params().size()));
  return meta;
}

CheckpointMeta read_checkpoint_meta(const std::string& dir) {
  return meta_from_json(read_meta_json(dir));
}

std::string checkpoint_hash(const std::string& dir) {
  json j = read_meta_json(dir);
  uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& entry : j.at("manifest")) {
    std::string name = entry.at("name").get<std::string>();
    h = fnv1a64(name, h);
    std::ifstream f(dir + "/" + param_file_name(name), std::ios::binary);
    if (!f)
      throw std::runtime_error("checkpoint_hash: missing file for parameter '" + name +
                               "'");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                     std::istreambuf_iterator<char>());
    h = fnv1a64(bytes.data(), bytes.size(), h);
  }
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

bool checkpoint_exists(const std::string& dir) {
  return fs::exists(fs::path(dir) / "meta.json");
}

}  // namespace foley
