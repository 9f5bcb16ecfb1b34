#pragma once

#include <string>

#include <json.hpp>

#include "flowlab/io.hpp"
#include "flowlab/optim.hpp"

// NBCK1 checkpoint: magic `NBCK1`, u32 byte length of a JSON metadata blob,
// the JSON itself ({"params":[{"name","shape"}...], "config":{...}}), then
// the f32 little-endian parameter data concatenated in metadata order.

namespace flowlab {

inline void save_checkpoint(const std::string& path, const ParamStore& store,
                            const nlohmann::ordered_json& config) {
  nlohmann::ordered_json meta;
  meta["params"] = nlohmann::ordered_json::array();
  for (const auto& p : store.all()) {
    nlohmann::ordered_json pj;
    pj["name"] = p.name;
    pj["shape"] = p.value.shape;
    meta["params"].push_back(pj);
  }
  meta["config"] = config;
  std::string meta_str = meta.dump();

  auto os = io::open_write(path);
  io::put_magic(os, "NBCK1");
  io::put_u32(os, static_cast<uint32_t>(meta_str.size()));
  os.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));
  for (const auto& p : store.all()) io::put_f32_array(os, p.value.data.data(), p.value.data.size());
  if (!os) fail("FileWrite", "short write to ", path);
}

struct LoadedCheckpoint {
  ParamStore store;
  nlohmann::ordered_json config;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  auto is = io::open_read(path);
  io::expect_magic(is, "NBCK1", path);
  uint32_t meta_len = io::get_u32(is);
  std::string meta_str(meta_len, '\0');
  is.read(meta_str.data(), meta_len);
  if (!is) fail("FileRead", path, ": truncated metadata");

  nlohmann::ordered_json meta;
  try {
    meta = nlohmann::ordered_json::parse(meta_str);
  } catch (const nlohmann::json::exception& e) {
    fail("BadCheckpoint", path, ": metadata is not valid JSON (", e.what(), ")");
  }

  LoadedCheckpoint out;
  for (const auto& pj : meta.at("params")) {
    std::vector<int64_t> shape = pj.at("shape").get<std::vector<int64_t>>();
    Tensor t = Tensor::zeros(shape);
    io::get_f32_array(is, t.data.data(), t.data.size());
    if (!is) fail("FileRead", path, ": truncated parameter data for ", pj.at("name").get<std::string>());
    out.store.add(pj.at("name").get<std::string>(), std::move(t));
  }
  if (meta.contains("config")) out.config = meta["config"];
  return out;
}

}  // namespace flowlab
