#pragma once

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "awb/models.hpp"

namespace awb {

// Checkpoint layout:
//   8 bytes  magic "SDEAWB01"
//   4 bytes  little-endian header length L
//   L bytes  UTF-8 JSON header: model metadata + per-tensor
//            {name, shape, dtype, offset} in payload order
//   payload  raw little-endian IEEE-754 values, tensors back to back
//
// Round trips are bit-exact for matching dtype.

namespace detail {

template <class T>
const char* dtype_name();
template <>
inline const char* dtype_name<float>() { return "f32"; }
template <>
inline const char* dtype_name<double>() { return "f64"; }

inline void put_u32_le(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32_le(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

inline nlohmann::json model_meta(const ModelConfig& cfg) {
  nlohmann::json meta;
  meta["kind"] = to_string(cfg.kind);
  meta["backbone"] = cfg.backbone_scale;
  meta["hist_bins"] = cfg.hist.bins_per_axis;
  meta["spp_strides"] = cfg.hist.spp_strides;
  meta["hist_channels"] = cfg.hist.out_channels;
  meta["seed"] = cfg.seed;
  return meta;
}

inline ModelConfig model_meta_parse(const nlohmann::json& meta) {
  ModelConfig cfg;
  cfg.kind = model_kind_from_string(meta.at("kind").get<std::string>());
  cfg.backbone_scale = meta.at("backbone").get<std::string>();
  cfg.hist.bins_per_axis = meta.at("hist_bins").get<int>();
  cfg.hist.spp_strides = meta.at("spp_strides").get<std::vector<int>>();
  cfg.hist.out_channels = meta.at("hist_channels").get<int>();
  cfg.seed = meta.at("seed").get<std::uint64_t>();
  return cfg;
}

}  // namespace detail

template <class T>
void save_checkpoint(const std::string& path, const ModelGraph<T>& g) {
  nlohmann::json header;
  header["model"] = detail::model_meta(g.config);
  nlohmann::json tensors = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& p : g.store.list()) {
    nlohmann::json t;
    t["name"] = p->name;
    t["shape"] = p->value->shape();
    t["dtype"] = detail::dtype_name<T>();
    t["offset"] = offset;
    tensors.push_back(t);
    offset += p->value->size() * sizeof(T);
  }
  header["tensors"] = tensors;
  const std::string hs = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Data, "cannot write checkpoint '" + path + "'");
  out.write("SDEAWB01", 8);
  detail::put_u32_le(out, static_cast<std::uint32_t>(hs.size()));
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& p : g.store.list())
    out.write(reinterpret_cast<const char*>(p->value->data()),
              static_cast<std::streamsize>(p->value->size() * sizeof(T)));
  if (!out) throw Error(ErrorKind::Data, "failed writing checkpoint '" + path + "'");
}

inline nlohmann::json read_checkpoint_header(std::ifstream& in, const std::string& path) {
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, "SDEAWB01", 8) != 0)
    throw Error(ErrorKind::Data, "'" + path + "' is not a SDEAWB01 checkpoint");
  const std::uint32_t len = detail::get_u32_le(in);
  std::string hs(len, '\0');
  in.read(hs.data(), len);
  if (!in) throw Error(ErrorKind::Data, "truncated checkpoint header in '" + path + "'");
  try {
    return nlohmann::json::parse(hs);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Data, "bad checkpoint header in '" + path + "': " + e.what());
  }
}

inline ModelConfig checkpoint_model_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Data, "cannot open checkpoint '" + path + "'");
  return detail::model_meta_parse(read_checkpoint_header(in, path).at("model"));
}

// Rebuilds the graph from the stored metadata and overwrites every parameter
// from the payload. Stored f32/f64 values are converted when T differs.
template <class T>
ModelGraph<T> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Data, "cannot open checkpoint '" + path + "'");
  const nlohmann::json header = read_checkpoint_header(in, path);
  ModelGraph<T> g = build_model<T>(detail::model_meta_parse(header.at("model")));

  const std::streampos payload_start = in.tellg();
  for (const auto& t : header.at("tensors")) {
    const std::string name = t.at("name").get<std::string>();
    const auto shape = t.at("shape").get<std::vector<int>>();
    const std::string dtype = t.at("dtype").get<std::string>();
    const std::uint64_t offset = t.at("offset").get<std::uint64_t>();
    ParamPtr<T> p = g.store.find(name);
    if (p->value->shape() != shape)
      throw Error(ErrorKind::Data, "checkpoint tensor '" + name + "' has shape " +
                                       shape_str(shape) + ", model expects " +
                                       shape_str(p->value->shape()));
    in.seekg(payload_start + static_cast<std::streamoff>(offset));
    const std::size_t n = p->value->size();
    if (dtype == detail::dtype_name<T>()) {
      in.read(reinterpret_cast<char*>(p->value->data()),
              static_cast<std::streamsize>(n * sizeof(T)));
    } else if (dtype == "f32") {
      std::vector<float> buf(n);
      in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * sizeof(float)));
      for (std::size_t i = 0; i < n; ++i) (*p->value)[i] = static_cast<T>(buf[i]);
    } else if (dtype == "f64") {
      std::vector<double> buf(n);
      in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * sizeof(double)));
      for (std::size_t i = 0; i < n; ++i) (*p->value)[i] = static_cast<T>(buf[i]);
    } else {
      throw Error(ErrorKind::Data, "checkpoint tensor '" + name + "' has unknown dtype '" + dtype + "'");
    }
    if (!in) throw Error(ErrorKind::Data, "truncated checkpoint payload in '" + path + "'");
  }
  return g;
}

}  // namespace awb
