#ifndef INTRODRIVE_CHECKPOINT_HPP
#define INTRODRIVE_CHECKPOINT_HPP

// Checkpoint container ("gdv1"): an 8-byte little-endian manifest length,
// a UTF-8 JSON manifest mapping tensor name -> {shape, dtype, offset}, then
// the raw little-endian IEEE-754 payload. Tensors are laid out in name order
// so identical parameters always produce identical bytes. Values compute in
// f64; "f32" is an optional narrower storage mode.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "introdrive/hash.hpp"
#include "introdrive/layers.hpp"
#include "introdrive/tensor.hpp"

namespace introdrive {

inline constexpr const char* kCheckpointVersion = "gdv1";

struct Checkpoint {
  nlohmann::json meta;
  std::map<std::string, Tensor> tensors;
};

inline void save_checkpoint(const std::string& path, const ParamStore& params,
                            const nlohmann::json& meta, bool f32_storage = false) {
  std::map<std::string, const Tensor*> sorted;
  for (const auto& [name, t] : params.items()) sorted.emplace(name, &t);

  nlohmann::json manifest;
  manifest["version"] = kCheckpointVersion;
  manifest["meta"] = meta;
  std::uint64_t offset = 0;
  nlohmann::json tensors = nlohmann::json::object();
  for (const auto& [name, t] : sorted) {
    nlohmann::json entry;
    entry["shape"] = t->shape();
    entry["dtype"] = f32_storage ? "f32" : "f64";
    entry["offset"] = offset;
    tensors[name] = entry;
    offset += static_cast<std::uint64_t>(t->size()) * (f32_storage ? 4 : 8);
  }
  manifest["tensors"] = tensors;
  const std::string mjson = manifest.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  const std::uint64_t mlen = mjson.size();
  std::uint8_t len_le[8];
  for (int i = 0; i < 8; ++i) len_le[i] = static_cast<std::uint8_t>(mlen >> (8 * i));
  out.write(reinterpret_cast<const char*>(len_le), 8);
  out.write(mjson.data(), static_cast<std::streamsize>(mjson.size()));
  for (const auto& [name, t] : sorted) {
    if (f32_storage) {
      std::vector<float> narrow(t->size());
      for (std::int64_t i = 0; i < t->size(); ++i) narrow[i] = static_cast<float>(t->data()[i]);
      out.write(reinterpret_cast<const char*>(narrow.data()),
                static_cast<std::streamsize>(narrow.size() * 4));
    } else {
      out.write(reinterpret_cast<const char*>(t->data()),
                static_cast<std::streamsize>(t->size() * 8));
    }
  }
  if (!out) throw IoError("short write on checkpoint: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  std::uint8_t len_le[8];
  in.read(reinterpret_cast<char*>(len_le), 8);
  if (in.gcount() != 8) throw ParseError("checkpoint truncated before manifest length");
  std::uint64_t mlen = 0;
  for (int i = 0; i < 8; ++i) mlen |= static_cast<std::uint64_t>(len_le[i]) << (8 * i);
  std::string mjson(mlen, '\0');
  in.read(mjson.data(), static_cast<std::streamsize>(mlen));
  if (static_cast<std::uint64_t>(in.gcount()) != mlen)
    throw ParseError("checkpoint truncated inside manifest");

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(mjson);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint manifest is not valid JSON: ") + e.what());
  }
  if (manifest.value("version", "") != kCheckpointVersion)
    throw ParseError("unsupported checkpoint version: " + manifest.value("version", "<missing>"));

  std::vector<char> payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Checkpoint ckpt;
  ckpt.meta = manifest.value("meta", nlohmann::json::object());
  for (const auto& [name, entry] : manifest.at("tensors").items()) {
    Shape shape = entry.at("shape").get<Shape>();
    const std::string dtype = entry.at("dtype").get<std::string>();
    const std::uint64_t off = entry.at("offset").get<std::uint64_t>();
    const std::int64_t n = numel(shape);
    const std::uint64_t width = dtype == "f32" ? 4 : 8;
    if (dtype != "f32" && dtype != "f64")
      throw ParseError("tensor " + name + " has unsupported dtype " + dtype);
    if (off + static_cast<std::uint64_t>(n) * width > payload.size())
      throw ParseError("tensor " + name + " payload extends past end of file");
    std::vector<double> vals(n);
    if (dtype == "f32") {
      for (std::int64_t i = 0; i < n; ++i) {
        float f;
        std::memcpy(&f, payload.data() + off + i * 4, 4);
        vals[i] = static_cast<double>(f);
      }
    } else {
      std::memcpy(vals.data(), payload.data() + off, static_cast<std::size_t>(n) * 8);
    }
    ckpt.tensors.emplace(name, Tensor::from(std::move(shape), std::move(vals)));
  }
  return ckpt;
}

/// Restore a checkpoint into an already-constructed model; name and shape
/// sets must match exactly.
inline void load_into(ParamStore& params, const Checkpoint& ckpt) {
  if (ckpt.tensors.size() != params.count())
    throw ParseError("checkpoint has " + std::to_string(ckpt.tensors.size()) +
                     " tensors, model expects " + std::to_string(params.count()));
  for (auto& [name, t] : params.items()) {
    auto it = ckpt.tensors.find(name);
    if (it == ckpt.tensors.end()) throw ParseError("checkpoint is missing tensor " + name);
    if (it->second.shape() != t.shape())
      throw ParseError("tensor " + name + " shape " + shape_str(it->second.shape()) +
                       " does not match model shape " + shape_str(t.shape()));
    std::memcpy(t.mutable_data(), it->second.data(), static_cast<std::size_t>(t.size()) * 8);
  }
}

/// Hash of the parameter values as stored (used for freeze verification).
inline std::string params_hash(const ParamStore& params) {
  std::map<std::string, const Tensor*> sorted;
  for (const auto& [name, t] : params.items()) sorted.emplace(name, &t);
  Sha256 h;
  for (const auto& [name, t] : sorted) {
    h.update(name.data(), name.size());
    h.update(t->data(), static_cast<std::size_t>(t->size()) * 8);
  }
  return to_hex(h.digest());
}

}  // namespace introdrive

#endif
