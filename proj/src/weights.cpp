#include "vitct/weights.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <map>

#include "json.hpp"

#include "vitct/fileio.hpp"

namespace vitct {

using nlohmann::json;

namespace {

constexpr const char* kFormatName = "vitct.weights";
constexpr int kFormatVersion = 1;
constexpr std::size_t kHeaderBytes = 8;

std::uint32_t crc32_of(const std::uint8_t* data, std::size_t size) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks for blobs over 4 GiB.
  while (size > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
    crc = ::crc32(crc, data, chunk);
    data += chunk;
    size -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

void put_f32(std::vector<std::uint8_t>& out, float f) {
  const auto bits = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

float get_f32(const std::uint8_t* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<float>(bits);
}

json config_to_json(const VitConfig& c) {
  return json{{"image_size", c.image_size}, {"patch_size", c.patch_size},
              {"in_channels", c.in_channels}, {"embed_dim", c.embed_dim},
              {"depth", c.depth}, {"num_heads", c.num_heads},
              {"mlp_ratio", c.mlp_ratio}, {"num_classes", c.num_classes}};
}

VitConfig config_from_json(const json& j) {
  VitConfig c;
  c.image_size = j.at("image_size").get<std::size_t>();
  c.patch_size = j.at("patch_size").get<std::size_t>();
  c.in_channels = j.at("in_channels").get<std::size_t>();
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.depth = j.at("depth").get<std::size_t>();
  c.num_heads = j.at("num_heads").get<std::size_t>();
  c.mlp_ratio = j.at("mlp_ratio").get<std::size_t>();
  c.num_classes = j.at("num_classes").get<std::size_t>();
  return c;
}

}  // namespace

std::vector<std::uint8_t> encode_weights(const VitParams<float>& params) {
  std::vector<std::uint8_t> blob;
  blob.reserve(params.count() * 4);
  json tensors = json::object();
  for (const auto& p : params.named()) {
    const auto& t = p.var.value();
    const std::size_t offset = blob.size();
    for (float v : t.data()) put_f32(blob, v);
    tensors[p.name] = json{{"shape", t.shape()},
                           {"dtype", "float32"},
                           {"offset", offset},
                           {"length", blob.size() - offset}};
  }
  json manifest{{"format", kFormatName},
                {"version", kFormatVersion},
                {"config", config_to_json(params.config)},
                {"blob_bytes", blob.size()},
                {"blob_crc32", crc32_of(blob.data(), blob.size())},
                {"tensors", std::move(tensors)}};
  const std::string text = manifest.dump();

  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + text.size() + blob.size());
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), blob.begin(), blob.end());
  return out;
}

VitParams<float> decode_weights(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kHeaderBytes) {
    throw WeightsError("weights file truncated: " + std::to_string(bytes.size()) +
                       " bytes, no manifest header");
  }
  const std::uint64_t manifest_len = get_u64(bytes.data());
  if (manifest_len > bytes.size() - kHeaderBytes) {
    throw WeightsError("weights file truncated: manifest declares " +
                       std::to_string(manifest_len) + " bytes, file has " +
                       std::to_string(bytes.size() - kHeaderBytes));
  }
  json manifest;
  try {
    manifest = json::parse(bytes.begin() + kHeaderBytes,
                           bytes.begin() + kHeaderBytes + manifest_len);
  } catch (const json::exception& e) {
    throw WeightsError(std::string("weights manifest is not valid JSON: ") +
                       e.what());
  }

  const std::uint8_t* blob = bytes.data() + kHeaderBytes + manifest_len;
  const std::size_t blob_size = bytes.size() - kHeaderBytes - manifest_len;
  VitConfig config;
  std::map<std::string, json> entries;
  try {
    if (manifest.at("format") != kFormatName ||
        manifest.at("version") != kFormatVersion) {
      throw WeightsError("unsupported weights format " +
                         manifest.at("format").dump() + " v" +
                         manifest.at("version").dump());
    }
    const auto declared = manifest.at("blob_bytes").get<std::uint64_t>();
    if (declared != blob_size) {
      throw ChecksumError("blob section is " + std::to_string(blob_size) +
                          " bytes, manifest declares " + std::to_string(declared));
    }
    const auto crc = manifest.at("blob_crc32").get<std::uint32_t>();
    if (crc != crc32_of(blob, blob_size)) {
      throw ChecksumError("blob CRC32 mismatch");
    }
    config = config_from_json(manifest.at("config"));
    for (const auto& [name, entry] : manifest.at("tensors").items())
      entries[name] = entry;
  } catch (const json::exception& e) {
    throw WeightsError(std::string("malformed weights manifest: ") + e.what());
  }
  try {
    config.validate();
  } catch (const ConfigError& e) {
    throw WeightsError(std::string("weights config invalid: ") + e.what());
  }

  std::vector<Tensor<float>> tensors;
  for (const auto& [name, shape] : param_shapes(config)) {
    auto it = entries.find(name);
    if (it == entries.end()) throw MissingTensorError(name);
    const json& e = it->second;
    Shape declared;
    std::uint64_t offset = 0, length = 0;
    std::string dtype;
    try {
      declared = e.at("shape").get<Shape>();
      offset = e.at("offset").get<std::uint64_t>();
      length = e.at("length").get<std::uint64_t>();
      dtype = e.at("dtype").get<std::string>();
    } catch (const json::exception& ex) {
      throw WeightsError("malformed manifest entry for '" + name + "': " +
                         ex.what());
    }
    if (dtype != "float32") {
      throw WeightsError("tensor '" + name + "' has dtype " + dtype +
                         ", only float32 is supported");
    }
    if (declared != shape) throw ShapeMismatchError(name, declared, shape);
    if (length != shape_numel(shape) * 4 || offset > blob_size ||
        length > blob_size - offset) {
      throw WeightsError("tensor '" + name + "' byte range [" +
                         std::to_string(offset) + ", +" + std::to_string(length) +
                         ") is inconsistent with its shape or the blob size");
    }
    std::vector<float> data(shape_numel(shape));
    for (std::size_t i = 0; i < data.size(); ++i)
      data[i] = get_f32(blob + offset + 4 * i);
    tensors.emplace_back(shape, std::move(data));
    entries.erase(it);
  }
  if (!entries.empty()) {
    throw WeightsError("weights file has unexpected tensor '" +
                       entries.begin()->first + "'");
  }
  return assemble_params<float>(config, std::move(tensors));
}

void save_weights(const VitParams<float>& params,
                  const std::filesystem::path& path) {
  const auto bytes = encode_weights(params);
  write_file_atomic(path, std::string_view(
                              reinterpret_cast<const char*>(bytes.data()),
                              bytes.size()));
}

VitParams<float> load_weights(const std::filesystem::path& path) {
  return decode_weights(read_file_bytes(path));
}

}  // namespace vitct
