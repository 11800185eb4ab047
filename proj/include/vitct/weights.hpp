#pragma once

// Weight container.
//
//   bytes [0, 8)        manifest length N, unsigned little-endian
//   bytes [8, 8 + N)    UTF-8 JSON manifest
//   bytes [8 + N, end)  tensor blobs, little-endian float32, concatenated
//
// The manifest records the model config, the CRC32 and byte size of the blob
// section, and for every tensor its shape, dtype, byte offset and byte
// length relative to the start of the blob section.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vitct/error.hpp"
#include "vitct/vit.hpp"

namespace vitct {

class WeightsError : public FormatError {
 public:
  using FormatError::FormatError;
};

class MissingTensorError : public WeightsError {
 public:
  explicit MissingTensorError(std::string name)
      : WeightsError("weights file is missing tensor '" + name + "'"),
        name_(std::move(name)) {}
  const std::string& tensor_name() const { return name_; }

 private:
  std::string name_;
};

class ShapeMismatchError : public WeightsError {
 public:
  ShapeMismatchError(std::string name, const Shape& declared,
                     const Shape& expected)
      : WeightsError("tensor '" + name + "' declared with shape " +
                     shape_str(declared) + ", model expects " +
                     shape_str(expected)),
        name_(std::move(name)) {}
  const std::string& tensor_name() const { return name_; }

 private:
  std::string name_;
};

class ChecksumError : public WeightsError {
 public:
  using WeightsError::WeightsError;
};

std::vector<std::uint8_t> encode_weights(const VitParams<float>& params);
VitParams<float> decode_weights(const std::vector<std::uint8_t>& bytes);

// Writes via a temporary file and rename.
void save_weights(const VitParams<float>& params,
                  const std::filesystem::path& path);
VitParams<float> load_weights(const std::filesystem::path& path);

}  // namespace vitct
