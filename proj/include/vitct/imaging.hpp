#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "vitct/tensor.hpp"

namespace vitct {

// Byte: intensities in [0, 255] as decoded. Unit: intensities in [0, 1].
enum class PixelScale { Byte, Unit };

// Row-major, channel-interleaved raster (RGB order for 3 channels).
struct SliceImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;
  PixelScale scale = PixelScale::Byte;
  std::vector<float> pixels;

  SliceImage() = default;
  SliceImage(std::size_t w, std::size_t h, std::size_t c,
             PixelScale s = PixelScale::Byte, float fill = 0.0f);

  float& at(std::size_t y, std::size_t x, std::size_t c = 0) {
    return pixels[(y * width + x) * channels + c];
  }
  float at(std::size_t y, std::size_t x, std::size_t c = 0) const {
    return pixels[(y * width + x) * channels + c];
  }

  friend bool operator==(const SliceImage&, const SliceImage&) = default;
};

// True for .png/.jpg/.jpeg/.bmp (case-insensitive).
bool is_supported_image(const std::filesystem::path& path);

// Decodes a PNG, JPEG or BMP file. Grayscale stays single-channel; colour
// images come back as RGB with any alpha dropped. 16-bit inputs are rescaled
// to the byte range. Throws FormatError for other extensions and DecodeError
// when the file cannot be read or decoded.
SliceImage load_slice(const std::filesystem::path& path);

// Writes an 8-bit PNG/BMP/JPEG (by extension). Values are rounded and
// clamped to the byte range; Unit-scale images are scaled by 255 first.
void save_slice(const SliceImage& image, const std::filesystem::path& path);

// Bilinear resampling with half-pixel centres: output pixel x samples source
// coordinate (x + 0.5) * in / out - 0.5, clamped to the valid range.
SliceImage resize_bilinear(const SliceImage& image, std::size_t out_width,
                           std::size_t out_height);
inline SliceImage resize_bilinear(const SliceImage& image, std::size_t target) {
  return resize_bilinear(image, target, target);
}

struct Normalization {
  // ImageNet statistics, the convention of ImageNet-pretrained ViT weights.
  std::array<float, 3> mean{0.485f, 0.456f, 0.406f};
  std::array<float, 3> stddev{0.229f, 0.224f, 0.225f};

  void validate() const;
};

// 3 x H x W float tensor: single-channel images are replicated, intensities
// mapped to [0, 1], then (x - mean[c]) / stddev[c].
Tensor<float> to_model_tensor(const SliceImage& image, const Normalization& norm);

// Inverse of to_model_tensor for 3-channel output; returns a Unit-scale image.
SliceImage from_model_tensor(const Tensor<float>& tensor,
                             const Normalization& norm);

struct PreprocessConfig {
  std::size_t size = 224;
  Normalization norm;
};

// load_slice -> resize_bilinear(size) -> to_model_tensor.
Tensor<float> preprocess_slice(const std::filesystem::path& path,
                               const PreprocessConfig& config);

}  // namespace vitct
