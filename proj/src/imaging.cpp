#include "vitct/imaging.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "vitct/error.hpp"

namespace vitct {

namespace fs = std::filesystem;

SliceImage::SliceImage(std::size_t w, std::size_t h, std::size_t c,
                       PixelScale s, float fill)
    : width(w), height(h), channels(c), scale(s), pixels(w * h * c, fill) {
  if (w == 0 || h == 0) throw DimensionError("image dimensions must be >= 1");
  if (c != 1 && c != 3) {
    throw DimensionError("images must have 1 or 3 channels, got " +
                         std::to_string(c));
  }
}

bool is_supported_image(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char ch) { return std::tolower(ch); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp";
}

SliceImage load_slice(const fs::path& path) {
  if (!is_supported_image(path)) {
    throw FormatError("unsupported image format: " + path.string() +
                      " (expected PNG, JPEG or BMP)");
  }
  cv::Mat mat;
  try {
    mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  } catch (const cv::Exception& e) {
    throw DecodeError(path.string(), "cannot decode " + path.string() + ": " + e.what());
  }
  if (mat.empty()) {
    throw DecodeError(path.string(), "cannot decode " + path.string());
  }

  double to_byte = 1.0;
  if (mat.depth() == CV_16U) {
    to_byte = 255.0 / 65535.0;
  } else if (mat.depth() != CV_8U) {
    throw DecodeError(path.string(), "unsupported pixel depth in " + path.string());
  }
  cv::Mat converted;
  switch (mat.channels()) {
    case 1:
      converted = mat;
      break;
    case 3:
      cv::cvtColor(mat, converted, cv::COLOR_BGR2RGB);
      break;
    case 4:
      cv::cvtColor(mat, converted, cv::COLOR_BGRA2RGB);
      break;
    default:
      throw DecodeError(path.string(), "unsupported channel count in " + path.string());
  }
  cv::Mat as_float;
  converted.convertTo(as_float, CV_MAKETYPE(CV_32F, converted.channels()), to_byte);

  SliceImage img(static_cast<std::size_t>(as_float.cols),
                 static_cast<std::size_t>(as_float.rows),
                 static_cast<std::size_t>(as_float.channels()));
  const std::size_t row_len = img.width * img.channels;
  for (std::size_t y = 0; y < img.height; ++y) {
    const float* src = as_float.ptr<float>(static_cast<int>(y));
    std::copy(src, src + row_len, img.pixels.begin() + y * row_len);
  }
  return img;
}

void save_slice(const SliceImage& image, const fs::path& path) {
  const int type = image.channels == 1 ? CV_8UC1 : CV_8UC3;
  cv::Mat mat(static_cast<int>(image.height), static_cast<int>(image.width), type);
  const float k = image.scale == PixelScale::Unit ? 255.0f : 1.0f;
  for (std::size_t y = 0; y < image.height; ++y) {
    auto* row = mat.ptr<std::uint8_t>(static_cast<int>(y));
    for (std::size_t x = 0; x < image.width; ++x) {
      for (std::size_t c = 0; c < image.channels; ++c) {
        // OpenCV stores colour as BGR.
        const std::size_t dst_c = image.channels == 3 ? 2 - c : c;
        const float v = std::clamp(std::round(image.at(y, x, c) * k), 0.0f, 255.0f);
        row[x * image.channels + dst_c] = static_cast<std::uint8_t>(v);
      }
    }
  }
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), mat);
  } catch (const cv::Exception& e) {
    throw IoError("cannot write " + path.string() + ": " + e.what());
  }
  if (!ok) throw IoError("cannot write " + path.string());
}

namespace {

struct Tap {
  std::size_t lo, hi;
  double w;  // weight of `hi`
};

std::vector<Tap> taps_for(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t i = 0; i < out; ++i) {
    double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const auto lo = static_cast<std::size_t>(std::floor(src));
    const std::size_t hi = std::min(lo + 1, in - 1);
    taps[i] = {lo, hi, src - static_cast<double>(lo)};
  }
  return taps;
}

}  // namespace

SliceImage resize_bilinear(const SliceImage& image, std::size_t out_width,
                           std::size_t out_height) {
  if (out_width == 0 || out_height == 0) {
    throw DimensionError("resize target must be >= 1 pixel");
  }
  const auto xs = taps_for(image.width, out_width);
  const auto ys = taps_for(image.height, out_height);
  SliceImage out(out_width, out_height, image.channels, image.scale);
  for (std::size_t y = 0; y < out_height; ++y) {
    const Tap& ty = ys[y];
    for (std::size_t x = 0; x < out_width; ++x) {
      const Tap& tx = xs[x];
      for (std::size_t c = 0; c < image.channels; ++c) {
        const double v00 = image.at(ty.lo, tx.lo, c);
        const double v01 = image.at(ty.lo, tx.hi, c);
        const double v10 = image.at(ty.hi, tx.lo, c);
        const double v11 = image.at(ty.hi, tx.hi, c);
        const double top = v00 + tx.w * (v01 - v00);
        const double bottom = v10 + tx.w * (v11 - v10);
        out.at(y, x, c) = static_cast<float>(top + ty.w * (bottom - top));
      }
    }
  }
  return out;
}

void Normalization::validate() const {
  for (float s : stddev) {
    if (!(s != 0.0f) || !std::isfinite(s)) {
      throw ConfigError("normalization std components must be finite and non-zero");
    }
  }
  for (float m : mean) {
    if (!std::isfinite(m)) throw ConfigError("normalization mean must be finite");
  }
}

Tensor<float> to_model_tensor(const SliceImage& image, const Normalization& norm) {
  norm.validate();
  if (image.channels != 1 && image.channels != 3) {
    throw DimensionError("expected 1 or 3 channels, got " +
                         std::to_string(image.channels));
  }
  const std::size_t h = image.height, w = image.width;
  const float to_unit = image.scale == PixelScale::Byte ? 1.0f / 255.0f : 1.0f;
  Tensor<float> out({3, h, w});
  for (std::size_t c = 0; c < 3; ++c) {
    const std::size_t src_c = image.channels == 1 ? 0 : c;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        out[(c * h + y) * w + x] =
            (image.at(y, x, src_c) * to_unit - norm.mean[c]) / norm.stddev[c];
  }
  return out;
}

SliceImage from_model_tensor(const Tensor<float>& tensor,
                             const Normalization& norm) {
  norm.validate();
  if (tensor.rank() != 3 || tensor.dim(0) != 3) {
    throw DimensionError("expected a 3 x H x W tensor, got " +
                         shape_str(tensor.shape()));
  }
  const std::size_t h = tensor.dim(1), w = tensor.dim(2);
  SliceImage out(w, h, 3, PixelScale::Unit);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        out.at(y, x, c) = tensor[(c * h + y) * w + x] * norm.stddev[c] + norm.mean[c];
  return out;
}

Tensor<float> preprocess_slice(const fs::path& path, const PreprocessConfig& config) {
  return to_model_tensor(resize_bilinear(load_slice(path), config.size), config.norm);
}

}  // namespace vitct
