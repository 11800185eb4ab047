#pragma once

// ViT-B/16 style image classifier: patch embedding, CLS token, learned
// positional embeddings, pre-norm transformer blocks and a linear head.
// Parameter names follow the timm `vit_base_patch16_224` state dict so
// converted checkpoints map one-to-one.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "vitct/autodiff.hpp"
#include "vitct/error.hpp"
#include "vitct/tensor.hpp"

namespace vitct {

struct VitConfig {
  std::size_t image_size = 224;
  std::size_t patch_size = 16;
  std::size_t in_channels = 3;
  std::size_t embed_dim = 768;
  std::size_t depth = 12;
  std::size_t num_heads = 12;
  std::size_t mlp_ratio = 4;
  std::size_t num_classes = 2;

  // Desk-scale configuration used by the test suites.
  static VitConfig toy() {
    return VitConfig{.image_size = 16,
                     .patch_size = 4,
                     .in_channels = 3,
                     .embed_dim = 32,
                     .depth = 2,
                     .num_heads = 4,
                     .mlp_ratio = 2,
                     .num_classes = 2};
  }

  std::size_t grid() const { return image_size / patch_size; }
  std::size_t num_patches() const { return grid() * grid(); }
  std::size_t num_tokens() const { return num_patches() + 1; }
  std::size_t patch_dim() const { return patch_size * patch_size * in_channels; }
  std::size_t head_dim() const { return embed_dim / num_heads; }
  std::size_t mlp_hidden() const { return embed_dim * mlp_ratio; }

  void validate() const {
    if (image_size == 0 || patch_size == 0 || in_channels == 0 ||
        embed_dim == 0 || depth == 0 || num_heads == 0 || mlp_ratio == 0) {
      throw ConfigError("ViT config dimensions must all be positive");
    }
    if (image_size % patch_size != 0) {
      throw ConfigError("image_size " + std::to_string(image_size) +
                        " is not divisible by patch_size " +
                        std::to_string(patch_size));
    }
    if (embed_dim % num_heads != 0) {
      throw ConfigError("embed_dim " + std::to_string(embed_dim) +
                        " is not divisible by num_heads " +
                        std::to_string(num_heads));
    }
    if (num_classes != 2) {
      throw ConfigError("num_classes must be 2 (COVID / non-COVID), got " +
                        std::to_string(num_classes));
    }
  }

  friend bool operator==(const VitConfig&, const VitConfig&) = default;
};

template <typename T>
struct NamedParam {
  std::string name;
  Var<T> var;
};

template <typename T>
struct BlockParams {
  Var<T> norm1_weight, norm1_bias;
  Var<T> qkv_weight, qkv_bias;
  Var<T> proj_weight, proj_bias;
  Var<T> norm2_weight, norm2_bias;
  Var<T> fc1_weight, fc1_bias;
  Var<T> fc2_weight, fc2_bias;
};

template <typename T>
struct VitParams {
  VitConfig config;
  Var<T> patch_weight, patch_bias;
  Var<T> cls_token;
  Var<T> pos_embed;
  std::vector<BlockParams<T>> blocks;
  Var<T> norm_weight, norm_bias;
  Var<T> head_weight, head_bias;

  // Canonical order, used for serialization and the optimizer state.
  std::vector<NamedParam<T>> named() const {
    std::vector<NamedParam<T>> out{
        {"patch_embed.proj.weight", patch_weight},
        {"patch_embed.proj.bias", patch_bias},
        {"cls_token", cls_token},
        {"pos_embed", pos_embed},
    };
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const auto& b = blocks[i];
      const std::string p = "blocks." + std::to_string(i) + ".";
      out.push_back({p + "norm1.weight", b.norm1_weight});
      out.push_back({p + "norm1.bias", b.norm1_bias});
      out.push_back({p + "attn.qkv.weight", b.qkv_weight});
      out.push_back({p + "attn.qkv.bias", b.qkv_bias});
      out.push_back({p + "attn.proj.weight", b.proj_weight});
      out.push_back({p + "attn.proj.bias", b.proj_bias});
      out.push_back({p + "norm2.weight", b.norm2_weight});
      out.push_back({p + "norm2.bias", b.norm2_bias});
      out.push_back({p + "mlp.fc1.weight", b.fc1_weight});
      out.push_back({p + "mlp.fc1.bias", b.fc1_bias});
      out.push_back({p + "mlp.fc2.weight", b.fc2_weight});
      out.push_back({p + "mlp.fc2.bias", b.fc2_bias});
    }
    out.push_back({"norm.weight", norm_weight});
    out.push_back({"norm.bias", norm_bias});
    out.push_back({"head.weight", head_weight});
    out.push_back({"head.bias", head_bias});
    return out;
  }

  std::size_t count() const {
    std::size_t total = 0;
    for (const auto& p : named()) total += p.var.value().numel();
    return total;
  }

  void zero_grad() {
    for (auto& p : named()) p.var.clear_grad();
  }
};

// Expected shape of every named parameter for a configuration.
inline std::vector<std::pair<std::string, Shape>> param_shapes(
    const VitConfig& c) {
  const std::size_t d = c.embed_dim, h = c.mlp_hidden();
  std::vector<std::pair<std::string, Shape>> out{
      {"patch_embed.proj.weight", {d, c.patch_dim()}},
      {"patch_embed.proj.bias", {d}},
      {"cls_token", {d}},
      {"pos_embed", {c.num_tokens(), d}},
  };
  for (std::size_t i = 0; i < c.depth; ++i) {
    const std::string p = "blocks." + std::to_string(i) + ".";
    out.push_back({p + "norm1.weight", {d}});
    out.push_back({p + "norm1.bias", {d}});
    out.push_back({p + "attn.qkv.weight", {3 * d, d}});
    out.push_back({p + "attn.qkv.bias", {3 * d}});
    out.push_back({p + "attn.proj.weight", {d, d}});
    out.push_back({p + "attn.proj.bias", {d}});
    out.push_back({p + "norm2.weight", {d}});
    out.push_back({p + "norm2.bias", {d}});
    out.push_back({p + "mlp.fc1.weight", {h, d}});
    out.push_back({p + "mlp.fc1.bias", {h}});
    out.push_back({p + "mlp.fc2.weight", {d, h}});
    out.push_back({p + "mlp.fc2.bias", {d}});
  }
  out.push_back({"norm.weight", {d}});
  out.push_back({"norm.bias", {d}});
  out.push_back({"head.weight", {c.num_classes, d}});
  out.push_back({"head.bias", {c.num_classes}});
  return out;
}

// Builds params from tensors in param_shapes() order.
template <typename T>
VitParams<T> assemble_params(const VitConfig& config,
                             std::vector<Tensor<T>> tensors) {
  const auto shapes = param_shapes(config);
  if (tensors.size() != shapes.size()) {
    throw ContractError("expected " + std::to_string(shapes.size()) +
                        " parameter tensors, got " +
                        std::to_string(tensors.size()));
  }
  std::size_t next = 0;
  auto take = [&]() {
    if (tensors[next].shape() != shapes[next].second) {
      throw DimensionError("parameter " + shapes[next].first + " has shape " +
                           shape_str(tensors[next].shape()) + ", expected " +
                           shape_str(shapes[next].second));
    }
    return Var<T>::parameter(std::move(tensors[next++]));
  };
  VitParams<T> p;
  p.config = config;
  p.patch_weight = take();
  p.patch_bias = take();
  p.cls_token = take();
  p.pos_embed = take();
  p.blocks.resize(config.depth);
  for (auto& b : p.blocks) {
    b.norm1_weight = take();
    b.norm1_bias = take();
    b.qkv_weight = take();
    b.qkv_bias = take();
    b.proj_weight = take();
    b.proj_bias = take();
    b.norm2_weight = take();
    b.norm2_bias = take();
    b.fc1_weight = take();
    b.fc1_bias = take();
    b.fc2_weight = take();
    b.fc2_bias = take();
  }
  p.norm_weight = take();
  p.norm_bias = take();
  p.head_weight = take();
  p.head_bias = take();
  return p;
}

// Deep copy with element type conversion (float checkpoints to double for
// gradient checks, and back).
template <typename To, typename From>
VitParams<To> convert_params(const VitParams<From>& src) {
  std::vector<Tensor<To>> tensors;
  for (const auto& p : src.named())
    tensors.push_back(p.var.value().template cast<To>());
  return assemble_params<To>(src.config, std::move(tensors));
}

// Weights ~ N(0, 0.02^2) truncated to +-2 sigma; biases, CLS token and
// positional embeddings zero; layer-norm scales one.
template <typename T>
VitParams<T> init_params(const VitConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  constexpr double kStd = 0.02;
  auto trunc_normal = [&](const Shape& shape) {
    Tensor<T> t(shape);
    for (auto& v : t.storage()) {
      double z;
      do {
        z = normal(rng);
      } while (std::abs(z) > 2.0);
      v = static_cast<T>(z * kStd);
    }
    return t;
  };
  std::vector<Tensor<T>> tensors;
  for (const auto& [name, shape] : param_shapes(config)) {
    const bool is_norm = name.find("norm") != std::string::npos;
    const bool is_weight = name.ends_with(".weight");
    if (is_norm && is_weight) {
      tensors.emplace_back(shape, T{1});
    } else if (is_weight) {
      tensors.push_back(trunc_normal(shape));
    } else {
      tensors.emplace_back(shape, T{0});
    }
  }
  return assemble_params<T>(config, std::move(tensors));
}

// Splits a C x H x W image into non-overlapping patches, one row per patch in
// raster order; each row is flattened channel-major (c, dy, dx), matching a
// stride-p convolution kernel laid out as [D, C, p, p].
template <typename T>
Tensor<T> extract_patches(const Tensor<T>& image, const VitConfig& config) {
  const std::size_t c = config.in_channels, s = config.image_size,
                    p = config.patch_size;
  if (image.shape() != Shape{c, s, s}) {
    throw DimensionError("image shape " + shape_str(image.shape()) +
                         " does not match model input " +
                         shape_str(Shape{c, s, s}));
  }
  const std::size_t g = config.grid();
  Tensor<T> out({g * g, config.patch_dim()});
  for (std::size_t gy = 0; gy < g; ++gy) {
    for (std::size_t gx = 0; gx < g; ++gx) {
      T* row = out.data().data() + (gy * g + gx) * config.patch_dim();
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t dy = 0; dy < p; ++dy)
          for (std::size_t dx = 0; dx < p; ++dx)
            *row++ = image[(ch * s + gy * p + dy) * s + gx * p + dx];
    }
  }
  return out;
}

// Optional hook receiving every attention matrix (tokens x tokens) computed
// during a forward pass, tagged with block and head index.
template <typename T>
using AttentionObserver =
    std::function<void(std::size_t block, std::size_t head, const Tensor<T>&)>;

template <typename T>
Var<T> patch_embed(const Tensor<T>& image, const VitParams<T>& params) {
  auto patches = Var<T>::constant(extract_patches(image, params.config));
  auto tokens = ops::linear(patches, params.patch_weight, params.patch_bias);
  auto seq = ops::concat_rows<T>({params.cls_token, tokens});
  return ops::add(seq, params.pos_embed);
}

template <typename T>
Var<T> block_forward(const Var<T>& tokens, const BlockParams<T>& block,
                     const VitConfig& config, std::size_t block_index = 0,
                     const AttentionObserver<T>* observer = nullptr) {
  const std::size_t d = config.embed_dim;
  if (tokens.value().rank() != 2 || tokens.value().dim(1) != d) {
    throw DimensionError("block input " + shape_str(tokens.shape()) +
                         " does not have embed_dim " + std::to_string(d));
  }
  const std::size_t hd = config.head_dim();
  const T scale = T{1} / std::sqrt(static_cast<T>(hd));

  auto h = ops::layer_norm(tokens, block.norm1_weight, block.norm1_bias);
  auto qkv = ops::linear(h, block.qkv_weight, block.qkv_bias);
  std::vector<Var<T>> heads;
  heads.reserve(config.num_heads);
  for (std::size_t i = 0; i < config.num_heads; ++i) {
    auto q = ops::slice_cols(qkv, i * hd, hd);
    auto k = ops::slice_cols(qkv, d + i * hd, hd);
    auto v = ops::slice_cols(qkv, 2 * d + i * hd, hd);
    auto scores = ops::scale(ops::matmul(q, ops::transpose(k)), scale);
    auto attn = ops::softmax(scores, 1);
    if (observer && *observer) (*observer)(block_index, i, attn.value());
    heads.push_back(ops::matmul(attn, v));
  }
  auto attn_out = ops::linear(ops::concat_cols(heads), block.proj_weight,
                              block.proj_bias);
  auto x = ops::add(tokens, attn_out);

  auto h2 = ops::layer_norm(x, block.norm2_weight, block.norm2_bias);
  auto mlp = ops::linear(ops::gelu(ops::linear(h2, block.fc1_weight,
                                               block.fc1_bias)),
                         block.fc2_weight, block.fc2_bias);
  return ops::add(x, mlp);
}

// Logits (length num_classes) for one preprocessed C x S x S image.
template <typename T>
Var<T> forward_logits(const Tensor<T>& image, const VitParams<T>& params,
                      const AttentionObserver<T>* observer = nullptr) {
  auto x = patch_embed(image, params);
  for (std::size_t i = 0; i < params.blocks.size(); ++i)
    x = block_forward(x, params.blocks[i], params.config, i, observer);
  auto cls = ops::slice_rows(x, 0, 1);
  auto normed = ops::layer_norm(cls, params.norm_weight, params.norm_bias);
  auto logits = ops::linear(normed, params.head_weight, params.head_bias);
  return ops::reshape(logits, {params.config.num_classes});
}

// B x num_classes logits for a batch of images.
template <typename T>
Var<T> forward_batch(const std::vector<Tensor<T>>& images,
                     const VitParams<T>& params) {
  if (images.empty()) throw ContractError("forward_batch on an empty batch");
  std::vector<Var<T>> rows;
  rows.reserve(images.size());
  for (const auto& img : images) rows.push_back(forward_logits(img, params));
  return ops::concat_rows(rows);
}

// Softmax of the logits, computed without recording a graph.
template <typename T>
Tensor<T> predict_proba(const Tensor<T>& image, const VitParams<T>& params) {
  NoGradGuard guard;
  auto logits = forward_logits(image, params);
  return ops::softmax(logits, 0).value();
}

}  // namespace vitct
