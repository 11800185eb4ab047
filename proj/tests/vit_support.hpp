#pragma once

#include "support.hpp"
#include "vitct/training.hpp"
#include "vitct/vit.hpp"

namespace vitct::testing {

// Every tensor filled with N(0, sd^2), norm weights around 1, so that no
// parameter sits at a symmetric point where gradients vanish.
inline VitParams<double> random_params(const VitConfig& config, std::uint64_t seed,
                                       double sd = 0.3) {
  Gen gen(seed);
  std::vector<Tensor<double>> tensors;
  for (const auto& [name, shape] : param_shapes(config)) {
    Tensor<double> t(shape);
    const bool norm_weight = name.find("norm") != std::string::npos &&
                             name.ends_with(".weight");
    for (auto& v : t.data()) v = norm_weight ? 1.0 + gen.normal(0, 0.2) : gen.normal(0, sd);
    tensors.push_back(std::move(t));
  }
  return assemble_params<double>(config, std::move(tensors));
}

template <typename T>
Tensor<T> random_image(const VitConfig& config, Gen& gen) {
  return gen.tensor<T>({config.in_channels, config.image_size, config.image_size}, -2, 2);
}

// Closed-form parameter count, written out term by term.
inline std::size_t closed_form_count(const VitConfig& c) {
  const std::size_t d = c.embed_dim, p = c.patch_size, h = c.mlp_ratio * d;
  const std::size_t n = (c.image_size / p) * (c.image_size / p);
  const std::size_t patch = d * (p * p * c.in_channels) + d;
  const std::size_t cls = d;
  const std::size_t pos = (n + 1) * d;
  const std::size_t attn = (3 * d * d + 3 * d) + (d * d + d);
  const std::size_t mlp = (h * d + h) + (d * h + d);
  const std::size_t norms = 2 * (2 * d);
  const std::size_t block = attn + mlp + norms;
  const std::size_t head = c.num_classes * d + c.num_classes;
  return patch + cls + pos + c.depth * block + 2 * d + head;
}

inline std::vector<std::pair<std::string, Var<double>>> as_inputs(
    const VitParams<double>& params) {
  std::vector<std::pair<std::string, Var<double>>> out;
  for (const auto& p : params.named()) out.push_back({p.name, p.var});
  return out;
}

}  // namespace vitct::testing
