#include "tmnn/backend.hpp"

#include <cmath>
#include <random>

namespace tmnn {

namespace {

template <typename T>
Tensor<T> normal_tensor(Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<T> values(shape_numel(shape));
  for (auto& v : values) v = static_cast<T>(dist(rng));
  Tensor<T> t(std::move(shape), std::move(values));
  t.set_requires_grad(true);
  return t;
}

template <typename T>
Tensor<T> constant_param(std::size_t n, T value) {
  Tensor<T> t(Shape{n}, value);
  t.set_requires_grad(true);
  return t;
}

}  // namespace

template <typename T>
ResNetBackend<T>::ResNetBackend(BackendConfig config, std::uint64_t seed) : config_(config) {
  if (config.in_channels == 0 || config.n_classes == 0 || config.base_width == 0) {
    throw std::invalid_argument("backend sizes must be positive");
  }
  std::mt19937_64 rng(seed);
  auto make_conv = [&](std::size_t in, std::size_t out, std::size_t stride) {
    ConvNorm layer;
    layer.weight = normal_tensor<T>(Shape{out, in, 3, 3}, std::sqrt(2.0 / static_cast<double>(in * 9)), rng);
    layer.gamma = constant_param<T>(out, T(1));
    layer.beta = constant_param<T>(out, T(0));
    layer.stride = stride;
    return layer;
  };

  const std::size_t w = config.base_width;
  const std::size_t widths[kBlocks] = {w, w, 2 * w, 2 * w, 4 * w, 4 * w};
  const std::size_t strides[kBlocks] = {1, 1, 2, 1, 2, 1};
  stem_ = make_conv(config.in_channels, w, 1);
  std::size_t in = w;
  for (std::size_t b = 0; b < kBlocks; ++b) {
    Block block;
    block.first = make_conv(in, widths[b], strides[b]);
    block.second = make_conv(widths[b], widths[b], 1);
    if (strides[b] != 1 || in != widths[b]) {
      block.projection = normal_tensor<T>(Shape{widths[b], in, 1, 1}, std::sqrt(2.0 / static_cast<double>(in)), rng);
    }
    blocks_.push_back(std::move(block));
    in = widths[b];
  }
  fc1_weight = normal_tensor<T>(Shape{in, in}, std::sqrt(2.0 / static_cast<double>(in)), rng);
  fc1_bias = constant_param<T>(in, T(0));
  fc2_weight = normal_tensor<T>(Shape{config.n_classes, in}, std::sqrt(1.0 / static_cast<double>(in)), rng);
  fc2_bias = constant_param<T>(config.n_classes, T(0));
}

template <typename T>
Tensor<T> ResNetBackend<T>::conv_norm(Graph<T>& g, const Tensor<T>& x, ConvNorm& layer, bool training) {
  auto y = ops::conv2d(g, x, layer.weight, Tensor<T>{}, layer.stride, 1);
  return ops::batch_norm(g, y, layer.gamma, layer.beta, layer.stats, training);
}

template <typename T>
Tensor<T> ResNetBackend<T>::forward(Graph<T>& g, const Tensor<T>& x, bool training) {
  if (x.rank() != 4 || x.size(1) != config_.in_channels) {
    throw ShapeError("backend expects [B x " + std::to_string(config_.in_channels) + " x F x T], got " +
                     shape_string(x.shape()));
  }
  auto h = ops::relu(g, conv_norm(g, x, stem_, training));
  for (auto& block : blocks_) {
    auto y = ops::relu(g, conv_norm(g, h, block.first, training));
    y = conv_norm(g, y, block.second, training);
    auto skip = block.projection.defined()
                    ? ops::conv2d(g, h, block.projection, Tensor<T>{}, block.first.stride, 0)
                    : h;
    h = ops::relu(g, ops::add(g, y, skip));
  }
  auto pooled = ops::global_avg_pool(g, h);
  auto hidden = ops::relu(g, ops::linear(g, pooled, fc1_weight, fc1_bias));
  return ops::linear(g, hidden, fc2_weight, fc2_bias);
}

template <typename T>
std::vector<NamedTensor<T>> ResNetBackend<T>::parameters() const {
  std::vector<NamedTensor<T>> out;
  auto add_layer = [&](const std::string& prefix, const ConvNorm& layer) {
    out.push_back({prefix + ".weight", layer.weight});
    out.push_back({prefix + ".gamma", layer.gamma});
    out.push_back({prefix + ".beta", layer.beta});
  };
  add_layer("stem", stem_);
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const std::string prefix = "block" + std::to_string(b + 1);
    add_layer(prefix + ".conv1", blocks_[b].first);
    add_layer(prefix + ".conv2", blocks_[b].second);
    if (blocks_[b].projection.defined()) out.push_back({prefix + ".projection", blocks_[b].projection});
  }
  out.push_back({"fc1.weight", fc1_weight});
  out.push_back({"fc1.bias", fc1_bias});
  out.push_back({"fc2.weight", fc2_weight});
  out.push_back({"fc2.bias", fc2_bias});
  return out;
}

template <typename T>
std::vector<std::pair<std::string, ops::BatchNormStats<T>*>> ResNetBackend<T>::norm_stats() {
  std::vector<std::pair<std::string, ops::BatchNormStats<T>*>> out;
  out.emplace_back("stem", &stem_.stats);
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const std::string prefix = "block" + std::to_string(b + 1);
    out.emplace_back(prefix + ".conv1", &blocks_[b].first.stats);
    out.emplace_back(prefix + ".conv2", &blocks_[b].second.stats);
  }
  return out;
}

template <typename T>
std::vector<std::pair<std::string, const ops::BatchNormStats<T>*>> ResNetBackend<T>::norm_stats() const {
  std::vector<std::pair<std::string, const ops::BatchNormStats<T>*>> out;
  for (auto& [name, stats] : const_cast<ResNetBackend&>(*this).norm_stats()) out.emplace_back(name, stats);
  return out;
}

template <typename T>
std::size_t ResNetBackend<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.numel();
  return n;
}

template class ResNetBackend<float>;
template class ResNetBackend<double>;

}  // namespace tmnn
