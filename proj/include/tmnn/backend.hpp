#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "tmnn/frontend_mel.hpp"
#include "tmnn/ops.hpp"
#include "tmnn/tensor.hpp"

namespace tmnn {

struct BackendConfig {
  std::size_t in_channels = 12;
  std::size_t n_classes = 50;
  // Widths are base, base, 2 base, 2 base, 4 base, 4 base; the hidden FC
  // layer has 4 base units.
  std::size_t base_width = 32;
};

/// Residual 2-D CNN over [B x C x F x T]:
/// stem conv3x3-BN-ReLU, six residual blocks of
/// [conv3x3, BN, ReLU, conv3x3, BN] + skip, ReLU (stride 2 in blocks 3 and 5,
/// 1x1 projection on the skip whenever the shape changes), global average
/// pooling, FC-ReLU-FC. Returns raw logits.
template <typename T>
class ResNetBackend {
 public:
  static constexpr std::size_t kBlocks = 6;

  ResNetBackend() = default;
  ResNetBackend(BackendConfig config, std::uint64_t seed);

  Tensor<T> forward(Graph<T>& g, const Tensor<T>& x, bool training);

  const BackendConfig& config() const { return config_; }
  std::size_t parameter_count() const;
  /// Number of 3x3 convolutions inside residual blocks (always 12).
  std::size_t block_conv_layers() const { return 2 * blocks_.size(); }

  std::vector<NamedTensor<T>> parameters() const;
  std::vector<std::pair<std::string, ops::BatchNormStats<T>*>> norm_stats();
  std::vector<std::pair<std::string, const ops::BatchNormStats<T>*>> norm_stats() const;

 private:
  struct ConvNorm {
    Tensor<T> weight;
    Tensor<T> gamma;
    Tensor<T> beta;
    ops::BatchNormStats<T> stats;
    std::size_t stride = 1;
  };
  struct Block {
    ConvNorm first;
    ConvNorm second;
    Tensor<T> projection;  // undefined when the skip is the identity
  };

  Tensor<T> conv_norm(Graph<T>& g, const Tensor<T>& x, ConvNorm& layer, bool training);

  BackendConfig config_;
  ConvNorm stem_;
  std::vector<Block> blocks_;
  Tensor<T> fc1_weight, fc1_bias, fc2_weight, fc2_bias;
};

extern template class ResNetBackend<float>;
extern template class ResNetBackend<double>;

}  // namespace tmnn
