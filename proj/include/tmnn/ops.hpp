#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tmnn/tensor.hpp"

// Differentiable operations. Every op takes the graph that records it; an op
// whose inputs carry no tracked tensor (or whose graph is not recording) is
// evaluated eagerly without leaving a node behind.
namespace tmnn::ops {

// Elementwise with trailing-dimension broadcasting (numpy rules).
template <typename T>
Tensor<T> add(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(Graph<T>& g, const Tensor<T>& a, T factor);
template <typename T>
Tensor<T> add_scalar(Graph<T>& g, const Tensor<T>& a, T offset);
template <typename T>
Tensor<T> clamp_max(Graph<T>& g, const Tensor<T>& a, T limit);

template <typename T>
Tensor<T> relu(Graph<T>& g, const Tensor<T>& a);
template <typename T>
Tensor<T> sigmoid(Graph<T>& g, const Tensor<T>& a);
template <typename T>
Tensor<T> softplus(Graph<T>& g, const Tensor<T>& a);
template <typename T>
Tensor<T> log1p(Graph<T>& g, const Tensor<T>& a);

template <typename T>
Tensor<T> sum(Graph<T>& g, const Tensor<T>& a);
template <typename T>
Tensor<T> mean(Graph<T>& g, const Tensor<T>& a);

template <typename T>
Tensor<T> reshape(Graph<T>& g, const Tensor<T>& a, Shape shape);

/// Stacks equally shaped tensors along a new leading axis.
template <typename T>
Tensor<T> stack(Graph<T>& g, std::span<const Tensor<T>> parts);

/// [m x k] . [k x n]
template <typename T>
Tensor<T> matmul(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b);

/// Centered linear convolution of a length-T signal with an odd length-L
/// kernel, zero padded so the output keeps length T.
template <typename T>
Tensor<T> conv1d_same(Graph<T>& g, const Tensor<T>& signal, const Tensor<T>& kernel);

/// Applies every kernel of a bank [M x L] to every row of x [R x T] with the
/// conv1d_same contract. Output is [R x M x T].
template <typename T>
Tensor<T> conv1d_bank(Graph<T>& g, const Tensor<T>& x, const Tensor<T>& kernels);

/// x [B x C x H x W], weight [O x C x KH x KW], optional bias [O].
template <typename T>
Tensor<T> conv2d(Graph<T>& g, const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 std::size_t stride, std::size_t padding);

/// Non-overlapping average pooling with a square window; trailing remainder is dropped.
template <typename T>
Tensor<T> mean_pool(Graph<T>& g, const Tensor<T>& x, std::size_t window);

/// [B x C x H x W] -> [B x C]
template <typename T>
Tensor<T> global_avg_pool(Graph<T>& g, const Tensor<T>& x);

template <typename T>
struct BatchNormStats {
  std::vector<T> running_mean;
  std::vector<T> running_var;
  bool initialized = false;
};

/// Per-channel normalization over every axis but axis 1. Training mode uses
/// batch statistics and folds them into `stats` as
/// running = momentum * running + (1 - momentum) * batch.
template <typename T>
Tensor<T> batch_norm(Graph<T>& g, const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     BatchNormStats<T>& stats, bool training, T momentum = T(0.9), T eps = T(1e-5));

/// x [B x in], weight [out x in], bias [out] -> [B x out]
template <typename T>
Tensor<T> linear(Graph<T>& g, const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

/// Mean binary cross-entropy on logits, fused for stability.
template <typename T>
Tensor<T> bce_with_logits(Graph<T>& g, const Tensor<T>& logits, const Tensor<T>& targets);

/// Mean negative log-softmax at the labelled class.
template <typename T>
Tensor<T> cross_entropy(Graph<T>& g, const Tensor<T>& logits, std::span<const int> labels);

// Non-differentiable helpers.
template <typename T>
std::vector<T> softmax_rows(const Tensor<T>& logits);

void check_finite(std::span<const float> values, const char* op);
void check_finite(std::span<const double> values, const char* op);

}  // namespace tmnn::ops
