#pragma once

// Forward/backward kernels for the 3D U-Net building blocks. Every backward
// routine accumulates (+=) into parameter gradients and overwrites input
// gradients.

#include <span>
#include <vector>

#include "f3net/tensor.hpp"

namespace f3net::nn {

inline constexpr float kInstanceNormEps = 1e-5f;
inline constexpr float kLeakySlope = 0.01f;

/// Output extent of a conv with padding kernel/2.
int conv_output_extent(int in, int kernel, int stride);

/// weight layout (out, in, k, k, k), kernel odd, zero padding kernel/2.
void conv3d_forward(const Tensor& in, std::span<const float> weight, std::span<const float> bias,
                    int out_channels, int kernel, int stride, Tensor& out);

/// grad_in may be null when the input gradient is not needed.
void conv3d_backward(const Tensor& in, std::span<const float> weight, int out_channels, int kernel,
                     int stride, const Tensor& grad_out, Tensor* grad_in,
                     std::span<float> grad_weight, std::span<float> grad_bias);

/// Kernel 2, stride 2 transposed convolution; weight layout (out, 2, 2, 2, in).
void upconv_forward(const Tensor& in, std::span<const float> weight, std::span<const float> bias,
                    int out_channels, Tensor& out);
void upconv_backward(const Tensor& in, std::span<const float> weight, int out_channels,
                     const Tensor& grad_out, Tensor& grad_in, std::span<float> grad_weight,
                     std::span<float> grad_bias);

/// Per-channel normalization over the spatial extent with affine gamma/beta.
/// xhat and inv_std are saved for the backward pass.
void instance_norm_forward(const Tensor& in, std::span<const float> gamma,
                           std::span<const float> beta, Tensor& out, Tensor& xhat,
                           std::vector<float>& inv_std);
void instance_norm_backward(const Tensor& xhat, std::span<const float> inv_std,
                            std::span<const float> gamma, const Tensor& grad_out,
                            Tensor& grad_in, std::span<float> grad_gamma,
                            std::span<float> grad_beta);

void leaky_relu_inplace(Tensor& t);
/// Uses the activation output; leaky ReLU preserves sign.
void leaky_relu_backward_inplace(const Tensor& out, Tensor& grad);

}  // namespace f3net::nn
