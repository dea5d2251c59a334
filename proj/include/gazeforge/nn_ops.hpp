#pragma once

#include "gazeforge/tensor.hpp"

namespace gazeforge {

// 2-D convolution, zero padding. input [B,inC,H,W], weight [outC,inC,kH,kW],
// bias [outC]. Output extents floor((H + 2*padding - kH)/stride) + 1.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
              int padding);

// Pointwise convolution: conv2d with 1x1 kernel, stride 1, no padding.
Tensor conv1x1(const Tensor& input, const Tensor& weight, const Tensor& bias);

Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope);

// Per (batch, channel) plane standardisation with population (1/M) variance:
// (x - mean) / sqrt(var + eps). Planes need at least 2 positions.
Tensor instance_norm(const Tensor& x, double eps);

// Nearest-neighbour up-sampling: each pixel replicated factor x factor.
Tensor nn_upsample(const Tensor& x, int factor);

// factor x factor block averaging; extents must divide evenly.
Tensor downsample_avg(const Tensor& x, int factor);

// Depthwise Gaussian blur, truncated at radius ceil(3*sigma), kernel
// renormalised to sum 1, symmetric border reflection. Preserves plane sums.
Tensor gaussian_blur(const Tensor& x, double sigma);

// Spatial soft-max over a [1,1,H,W] map, max-subtracted for stability.
// Output sums to 1 and is invariant under constant shifts of the input.
Tensor softmax_spatial(const Tensor& s);

// Bilinear resize with the half-pixel coordinate convention.
Tensor bilinear_resize(const Tensor& x, std::size_t out_h, std::size_t out_w);

}  // namespace gazeforge
