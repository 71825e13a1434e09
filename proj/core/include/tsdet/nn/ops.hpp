#pragma once

#include <vector>

#include "tsdet/geometry.hpp"
#include "tsdet/nn/autograd.hpp"

namespace tsdet::nn {

// ---- elementwise / structural ------------------------------------------------

Var add(const Var& a, const Var& b);            // same shape
Var add_n(const std::vector<Var>& vs);          // elementwise sum, same shape
Var scale(const Var& a, Scalar s);
Var relu(const Var& a);
Var reshape(const Var& a, std::vector<std::int64_t> shape);
Var concat_cols(const Var& a, const Var& b);    // [N,Da] ++ [N,Db] -> [N,Da+Db]
Var concat_rows(const std::vector<Var>& parts); // [Ni,K] -> [sum Ni, K]

// Identity forward, zero backward: the value flows, the gradient does not.
Var stop_gradient(const Var& a);

// Row gather: x[N,D], idx[M] -> [M,D]. Backward scatter-adds (duplicate
// indices accumulate), which also makes this the embedding lookup.
Var gather_rows(const Var& x, std::vector<std::int64_t> idx);

// Per-row 4-column slice: x[N,4C], class c_i per row -> [N,4] taking columns
// [4*c_i, 4*c_i+4).
Var gather_cols4(const Var& x, std::vector<std::int64_t> class_of_row);

// ---- neural net layers -------------------------------------------------------

// x[C,H,W], w[K,C,kh,kw], b[K]; zero padding.
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);

// x[N,in], w[in,out], b[out].
Var linear(const Var& x, const Var& w, const Var& b);

// x[C,H,W] normalized per channel group; gamma/beta are [C].
Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups, double eps = 1e-5);

Var upsample_nearest2(const Var& x);  // [C,H,W] -> [C,2H,2W]

// Top-left crop to [C, out_h, out_w].
Var crop2d(const Var& x, std::int64_t out_h, std::int64_t out_w);

// Bilinear RoI pooling over feat[C,H,W]. Boxes are in image coordinates and
// mapped with spatial_scale; sample points are clamped at the feature border.
// Output [N, C*resolution*resolution]. Differentiable w.r.t. the feature map
// only; box coordinates are constants.
Var roi_align(const Var& feat, const std::vector<Box>& rois, double spatial_scale,
              int resolution, int sampling);

// RPN head layout change: [A*k, H, W] -> [H*W*A, k] with row (y*W + x)*A + a,
// matching the anchor enumeration order.
Var rpn_permute(const Var& x, int num_anchors, int k);

// ---- losses -------------------------------------------------------------------

// Scalar dot product with a constant weight tensor of the same shape.
Var weighted_sum(const Var& x, const Tensor& weights);

// Mean softmax cross-entropy over rows of logits[M,K] (M >= 1).
Var softmax_ce_mean(const Var& logits, const std::vector<int>& labels);

// Mean binary cross-entropy with logits over a flat [M] tensor.
Var sigmoid_bce_mean(const Var& logits, const std::vector<Scalar>& targets);

// Elementwise smooth-L1 (Huber) against a constant target, summed and divided
// by `normalizer`.
Var smooth_l1(const Var& pred, const Tensor& target, double beta, double normalizer);

}  // namespace tsdet::nn
