#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "kws/tensor.hpp"

namespace kws {

enum class Padding { Same, Valid };

// ---- temporal convolution ----------------------------------------------

// input: T x Cin, weights: K x Cin x Cout, bias: Cout.
// Same padding: T' = ceil(T/stride), zero-padded symmetrically (extra pad on
// the right). Valid: T' = floor((T-K)/stride) + 1.
Tensor conv1d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias, int stride,
                      Padding padding);

struct Conv1dGrads {
    Tensor input;
    Tensor weights;
    Tensor bias;
};

Conv1dGrads conv1d_backward(const Tensor& input, const Tensor& weights, const Tensor& upstream,
                            int stride, Padding padding);

int conv1d_output_frames(int t, int k, int stride, Padding padding);

// ---- dense --------------------------------------------------------------

// input: D_in vector or T x D_in; weights: D_in x D_out; bias: D_out.
Tensor dense_forward(const Tensor& input, const Tensor& weights, const Tensor& bias);

struct DenseGrads {
    Tensor input;
    Tensor weights;
    Tensor bias;
};

DenseGrads dense_backward(const Tensor& input, const Tensor& weights, const Tensor& upstream);

// ---- relu ---------------------------------------------------------------

Tensor relu(const Tensor& input);
// Derivative at exactly 0 is 0.
Tensor relu_backward(const Tensor& input, const Tensor& upstream);

// ---- softmax cross-entropy ----------------------------------------------

struct CeResult {
    double loss = 0.0;  // mean over unmasked frames
    Tensor grad;        // T x C; masked rows are zero
};

// logits: T x C; targets: per-frame class ids; mask: true = frame counts.
CeResult softmax_cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                               const std::vector<bool>& frame_mask);

// Row-wise softmax of T x C logits (max-subtraction stabilized).
Tensor softmax_rows(const Tensor& logits);

// ---- Adam ---------------------------------------------------------------

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    TensorMap m;  // first moments, shapes mirror params
    TensorMap v;  // second moments
    std::int64_t step = 0;
    AdamConfig cfg;

    static AdamState init(const TensorMap& params, AdamConfig cfg = {});
};

// Bias-corrected Adam update. Params and moments are snapped to float32
// precision after the update so checkpointed state round-trips exactly.
void adam_step(TensorMap& params, const TensorMap& grads, AdamState& state);

// ---- finite-difference gradient check ------------------------------------

struct GradCheckReport {
    double max_rel_error = 0.0;
    double eps = 0.0;
    bool pass = false;
    std::string worst_param;
};

// Central differences on a scalar-valued deterministic function of the
// parameter map, compared against the supplied analytic gradients.
// rel error = |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
GradCheckReport finite_diff_check(const std::function<double(const TensorMap&)>& forward_fn,
                                  const TensorMap& params, const TensorMap& analytic_grads,
                                  double eps, double tolerance = 1e-4);

}  // namespace kws
