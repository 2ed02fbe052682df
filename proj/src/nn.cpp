#include "kws/nn.hpp"

#include <algorithm>
#include <cmath>

namespace kws {

namespace {

int same_pad_left(int t, int k, int stride) {
    int t_out = (t + stride - 1) / stride;
    int pad_total = std::max((t_out - 1) * stride + k - t, 0);
    return pad_total / 2;
}

void check_conv_shapes(const Tensor& input, const Tensor& weights, const Tensor* bias) {
    if (input.rank() != 2) throw ShapeError("conv1d input must be T x Cin, got " + input.shape_str());
    if (weights.rank() != 3)
        throw ShapeError("conv1d weights must be K x Cin x Cout, got " + weights.shape_str());
    if (input.dim(1) != weights.dim(1))
        throw ShapeError("conv1d channel mismatch: input " + input.shape_str() + " vs weights " +
                         weights.shape_str());
    if (bias && (bias->rank() != 1 || bias->dim(0) != weights.dim(2)))
        throw ShapeError("conv1d bias must be length Cout");
}

}  // namespace

int conv1d_output_frames(int t, int k, int stride, Padding padding) {
    if (stride < 1) throw ConfigError("conv1d stride must be >= 1");
    if (padding == Padding::Same) return (t + stride - 1) / stride;
    if (k > t) throw ShapeError("conv1d valid padding needs K <= T");
    return (t - k) / stride + 1;
}

Tensor conv1d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias, int stride,
                      Padding padding) {
    check_conv_shapes(input, weights, &bias);
    const int t_in = input.dim(0), cin = input.dim(1);
    const int k = weights.dim(0), cout = weights.dim(2);
    const int t_out = conv1d_output_frames(t_in, k, stride, padding);
    const int offset = padding == Padding::Same ? same_pad_left(t_in, k, stride) : 0;

    Tensor out = Tensor::zeros({t_out, cout});
    for (int t = 0; t < t_out; ++t) {
        double* orow = &out.data[static_cast<std::size_t>(t) * cout];
        for (int o = 0; o < cout; ++o) orow[o] = bias.at(o);
        for (int kk = 0; kk < k; ++kk) {
            const int ti = t * stride + kk - offset;
            if (ti < 0 || ti >= t_in) continue;
            const double* irow = &input.data[static_cast<std::size_t>(ti) * cin];
            const double* wrow = &weights.data[static_cast<std::size_t>(kk) * cin * cout];
            for (int i = 0; i < cin; ++i) {
                const double x = irow[i];
                const double* w = wrow + static_cast<std::size_t>(i) * cout;
                for (int o = 0; o < cout; ++o) orow[o] += x * w[o];
            }
        }
    }
    return out;
}

Conv1dGrads conv1d_backward(const Tensor& input, const Tensor& weights, const Tensor& upstream,
                            int stride, Padding padding) {
    check_conv_shapes(input, weights, nullptr);
    const int t_in = input.dim(0), cin = input.dim(1);
    const int k = weights.dim(0), cout = weights.dim(2);
    const int t_out = conv1d_output_frames(t_in, k, stride, padding);
    if (upstream.rank() != 2 || upstream.dim(0) != t_out || upstream.dim(1) != cout)
        throw ShapeError("conv1d upstream shape " + upstream.shape_str() + " does not match output");
    const int offset = padding == Padding::Same ? same_pad_left(t_in, k, stride) : 0;

    Conv1dGrads g;
    g.input = Tensor::zeros(input.dims);
    g.weights = Tensor::zeros(weights.dims);
    g.bias = Tensor::zeros({cout});

    for (int t = 0; t < t_out; ++t) {
        const double* urow = &upstream.data[static_cast<std::size_t>(t) * cout];
        for (int o = 0; o < cout; ++o) g.bias.at(o) += urow[o];
        for (int kk = 0; kk < k; ++kk) {
            const int ti = t * stride + kk - offset;
            if (ti < 0 || ti >= t_in) continue;
            const double* irow = &input.data[static_cast<std::size_t>(ti) * cin];
            double* girow = &g.input.data[static_cast<std::size_t>(ti) * cin];
            const double* wrow = &weights.data[static_cast<std::size_t>(kk) * cin * cout];
            double* gwrow = &g.weights.data[static_cast<std::size_t>(kk) * cin * cout];
            for (int i = 0; i < cin; ++i) {
                const double x = irow[i];
                const double* w = wrow + static_cast<std::size_t>(i) * cout;
                double* gw = gwrow + static_cast<std::size_t>(i) * cout;
                double acc = 0.0;
                for (int o = 0; o < cout; ++o) {
                    const double u = urow[o];
                    acc += u * w[o];
                    gw[o] += u * x;
                }
                girow[i] += acc;
            }
        }
    }
    return g;
}

Tensor dense_forward(const Tensor& input, const Tensor& weights, const Tensor& bias) {
    if (weights.rank() != 2) throw ShapeError("dense weights must be D_in x D_out");
    const int din = weights.dim(0), dout = weights.dim(1);
    if (bias.rank() != 1 || bias.dim(0) != dout) throw ShapeError("dense bias must be length D_out");
    const bool batched = input.rank() == 2;
    if (!batched && input.rank() != 1) throw ShapeError("dense input must be rank 1 or 2");
    const int rows = batched ? input.dim(0) : 1;
    const int cols = batched ? input.dim(1) : input.dim(0);
    if (cols != din)
        throw ShapeError("dense inner-dimension mismatch: input " + input.shape_str() +
                         " vs weights " + weights.shape_str());

    Tensor out = batched ? Tensor::zeros({rows, dout}) : Tensor::zeros({dout});
    for (int r = 0; r < rows; ++r) {
        const double* irow = &input.data[static_cast<std::size_t>(r) * din];
        double* orow = &out.data[static_cast<std::size_t>(r) * dout];
        for (int o = 0; o < dout; ++o) orow[o] = bias.at(o);
        for (int i = 0; i < din; ++i) {
            const double x = irow[i];
            const double* w = &weights.data[static_cast<std::size_t>(i) * dout];
            for (int o = 0; o < dout; ++o) orow[o] += x * w[o];
        }
    }
    return out;
}

DenseGrads dense_backward(const Tensor& input, const Tensor& weights, const Tensor& upstream) {
    const int din = weights.dim(0), dout = weights.dim(1);
    const bool batched = input.rank() == 2;
    const int rows = batched ? input.dim(0) : 1;
    const int cols = batched ? input.dim(1) : input.dim(0);
    if (cols != din) throw ShapeError("dense backward inner-dimension mismatch");
    if (upstream.size() != static_cast<std::int64_t>(rows) * dout)
        throw ShapeError("dense upstream shape mismatch");

    DenseGrads g;
    g.input = Tensor::zeros(input.dims);
    g.weights = Tensor::zeros(weights.dims);
    g.bias = Tensor::zeros({dout});
    for (int r = 0; r < rows; ++r) {
        const double* irow = &input.data[static_cast<std::size_t>(r) * din];
        const double* urow = &upstream.data[static_cast<std::size_t>(r) * dout];
        double* girow = &g.input.data[static_cast<std::size_t>(r) * din];
        for (int o = 0; o < dout; ++o) g.bias.at(o) += urow[o];
        for (int i = 0; i < din; ++i) {
            const double x = irow[i];
            const double* w = &weights.data[static_cast<std::size_t>(i) * dout];
            double* gw = &g.weights.data[static_cast<std::size_t>(i) * dout];
            double acc = 0.0;
            for (int o = 0; o < dout; ++o) {
                acc += urow[o] * w[o];
                gw[o] += urow[o] * x;
            }
            girow[i] += acc;
        }
    }
    return g;
}

Tensor relu(const Tensor& input) {
    Tensor out = input;
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& upstream) {
    if (!input.same_shape(upstream)) throw ShapeError("relu backward shape mismatch");
    Tensor out = upstream;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        if (input.data[i] <= 0.0) out.data[i] = 0.0;
    }
    return out;
}

Tensor softmax_rows(const Tensor& logits) {
    if (logits.rank() != 2) throw ShapeError("softmax expects T x C logits");
    const int t = logits.dim(0), c = logits.dim(1);
    Tensor out = Tensor::zeros({t, c});
    for (int r = 0; r < t; ++r) {
        const double* row = &logits.data[static_cast<std::size_t>(r) * c];
        double* orow = &out.data[static_cast<std::size_t>(r) * c];
        double mx = row[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (int j = 0; j < c; ++j) {
            orow[j] = std::exp(row[j] - mx);
            sum += orow[j];
        }
        for (int j = 0; j < c; ++j) orow[j] /= sum;
    }
    return out;
}

CeResult softmax_cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                               const std::vector<bool>& frame_mask) {
    if (logits.rank() != 2) throw ShapeError("softmax_cross_entropy expects T x C logits");
    const int t = logits.dim(0), c = logits.dim(1);
    if (static_cast<int>(targets.size()) != t || static_cast<int>(frame_mask.size()) != t)
        throw ShapeError("targets/mask length must equal frame count");

    int live = 0;
    for (int r = 0; r < t; ++r) {
        if (!frame_mask[r]) continue;
        ++live;
        if (targets[r] < 0 || targets[r] >= c)
            throw LabelError("target " + std::to_string(targets[r]) + " out of range [0," +
                             std::to_string(c) + ") at frame " + std::to_string(r));
    }
    if (live == 0) throw DataError("softmax_cross_entropy: all frames masked");

    CeResult res;
    res.grad = Tensor::zeros({t, c});
    const double inv = 1.0 / live;
    for (int r = 0; r < t; ++r) {
        if (!frame_mask[r]) continue;
        const double* row = &logits.data[static_cast<std::size_t>(r) * c];
        double* grow = &res.grad.data[static_cast<std::size_t>(r) * c];
        double mx = row[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (int j = 0; j < c; ++j) sum += std::exp(row[j] - mx);
        const double log_sum = std::log(sum);
        res.loss += (log_sum - (row[targets[r]] - mx)) * inv;
        for (int j = 0; j < c; ++j) {
            double p = std::exp(row[j] - mx) / sum;
            grow[j] = (p - (j == targets[r] ? 1.0 : 0.0)) * inv;
        }
    }
    return res;
}

AdamState AdamState::init(const TensorMap& params, AdamConfig cfg) {
    AdamState st;
    st.cfg = cfg;
    for (const auto& [name, t] : params) {
        st.m[name] = Tensor::zeros(t.dims);
        st.v[name] = Tensor::zeros(t.dims);
    }
    return st;
}

void adam_step(TensorMap& params, const TensorMap& grads, AdamState& state) {
    state.step += 1;
    const double b1 = state.cfg.beta1, b2 = state.cfg.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (auto& [name, p] : params) {
        auto git = grads.find(name);
        if (git == grads.end()) throw ShapeError("adam_step: missing gradient for " + name);
        const Tensor& g = git->second;
        Tensor& m = state.m.at(name);
        Tensor& v = state.v.at(name);
        if (!p.same_shape(g) || !p.same_shape(m) || !p.same_shape(v))
            throw ShapeError("adam_step: shape mismatch for " + name);
        for (std::size_t i = 0; i < p.data.size(); ++i) {
            m.data[i] = b1 * m.data[i] + (1.0 - b1) * g.data[i];
            v.data[i] = b2 * v.data[i] + (1.0 - b2) * g.data[i] * g.data[i];
            const double mhat = m.data[i] / bc1;
            const double vhat = v.data[i] / bc2;
            p.data[i] -= state.cfg.lr * mhat / (std::sqrt(vhat) + state.cfg.epsilon);
        }
        snap_to_f32(p);
        snap_to_f32(m);
        snap_to_f32(v);
    }
}

GradCheckReport finite_diff_check(const std::function<double(const TensorMap&)>& forward_fn,
                                  const TensorMap& params, const TensorMap& analytic_grads,
                                  double eps, double tolerance) {
    if (eps <= 0.0) throw ConfigError("finite_diff_check: eps must be positive");
    GradCheckReport rep;
    rep.eps = eps;
    TensorMap work = params;
    for (const auto& [name, p] : params) {
        auto git = analytic_grads.find(name);
        if (git == analytic_grads.end())
            throw ShapeError("finite_diff_check: missing analytic grad for " + name);
        const Tensor& ag = git->second;
        if (!ag.same_shape(p)) throw ShapeError("finite_diff_check: grad shape mismatch for " + name);
        Tensor& w = work.at(name);
        for (std::size_t i = 0; i < p.data.size(); ++i) {
            const double orig = w.data[i];
            w.data[i] = orig + eps;
            const double f_plus = forward_fn(work);
            w.data[i] = orig - eps;
            const double f_minus = forward_fn(work);
            w.data[i] = orig;
            if (!std::isfinite(f_plus) || !std::isfinite(f_minus))
                throw NumericError("finite_diff_check: non-finite function value at " + name);
            const double numeric = (f_plus - f_minus) / (2.0 * eps);
            const double analytic = ag.data[i];
            const double denom =
                std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
            const double rel = std::fabs(analytic - numeric) / denom;
            if (rel > rep.max_rel_error) {
                rep.max_rel_error = rel;
                rep.worst_param = name + "[" + std::to_string(i) + "]";
            }
        }
    }
    rep.pass = rep.max_rel_error < tolerance;
    return rep;
}

}  // namespace kws
