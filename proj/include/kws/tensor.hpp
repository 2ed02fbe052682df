#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "kws/errors.hpp"

namespace kws {

// Dense row-major tensor of 64-bit reals.
struct Tensor {
    std::vector<int> dims;
    std::vector<double> data;

    Tensor() = default;

    static Tensor zeros(std::vector<int> shape) {
        Tensor t;
        std::int64_t n = 1;
        for (int d : shape) {
            if (d <= 0) throw ShapeError("tensor extent must be positive, got " + std::to_string(d));
            n *= d;
        }
        t.dims = std::move(shape);
        t.data.assign(static_cast<std::size_t>(n), 0.0);
        return t;
    }

    static Tensor from(std::vector<int> shape, std::vector<double> values) {
        Tensor t = zeros(std::move(shape));
        if (values.size() != t.data.size()) throw ShapeError("value count does not match shape");
        t.data = std::move(values);
        return t;
    }

    std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
    int rank() const { return static_cast<int>(dims.size()); }

    int dim(int i) const { return dims[static_cast<std::size_t>(i)]; }

    // 1-d access
    double& at(int i) { return data[static_cast<std::size_t>(i)]; }
    double at(int i) const { return data[static_cast<std::size_t>(i)]; }

    // 2-d access, dims = {R, C}
    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * dims[1] + c]; }
    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * dims[1] + c]; }

    // 3-d access, dims = {A, B, C}
    double& at(int a, int b, int c) {
        return data[(static_cast<std::size_t>(a) * dims[1] + b) * dims[2] + c];
    }
    double at(int a, int b, int c) const {
        return data[(static_cast<std::size_t>(a) * dims[1] + b) * dims[2] + c];
    }

    bool same_shape(const Tensor& o) const { return dims == o.dims; }

    std::string shape_str() const {
        std::string s = "[";
        for (std::size_t i = 0; i < dims.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(dims[i]);
        }
        return s + "]";
    }
};

// Named parameter (or gradient) collection; std::map keeps iteration order stable.
using TensorMap = std::map<std::string, Tensor>;

inline void check_finite(const Tensor& t, const std::string& what) {
    for (double v : t.data) {
        if (!std::isfinite(v)) throw NumericError("non-finite value in " + what);
    }
}

// Round every value to the nearest float32, in place. Keeps in-memory state
// exactly representable in the 32-bit checkpoint format so save/load is lossless.
inline void snap_to_f32(Tensor& t) {
    for (double& v : t.data) v = static_cast<double>(static_cast<float>(v));
}

inline void snap_to_f32(TensorMap& m) {
    for (auto& [name, t] : m) snap_to_f32(t);
}

}  // namespace kws
