#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace mz {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

// Dense row-major tensor of doubles. Scalars have an empty shape.
struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (shape_numel(shape) != static_cast<int64_t>(data.size()))
            throw std::invalid_argument("tensor: shape " + shape_str(shape) +
                                        " does not match data size " + std::to_string(data.size()));
    }

    static Tensor zeros(Shape s) {
        size_t n = static_cast<size_t>(shape_numel(s));
        return Tensor(std::move(s), std::vector<double>(n, 0.0));
    }
    static Tensor full(Shape s, double v) {
        size_t n = static_cast<size_t>(shape_numel(s));
        return Tensor(std::move(s), std::vector<double>(n, v));
    }
    static Tensor scalar(double v) { return Tensor({}, {v}); }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int ndim() const { return static_cast<int>(shape.size()); }

    double& at(std::initializer_list<int64_t> idx) { return data[offset(idx)]; }
    double at(std::initializer_list<int64_t> idx) const { return data[offset(idx)]; }

    size_t offset(std::initializer_list<int64_t> idx) const {
        size_t off = 0;
        size_t i = 0;
        for (int64_t v : idx) {
            off = off * static_cast<size_t>(shape[i]) + static_cast<size_t>(v);
            ++i;
        }
        return off;
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

inline std::vector<int64_t> row_major_strides(const Shape& s) {
    std::vector<int64_t> st(s.size(), 1);
    for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) st[i] = st[i + 1] * s[i + 1];
    return st;
}

}  // namespace mz
