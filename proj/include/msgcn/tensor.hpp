#pragma once

#include <cmath>
#include <initializer_list>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "msgcn/common.hpp"

namespace msgcn {

/// Dense row-major array of 64-bit floats. Rank is dynamic but the library
/// only ever builds ranks 1..3 (sequences are T x C or T x N x C, conv
/// weights k x Cin x Cout).
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape)
        : shape_(std::move(shape)), data_(checked_numel(shape_), 0.0) {}

    Tensor(std::vector<int> shape, std::vector<double> values)
        : shape_(std::move(shape)), data_(std::move(values)) {
        if (static_cast<std::size_t>(checked_numel(shape_)) != data_.size()) {
            throw DimensionError("tensor: " + shape_str(shape_) + " does not hold " +
                                 std::to_string(data_.size()) + " values");
        }
    }

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<int> shape, double v) {
        Tensor t(std::move(shape));
        t.fill(v);
        return t;
    }

    static Tensor ones(std::vector<int> shape) { return full(std::move(shape), 1.0); }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static Tensor row(std::vector<double> v) {
        const int n = static_cast<int>(v.size());
        return Tensor({n}, std::move(v));
    }

    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    const std::vector<int>& shape() const { return shape_; }
    int numel() const { return static_cast<int>(data_.size()); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double& operator[](int i) { return data_[static_cast<std::size_t>(i)]; }
    double operator[](int i) const { return data_[static_cast<std::size_t>(i)]; }

    double& at(int i, int j) { return data_[static_cast<std::size_t>(i * dim(1) + j)]; }
    double at(int i, int j) const { return data_[static_cast<std::size_t>(i * dim(1) + j)]; }

    double& at(int i, int j, int k) {
        return data_[static_cast<std::size_t>((i * dim(1) + j) * dim(2) + k)];
    }
    double at(int i, int j, int k) const {
        return data_[static_cast<std::size_t>((i * dim(1) + j) * dim(2) + k)];
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    void add_(const Tensor& o) {
        require_same_shape(o, "add_");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    }

    void add_scaled_(const Tensor& o, double s) {
        require_same_shape(o, "add_scaled_");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += s * o.data_[i];
    }

    void scale_(double s) {
        for (double& v : data_) v *= s;
    }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::string shape_str() const { return shape_str(shape_); }

    static std::string shape_str(const std::vector<int>& s) {
        std::ostringstream os;
        os << '[';
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (i) os << 'x';
            os << s[i];
        }
        os << ']';
        return os.str();
    }

private:
    static int checked_numel(const std::vector<int>& shape) {
        long long n = 1;
        for (int d : shape) {
            if (d <= 0) throw DimensionError("tensor: non-positive dimension in " + shape_str(shape));
            n *= d;
        }
        if (n > (1LL << 31) - 1) throw DimensionError("tensor: too large " + shape_str(shape));
        return static_cast<int>(n);
    }

    void require_same_shape(const Tensor& o, const char* op) const {
        if (!same_shape(o)) {
            throw DimensionError(std::string(op) + ": shape mismatch " + shape_str() + " vs " +
                                 o.shape_str());
        }
    }

    std::vector<int> shape_;
    std::vector<double> data_;
};

}  // namespace msgcn
