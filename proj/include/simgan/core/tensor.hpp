#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "simgan/core/error.hpp"

namespace simgan {

struct Shape {
    int n = 0;
    int c = 0;
    int h = 0;
    int w = 0;

    [[nodiscard]] std::size_t numel() const
    {
        return static_cast<std::size_t>(n) * c * h * w;
    }
    friend bool operator==(const Shape&, const Shape&) = default;

    [[nodiscard]] std::string str() const
    {
        return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + ","
               + std::to_string(w) + ")";
    }
};

/// Dense NCHW float tensor with value semantics.
class Tensor {
public:
    Tensor() = default;
    Tensor(int n, int c, int h, int w, float fill = 0.0f)
        : shape_{n, c, h, w}, data_(shape_.numel(), fill)
    {
        if (n < 0 || c < 0 || h < 0 || w < 0) {
            throw InvalidInput("tensor dimensions must be non-negative");
        }
    }
    explicit Tensor(Shape s, float fill = 0.0f) : Tensor(s.n, s.c, s.h, s.w, fill) {}

    [[nodiscard]] const Shape& shape() const { return shape_; }
    [[nodiscard]] int n() const { return shape_.n; }
    [[nodiscard]] int c() const { return shape_.c; }
    [[nodiscard]] int h() const { return shape_.h; }
    [[nodiscard]] int w() const { return shape_.w; }
    [[nodiscard]] std::size_t size() const { return data_.size(); }
    [[nodiscard]] bool empty() const { return data_.empty(); }
    [[nodiscard]] std::size_t sample_size() const
    {
        return static_cast<std::size_t>(shape_.c) * shape_.h * shape_.w;
    }

    float* data() { return data_.data(); }
    [[nodiscard]] const float* data() const { return data_.data(); }
    std::span<float> span() { return data_; }
    [[nodiscard]] std::span<const float> span() const { return data_; }
    std::vector<float>& vec() { return data_; }
    [[nodiscard]] const std::vector<float>& vec() const { return data_; }

    float* sample(int i) { return data_.data() + i * sample_size(); }
    [[nodiscard]] const float* sample(int i) const { return data_.data() + i * sample_size(); }

    float& at(int n, int c, int y, int x)
    {
        return data_[((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x];
    }
    [[nodiscard]] float at(int n, int c, int y, int x) const
    {
        return data_[((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x];
    }
    float& operator[](std::size_t i) { return data_[i]; }
    float operator[](std::size_t i) const { return data_[i]; }

    void fill(float v) { std::fill(data_.begin(), data_.end(), v); }
    void zero() { fill(0.0f); }

    /// Reinterpret with the same element count.
    [[nodiscard]] Tensor reshaped(int n, int c, int h, int w) const
    {
        Shape s{n, c, h, w};
        if (s.numel() != data_.size()) {
            throw InvalidInput("reshape " + shape_.str() + " -> " + s.str() + " changes element count");
        }
        Tensor t = *this;
        t.shape_ = s;
        return t;
    }

    /// Copy of samples [begin, begin + count).
    [[nodiscard]] Tensor slice(int begin, int count) const
    {
        if (begin < 0 || count < 0 || begin + count > shape_.n) {
            throw InvalidInput("slice out of range");
        }
        Tensor t(count, shape_.c, shape_.h, shape_.w);
        std::copy_n(sample(begin), count * sample_size(), t.data());
        return t;
    }

    void set_sample(int i, std::span<const float> values)
    {
        if (values.size() != sample_size()) {
            throw InvalidInput("sample size mismatch");
        }
        std::copy(values.begin(), values.end(), sample(i));
    }

    Tensor& operator+=(const Tensor& o)
    {
        if (o.shape_ != shape_) {
            throw InvalidInput("shape mismatch in +=: " + shape_.str() + " vs " + o.shape_.str());
        }
        for (std::size_t i = 0; i < data_.size(); ++i) {
            data_[i] += o.data_[i];
        }
        return *this;
    }

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape shape_{};
    std::vector<float> data_;
};

/// Stack two batches with identical per-sample shape along N.
inline Tensor concat_batch(const Tensor& a, const Tensor& b)
{
    if (a.c() != b.c() || a.h() != b.h() || a.w() != b.w()) {
        throw InvalidInput("concat_batch: per-sample shapes differ");
    }
    Tensor t(a.n() + b.n(), a.c(), a.h(), a.w());
    std::copy(a.vec().begin(), a.vec().end(), t.data());
    std::copy(b.vec().begin(), b.vec().end(), t.data() + a.size());
    return t;
}

} // namespace simgan
