#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace emorank {

/// Dense row-major tensor of doubles. Rank 1 and 2 cover everything the
/// extractor needs; higher ranks are stored but only sized, not indexed.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;
    bool requires_grad = false;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> dims, double fill = 0.0);
    Tensor(std::vector<std::size_t> dims, std::vector<double> values);

    static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor vector(std::vector<double> values);
    static Tensor scalar(double v);
    static Tensor identity(std::size_t n);

    std::size_t size() const noexcept { return data.size(); }
    std::size_t rank() const noexcept { return shape.size(); }
    std::size_t rows() const;
    std::size_t cols() const;

    double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

    bool all_finite() const;
    std::string shape_str() const;
};

std::size_t shape_product(const std::vector<std::size_t>& shape);

}  // namespace emorank
