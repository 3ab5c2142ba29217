#include "emorank/tensor.h"

#include <cmath>
#include <sstream>

#include "emorank/error.h"

namespace emorank {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (auto d : shape) {
        n *= d;
    }
    return n;
}

Tensor::Tensor(std::vector<std::size_t> dims, double fill)
    : shape(std::move(dims)), data(shape_product(shape), fill) {}

Tensor::Tensor(std::vector<std::size_t> dims, std::vector<double> values)
    : shape(std::move(dims)), data(std::move(values)) {
    require(shape_product(shape) == data.size(), ErrorKind::kShape,
            "tensor shape " + shape_str() + " does not match " + std::to_string(data.size()) + " values");
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, double fill) { return Tensor({rows, cols}, fill); }

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> values;
    values.reserve(r * c);
    for (const auto& row : rows) {
        require(row.size() == c, ErrorKind::kShape, "ragged rows");
        values.insert(values.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(values));
}

Tensor Tensor::vector(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor({n}, std::move(values));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

Tensor Tensor::identity(std::size_t n) {
    Tensor t = matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        t.at(i, i) = 1.0;
    }
    return t;
}

std::size_t Tensor::rows() const {
    if (shape.size() == 1) {
        return 1;
    }
    require(shape.size() == 2, ErrorKind::kShape, "rows() on rank-" + std::to_string(shape.size()) + " tensor");
    return shape[0];
}

std::size_t Tensor::cols() const {
    if (shape.size() == 1) {
        return shape[0];
    }
    require(shape.size() == 2, ErrorKind::kShape, "cols() on rank-" + std::to_string(shape.size()) + " tensor");
    return shape[1];
}

bool Tensor::all_finite() const {
    for (double v : data) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return true;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "," : "") << shape[i];
    }
    os << ']';
    return os.str();
}

}  // namespace emorank
