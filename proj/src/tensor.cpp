#include "stylealign/tensor.hpp"

#include "stylealign/errors.hpp"

#include <cmath>
#include <utility>

namespace stylealign {

auto shape_to_string(const Shape &shape) -> std::string {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i > 0) {
            out += "x";
        }
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

auto shape_numel(const Shape &shape) -> std::size_t {
    std::size_t n = 1;
    for (auto d : shape) {
        n *= d;
    }
    return n;
}

Tensor::Tensor()
    : data_(1, 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    for (auto d : shape_) {
        if (d == 0) {
            throw DimensionError("tensor dimensions must be positive, got " + shape_to_string(shape_));
        }
    }
    if (shape_numel(shape_) != data_.size()) {
        throw DimensionError("shape " + shape_to_string(shape_) + " needs " + std::to_string(shape_numel(shape_))
                             + " elements, got " + std::to_string(data_.size()));
    }
}

auto Tensor::zeros(Shape shape) -> Tensor {
    return filled(std::move(shape), 0.0);
}

auto Tensor::filled(Shape shape, double value) -> Tensor {
    const auto n = shape_numel(shape);
    return {std::move(shape), std::vector<double>(n, value)};
}

auto Tensor::scalar(double value) -> Tensor {
    return {{}, {value}};
}

auto Tensor::vector(std::vector<double> values) -> Tensor {
    const auto n = values.size();
    return {{n}, std::move(values)};
}

auto Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) -> Tensor {
    const std::size_t r = rows.size();
    const std::size_t c = r > 0 ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto &row : rows) {
        if (row.size() != c) {
            throw DimensionError("ragged matrix literal");
        }
        data.insert(data.end(), row.begin(), row.end());
    }
    return {{r, c}, std::move(data)};
}

auto Tensor::rows() const -> std::size_t {
    return rank() == 2 ? shape_[0] : 1;
}

auto Tensor::cols() const -> std::size_t {
    if (rank() == 0) {
        return 1;
    }
    return shape_.back();
}

auto Tensor::item() const -> double {
    if (data_.size() != 1) {
        throw ContractError("item() on tensor of shape " + shape_to_string(shape_));
    }
    return data_[0];
}

auto Tensor::all_finite() const -> bool {
    for (double x : data_) {
        if (!std::isfinite(x)) {
            return false;
        }
    }
    return true;
}

}    // namespace stylealign
