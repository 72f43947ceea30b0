#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace stylealign {

using Shape = std::vector<std::size_t>;

auto shape_to_string(const Shape &shape) -> std::string;
auto shape_numel(const Shape &shape) -> std::size_t;

// Dense row-major array of doubles. Rank 0 is a scalar; the differentiable
// ops only ever produce ranks 0 to 2.
class Tensor {
  public:
    Tensor();
    Tensor(Shape shape, std::vector<double> data);

    static auto zeros(Shape shape) -> Tensor;
    static auto filled(Shape shape, double value) -> Tensor;
    static auto scalar(double value) -> Tensor;
    static auto vector(std::vector<double> values) -> Tensor;
    static auto matrix(std::initializer_list<std::initializer_list<double>> rows) -> Tensor;

    [[nodiscard]] auto shape() const -> const Shape & {
        return shape_;
    }
    [[nodiscard]] auto rank() const -> std::size_t {
        return shape_.size();
    }
    [[nodiscard]] auto size() const -> std::size_t {
        return data_.size();
    }
    // Matrix view of the tensor: rank 2 as is, rank 1 as a single row,
    // rank 0 as 1x1.
    [[nodiscard]] auto rows() const -> std::size_t;
    [[nodiscard]] auto cols() const -> std::size_t;

    [[nodiscard]] auto data() const -> std::span<const double> {
        return data_;
    }
    auto data() -> std::span<double> {
        return data_;
    }
    [[nodiscard]] auto values() const -> const std::vector<double> & {
        return data_;
    }

    auto operator[](std::size_t i) -> double & {
        return data_[i];
    }
    auto operator[](std::size_t i) const -> double {
        return data_[i];
    }
    auto at(std::size_t r, std::size_t c) -> double & {
        return data_[r * cols() + c];
    }
    [[nodiscard]] auto at(std::size_t r, std::size_t c) const -> double {
        return data_[r * cols() + c];
    }
    [[nodiscard]] auto item() const -> double;

    [[nodiscard]] auto all_finite() const -> bool;

    friend auto operator==(const Tensor &, const Tensor &) -> bool = default;

  private:
    Shape shape_;
    std::vector<double> data_;
};

}    // namespace stylealign
