#include "adq/tensor.hpp"

#include "adq/error.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace adq {

std::size_t shape_size(const Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape)
{
    std::string out = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(shape[i]);
    }
    return out + ")";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill)
{
    for (auto d : shape_)
        if (d == 0) throw InputError("tensor dimensions must be positive: " + shape_string(shape_));
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data))
{
    if (data_.size() != shape_size(shape_))
        throw InputError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_string(shape_));
}

Tensor Tensor::reshaped(Shape shape) const
{
    if (shape_size(shape) != data_.size())
        throw InputError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    return Tensor(std::move(shape), data_);
}

void Tensor::fill(double v)
{
    std::fill(data_.begin(), data_.end(), v);
}

bool Tensor::all_finite() const noexcept
{
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor Tensor::slice_batch(std::size_t first, std::size_t count) const
{
    if (shape_.empty() || first + count > shape_[0] || count == 0)
        throw InputError("batch slice out of range");
    const std::size_t row = data_.size() / shape_[0];
    Shape s = shape_;
    s[0] = count;
    std::vector<double> d(data_.begin() + static_cast<std::ptrdiff_t>(first * row),
                          data_.begin() + static_cast<std::ptrdiff_t>((first + count) * row));
    return Tensor(std::move(s), std::move(d));
}

} // namespace adq
