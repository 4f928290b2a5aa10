#include "lvdiag/tensor/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace lvdiag {

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ')';
    return os.str();
}

static void check_shape(const Shape& shape) {
    if (shape.empty()) throw ShapeError("tensor: empty shape");
    for (auto d : shape)
        if (d == 0) throw ShapeError("tensor: zero-sized dimension in " + shape_str(shape));
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, const std::vector<double>& data) : shape_(std::move(shape)), data_(data.begin(), data.end()) {
    check_shape(shape_);
    if (data_.size() != shape_numel(shape_))
        throw ShapeError("tensor: " + std::to_string(data_.size()) + " values for shape " + shape_str(shape_));
}

Tensor Tensor::from(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
}

std::size_t Tensor::offset(std::initializer_list<std::size_t> index) const {
    if (index.size() != shape_.size())
        throw ShapeError("tensor: index rank " + std::to_string(index.size()) + " for shape " + shape_str(shape_));
    std::size_t off = 0;
    std::size_t axis = 0;
    for (auto i : index) {
        if (i >= shape_[axis]) throw std::out_of_range("tensor: index out of range on axis " + std::to_string(axis));
        off = off * shape_[axis] + i;
        ++axis;
    }
    return off;
}

double& Tensor::at(std::initializer_list<std::size_t> index) { return data_[offset(index)]; }
double Tensor::at(std::initializer_list<std::size_t> index) const { return data_[offset(index)]; }

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != data_.size())
        throw ShapeError("reshape: " + shape_str(shape_) + " -> " + shape_str(shape));
    check_shape(shape);
    Tensor out = *this;
    out.shape_ = std::move(shape);
    return out;
}

double Tensor::item() const {
    if (data_.size() != 1) throw ShapeError("item: tensor of shape " + shape_str(shape_) + " is not scalar");
    return data_[0];
}

double Tensor::sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

} // namespace lvdiag
