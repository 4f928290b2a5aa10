#pragma once

#include "lvdiag/tensor/tensor.hpp"

#include <filesystem>
#include <iosfwd>
#include <stdexcept>

namespace lvdiag {

/// Binary tensor container "LTSR v1":
///   "LTSR" | u8 version=1 | u8 dtype=1 (f64) | u8 ndim | ndim x u32 LE dims | row-major f64 LE payload
class LtsrError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void write_ltsr(std::ostream& os, const Tensor& t);
Tensor read_ltsr(std::istream& is);

void save_ltsr(const std::filesystem::path& path, const Tensor& t);
Tensor load_ltsr(const std::filesystem::path& path);

} // namespace lvdiag
