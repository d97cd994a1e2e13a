#pragma once

#include <functional>

#include "fevl/mat.hpp"

namespace fevl {

// Central-difference gradient of a scalar function of a matrix,
// (f(x + h e) - f(x - h e)) / 2h per entry.
Mat finite_diff_grad(const std::function<double(const Mat&)>& f, const Mat& x,
                     double h = 1e-5);

// max |a-b| / max(1, max |b|): the relative error used by the gradient checks.
double relative_error(const Mat& a, const Mat& b);

}  // namespace fevl
