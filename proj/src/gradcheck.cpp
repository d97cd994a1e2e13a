#include "fevl/gradcheck.hpp"

#include <cmath>
#include <string>

namespace fevl {

Mat finite_diff_grad(const std::function<double(const Mat&)>& f, const Mat& x,
                     double h) {
    if (h <= 0.0) throw std::invalid_argument("finite_diff_grad: h must be > 0");
    Mat g(x.rows, x.cols);
    Mat probe = x;
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const double orig = probe.data[i];
        probe.data[i] = orig + h;
        const double fp = f(probe);
        probe.data[i] = orig - h;
        const double fm = f(probe);
        probe.data[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw std::runtime_error("finite_diff_grad: non-finite evaluation at entry " +
                                     std::to_string(i));
        g.data[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

double relative_error(const Mat& a, const Mat& b) {
    double scale = 1.0;
    for (double v : b.data) scale = std::max(scale, std::abs(v));
    return max_abs_diff(a, b) / scale;
}

}  // namespace fevl
