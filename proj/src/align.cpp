#include "fevl/align.hpp"

#include <cmath>
#include <stdexcept>

namespace fevl {

namespace {

// 2x2 SVD via the symmetric eigenproblem of A^T A.
struct Svd2 {
    double u[2][2], v[2][2], s[2];  // A = U diag(s) V^T, s[0] >= s[1] >= 0
};

Svd2 svd2(const double a[2][2]) {
    const double p = a[0][0] * a[0][0] + a[1][0] * a[1][0];
    const double r = a[0][1] * a[0][1] + a[1][1] * a[1][1];
    const double q = a[0][0] * a[0][1] + a[1][0] * a[1][1];

    const double half_tr = 0.5 * (p + r);
    const double disc = std::sqrt(std::max(0.0, 0.25 * (p - r) * (p - r) + q * q));
    const double l1 = half_tr + disc, l2 = std::max(0.0, half_tr - disc);

    Svd2 out;
    out.s[0] = std::sqrt(l1);
    out.s[1] = std::sqrt(l2);

    // Eigenvector of A^T A for l1.
    double vx, vy;
    if (std::abs(q) > 1e-300) {
        vx = l1 - r;
        vy = q;
    } else if (p >= r) {
        vx = 1.0;
        vy = 0.0;
    } else {
        vx = 0.0;
        vy = 1.0;
    }
    const double vn = std::hypot(vx, vy);
    vx /= vn;
    vy /= vn;
    out.v[0][0] = vx;
    out.v[1][0] = vy;
    out.v[0][1] = -vy;
    out.v[1][1] = vx;

    for (int k = 0; k < 2; ++k) {
        double ux = a[0][0] * out.v[0][k] + a[0][1] * out.v[1][k];
        double uy = a[1][0] * out.v[0][k] + a[1][1] * out.v[1][k];
        const double n = std::hypot(ux, uy);
        if (n > 1e-300) {
            out.u[0][k] = ux / n;
            out.u[1][k] = uy / n;
        } else if (k == 1) {
            out.u[0][1] = -out.u[1][0];  // complete orthogonally
            out.u[1][1] = out.u[0][0];
        } else {
            out.u[0][0] = 1.0;
            out.u[1][0] = 0.0;
        }
    }
    return out;
}

}  // namespace

void SimilarityTransform::apply(double px, double py, double* ox, double* oy) const {
    *ox = scale * (r[0][0] * px + r[0][1] * py) + tx;
    *oy = scale * (r[1][0] * px + r[1][1] * py) + ty;
}

void SimilarityTransform::apply_inverse(double px, double py, double* ox, double* oy) const {
    const double dx = (px - tx) / scale, dy = (py - ty) / scale;
    *ox = r[0][0] * dx + r[1][0] * dy;  // R^T
    *oy = r[0][1] * dx + r[1][1] * dy;
}

LandmarkSet canonical_template() {
    LandmarkSet t;
    t.x = {38.2946, 73.5318, 56.0252, 41.5493, 70.7299};
    t.y = {51.6963, 51.5014, 71.7366, 92.3655, 92.2041};
    return t;
}

SimilarityTransform estimate_similarity(const LandmarkSet& src, const LandmarkSet& dst) {
    const int n = 5;
    double msx = 0, msy = 0, mdx = 0, mdy = 0;
    for (int i = 0; i < n; ++i) {
        if (!std::isfinite(src.x[i]) || !std::isfinite(src.y[i]) ||
            !std::isfinite(dst.x[i]) || !std::isfinite(dst.y[i]))
            throw std::invalid_argument("estimate_similarity: non-finite landmark");
        msx += src.x[i];
        msy += src.y[i];
        mdx += dst.x[i];
        mdy += dst.y[i];
    }
    msx /= n;
    msy /= n;
    mdx /= n;
    mdy /= n;

    // cov = mean of (dst - mu_d)(src - mu_s)^T; var_src = mean ||src - mu_s||^2
    double cov[2][2] = {{0, 0}, {0, 0}};
    double var_src = 0.0;
    for (int i = 0; i < n; ++i) {
        const double sx = src.x[i] - msx, sy = src.y[i] - msy;
        const double dx = dst.x[i] - mdx, dy = dst.y[i] - mdy;
        cov[0][0] += dx * sx;
        cov[0][1] += dx * sy;
        cov[1][0] += dy * sx;
        cov[1][1] += dy * sy;
        var_src += sx * sx + sy * sy;
    }
    for (auto& row : cov)
        for (auto& v : row) v /= n;
    var_src /= n;
    if (var_src < 1e-12)
        throw std::invalid_argument("estimate_similarity: degenerate landmarks "
                                    "(source points coincident)");

    const Svd2 svd = svd2(cov);
    const double det_u = svd.u[0][0] * svd.u[1][1] - svd.u[0][1] * svd.u[1][0];
    const double det_v = svd.v[0][0] * svd.v[1][1] - svd.v[0][1] * svd.v[1][0];
    // Reflection guard: flip the last singular direction if det(U V^T) < 0.
    const double d = (det_u * det_v < 0.0) ? -1.0 : 1.0;

    SimilarityTransform xf;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            xf.r[i][j] = svd.u[i][0] * svd.v[j][0] + d * svd.u[i][1] * svd.v[j][1];
    xf.scale = (svd.s[0] + d * svd.s[1]) / var_src;
    if (!(xf.scale > 0.0))
        throw std::invalid_argument("estimate_similarity: non-positive scale");
    xf.tx = mdx - xf.scale * (xf.r[0][0] * msx + xf.r[0][1] * msy);
    xf.ty = mdy - xf.scale * (xf.r[1][0] * msx + xf.r[1][1] * msy);
    return xf;
}

Image warp_image(const Image& img, const SimilarityTransform& xf, std::size_t out_h,
                 std::size_t out_w) {
    if (out_h == 0 || out_w == 0)
        throw std::invalid_argument("warp_image: output dims must be positive");
    if (!(xf.scale > 0.0)) throw std::invalid_argument("warp_image: non-invertible transform");

    Image out(out_h, out_w, img.channels);
    const std::ptrdiff_t H = static_cast<std::ptrdiff_t>(out_h);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t r = 0; r < H; ++r) {
        for (std::size_t c = 0; c < out_w; ++c) {
            double sx, sy;
            xf.apply_inverse(static_cast<double>(c), static_cast<double>(r), &sx, &sy);
            const double fx = std::floor(sx), fy = std::floor(sy);
            const double wx = sx - fx, wy = sy - fy;
            const long x0 = static_cast<long>(fx), y0 = static_cast<long>(fy);
            for (std::size_t ch = 0; ch < img.channels; ++ch) {
                auto tap = [&](long yy, long xx) -> double {
                    if (yy < 0 || xx < 0 || yy >= static_cast<long>(img.height) ||
                        xx >= static_cast<long>(img.width))
                        return 0.0;  // zero fill
                    return img.at(static_cast<std::size_t>(yy),
                                  static_cast<std::size_t>(xx), ch);
                };
                double v = (1.0 - wy) * ((1.0 - wx) * tap(y0, x0) + wx * tap(y0, x0 + 1)) +
                           wy * ((1.0 - wx) * tap(y0 + 1, x0) + wx * tap(y0 + 1, x0 + 1));
                out.at(static_cast<std::size_t>(r), c, ch) =
                    std::min(std::max(v, 0.0), 1.0);
            }
        }
    }
    return out;
}

Image align_face(const Image& img, const LandmarkSet& lm) {
    const SimilarityTransform xf = estimate_similarity(lm, canonical_template());
    return warp_image(img, xf, 112, 112);
}

}  // namespace fevl
