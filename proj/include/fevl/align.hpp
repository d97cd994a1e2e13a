#pragma once

#include <array>
#include <cstddef>

#include "fevl/image.hpp"

namespace fevl {

// Five facial landmarks in pixel coordinates, fixed order: left eye, right
// eye, nose tip, left mouth corner, right mouth corner.
struct LandmarkSet {
    std::array<double, 5> x{};
    std::array<double, 5> y{};
};

// p -> scale * R * p + t with R a proper rotation (det +1).
struct SimilarityTransform {
    double scale = 1.0;
    double r[2][2] = {{1.0, 0.0}, {0.0, 1.0}};
    double tx = 0.0, ty = 0.0;

    void apply(double px, double py, double* ox, double* oy) const;
    void apply_inverse(double px, double py, double* ox, double* oy) const;
};

// The canonical 112x112 five-point template.
LandmarkSet canonical_template();

// Least-squares similarity via the closed form: centroids, 2x2 covariance,
// SVD with the det-correction reflection guard.
SimilarityTransform estimate_similarity(const LandmarkSet& src, const LandmarkSet& dst);

// Inverse mapping + bilinear interpolation; out-of-bounds samples zero-fill.
Image warp_image(const Image& img, const SimilarityTransform& xf, std::size_t out_h,
                 std::size_t out_w);

// estimate_similarity(lm, canonical template) then warp to 112x112.
Image align_face(const Image& img, const LandmarkSet& lm);

}  // namespace fevl
