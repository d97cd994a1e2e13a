#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "fevl/image.hpp"
#include "fevl/prng.hpp"

namespace fevl {

struct ManifestRecord {
    std::string path;
    int label = 0;
};

// Dataset manifest with labels densely re-indexed 0..C-1.
struct DatasetManifest {
    std::vector<ManifestRecord> records;
    std::vector<std::size_t> class_counts;       // indexed by dense label
    std::vector<int> original_labels;            // dense label -> original label

    std::size_t num_classes() const { return class_counts.size(); }
};

// Builds a manifest from raw (path, label) rows, re-indexing labels densely
// in order of first appearance.
DatasetManifest make_manifest(const std::vector<ManifestRecord>& rows);

// CSV `path,label` with a header line.
DatasetManifest load_manifest(const std::string& path);
void save_manifest(const DatasetManifest& m, const std::string& path);

// Drops classes occurring strictly fewer than num_min times; survivors are
// re-indexed densely, record order preserved.
DatasetManifest filter_low_shot(const DatasetManifest& m, std::size_t num_min);

// n i.i.d. draws with replacement, record weight 1/count(label(record)).
std::vector<std::size_t> weighted_sample(const DatasetManifest& m, Prng& rng,
                                         std::size_t n);

struct AugmentSpec {
    bool hflip_enabled = true;
    double hflip_prob = 0.5;
    bool hsb_enabled = true;
    double hsb_lo = 0.6, hsb_hi = 1.4;
    bool pca_enabled = true;
    double pca_sigma = 0.1;
};

struct RgbPca {
    double eigvectors[3][3] = {};  // columns are eigenvectors
    double eigvalues[3] = {};      // descending
};

// In order: horizontal flip (hflip_prob); HSV jitter with independent
// coefficients ~U[lo,hi] (hue shifted by (coeff-1)*360 with wraparound, S and
// V scaled and clamped); per-image RGB-PCA noise sum_k alpha_k*lambda_k*v_k
// with alpha_k ~ N(0, pca_sigma).
Image augment(const Image& img, const AugmentSpec& spec, Prng& rng, const RgbPca* pca);

// 3x3 RGB covariance over at most sample_cap pixels (evenly strided over all
// images), Jacobi eigendecomposition, eigenvalues descending.
RgbPca compute_rgb_pca(const std::vector<Image>& images, std::size_t sample_cap);

// Pairs file: whitespace-separated `path1 path2 flag`, flag 1 = same identity.
struct PairRecord {
    std::string path_a, path_b;
    bool same = false;
};
std::vector<PairRecord> load_pairs_file(const std::string& path);

// RGB <-> HSV, H in [0,360), S,V in [0,1].
void rgb_to_hsv(double r, double g, double b, double* h, double* s, double* v);
void hsv_to_rgb(double h, double s, double v, double* r, double* g, double* b);

}  // namespace fevl
