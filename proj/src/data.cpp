#include "fevl/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace fevl {

DatasetManifest make_manifest(const std::vector<ManifestRecord>& rows) {
    if (rows.empty()) throw std::invalid_argument("empty manifest");
    DatasetManifest m;
    std::map<int, int> remap;  // original -> dense
    for (const auto& row : rows) {
        auto [it, inserted] = remap.try_emplace(row.label, static_cast<int>(remap.size()));
        if (inserted) {
            m.original_labels.push_back(row.label);
            m.class_counts.push_back(0);
        }
        m.records.push_back({row.path, it->second});
        ++m.class_counts[it->second];
    }
    return m;
}

DatasetManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_manifest: cannot open " + path);
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error("load_manifest: empty file " + path);
    std::vector<ManifestRecord> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto comma = line.rfind(',');
        if (comma == std::string::npos || comma == 0 || comma + 1 >= line.size())
            throw std::runtime_error("load_manifest: malformed row at line " +
                                     std::to_string(lineno));
        ManifestRecord rec;
        rec.path = line.substr(0, comma);
        try {
            rec.label = std::stoi(line.substr(comma + 1));
        } catch (const std::exception&) {
            throw std::runtime_error("load_manifest: bad label at line " +
                                     std::to_string(lineno));
        }
        rows.push_back(std::move(rec));
    }
    if (rows.empty()) throw std::runtime_error("load_manifest: empty manifest");
    return make_manifest(rows);
}

void save_manifest(const DatasetManifest& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_manifest: cannot open " + path);
    out << "path,label\n";
    for (const auto& rec : m.records)
        out << rec.path << ',' << m.original_labels[rec.label] << '\n';
}

DatasetManifest filter_low_shot(const DatasetManifest& m, std::size_t num_min) {
    std::vector<ManifestRecord> kept;
    for (const auto& rec : m.records)
        if (m.class_counts[rec.label] >= num_min)
            kept.push_back({rec.path, m.original_labels[rec.label]});
    if (kept.empty())
        throw std::runtime_error("filter_low_shot: no records survive num_min=" +
                                 std::to_string(num_min));
    return make_manifest(kept);
}

std::vector<std::size_t> weighted_sample(const DatasetManifest& m, Prng& rng,
                                         std::size_t n) {
    if (n < 1) throw std::invalid_argument("weighted_sample: n must be >= 1");
    std::vector<double> cdf(m.records.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < m.records.size(); ++i) {
        acc += 1.0 / static_cast<double>(m.class_counts[m.records[i].label]);
        cdf[i] = acc;
    }
    std::vector<std::size_t> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double u = rng.uniform01() * acc;
        out[k] = static_cast<std::size_t>(
            std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
        if (out[k] >= m.records.size()) out[k] = m.records.size() - 1;
    }
    return out;
}

void rgb_to_hsv(double r, double g, double b, double* h, double* s, double* v) {
    const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
    const double d = mx - mn;
    *v = mx;
    *s = mx > 0.0 ? d / mx : 0.0;
    if (d <= 0.0) {
        *h = 0.0;
        return;
    }
    double hh;
    if (mx == r)
        hh = std::fmod((g - b) / d, 6.0);
    else if (mx == g)
        hh = (b - r) / d + 2.0;
    else
        hh = (r - g) / d + 4.0;
    hh *= 60.0;
    if (hh < 0.0) hh += 360.0;
    *h = hh;
}

void hsv_to_rgb(double h, double s, double v, double* r, double* g, double* b) {
    const double c = v * s;
    const double hp = h / 60.0;
    const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    double rr = 0, gg = 0, bb = 0;
    if (hp < 1) { rr = c; gg = x; }
    else if (hp < 2) { rr = x; gg = c; }
    else if (hp < 3) { gg = c; bb = x; }
    else if (hp < 4) { gg = x; bb = c; }
    else if (hp < 5) { rr = x; bb = c; }
    else { rr = c; bb = x; }
    const double m = v - c;
    *r = rr + m;
    *g = gg + m;
    *b = bb + m;
}

Image augment(const Image& img, const AugmentSpec& spec, Prng& rng, const RgbPca* pca) {
    if ((spec.hsb_enabled || spec.pca_enabled) && img.channels != 3)
        throw std::invalid_argument("augment: hsb/pca need a 3-channel image");
    if (spec.hsb_lo > spec.hsb_hi)
        throw std::invalid_argument("augment: hsb range lo > hi");
    if (spec.pca_enabled && pca == nullptr)
        throw std::invalid_argument("augment: pca enabled but no basis provided");

    Image out = img;
    auto clamp01 = [](double v) { return std::min(std::max(v, 0.0), 1.0); };

    if (spec.hflip_enabled && rng.uniform01() < spec.hflip_prob) {
        for (std::size_t r = 0; r < out.height; ++r)
            for (std::size_t c = 0; c < out.width / 2; ++c)
                for (std::size_t ch = 0; ch < out.channels; ++ch)
                    std::swap(out.at(r, c, ch), out.at(r, out.width - 1 - c, ch));
    }

    if (spec.hsb_enabled) {
        const double ch_ = rng.uniform(spec.hsb_lo, spec.hsb_hi);
        const double cs = rng.uniform(spec.hsb_lo, spec.hsb_hi);
        const double cv = rng.uniform(spec.hsb_lo, spec.hsb_hi);
        const double hue_shift = (ch_ - 1.0) * 360.0;
        for (std::size_t r = 0; r < out.height; ++r)
            for (std::size_t c = 0; c < out.width; ++c) {
                double h, s, v;
                rgb_to_hsv(out.at(r, c, 0), out.at(r, c, 1), out.at(r, c, 2), &h, &s, &v);
                h = std::fmod(h + hue_shift + 720.0, 360.0);
                s = clamp01(s * cs);
                v = clamp01(v * cv);
                hsv_to_rgb(h, s, v, &out.at(r, c, 0), &out.at(r, c, 1), &out.at(r, c, 2));
            }
    }

    if (spec.pca_enabled) {
        double shift[3] = {0, 0, 0};
        for (int k = 0; k < 3; ++k) {
            const double alpha = rng.normal(0.0, spec.pca_sigma);
            for (int ch = 0; ch < 3; ++ch)
                shift[ch] += alpha * pca->eigvalues[k] * pca->eigvectors[ch][k];
        }
        for (std::size_t r = 0; r < out.height; ++r)
            for (std::size_t c = 0; c < out.width; ++c)
                for (int ch = 0; ch < 3; ++ch)
                    out.at(r, c, ch) = clamp01(out.at(r, c, ch) + shift[ch]);
    }
    return out;
}

namespace {

// Cyclic Jacobi for a symmetric 3x3.
void jacobi3(double a[3][3], double vec[3][3], double val[3]) {
    double v[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    for (int sweep = 0; sweep < 50; ++sweep) {
        double off = 0.0;
        for (int i = 0; i < 3; ++i)
            for (int j = i + 1; j < 3; ++j) off += a[i][j] * a[i][j];
        if (off < 1e-30) break;
        for (int p = 0; p < 3; ++p)
            for (int q = p + 1; q < 3; ++q) {
                if (std::abs(a[p][q]) < 1e-300) continue;
                const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
                for (int k = 0; k < 3; ++k) {
                    const double akp = a[k][p], akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (int k = 0; k < 3; ++k) {
                    const double apk = a[p][k], aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for (int k = 0; k < 3; ++k) {
                    const double vkp = v[k][p], vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
    }
    int order[3] = {0, 1, 2};
    std::sort(order, order + 3, [&](int i, int j) { return a[i][i] > a[j][j]; });
    for (int k = 0; k < 3; ++k) {
        val[k] = std::max(a[order[k]][order[k]], 0.0);
        for (int i = 0; i < 3; ++i) vec[i][k] = v[i][order[k]];
    }
}

}  // namespace

RgbPca compute_rgb_pca(const std::vector<Image>& images, std::size_t sample_cap) {
    std::size_t total = 0;
    for (const auto& img : images) {
        if (img.channels != 3)
            throw std::invalid_argument("compute_rgb_pca: 3-channel images required");
        total += img.height * img.width;
    }
    if (total < 2) throw std::invalid_argument("compute_rgb_pca: need at least 2 pixels");

    const std::size_t stride = std::max<std::size_t>(1, total / std::max<std::size_t>(sample_cap, 2));
    double mean[3] = {0, 0, 0};
    std::vector<std::array<double, 3>> samples;
    std::size_t idx = 0;
    for (const auto& img : images)
        for (std::size_t px = 0; px < img.height * img.width; ++px, ++idx) {
            if (idx % stride != 0) continue;
            std::array<double, 3> s = {img.pixels[px * 3], img.pixels[px * 3 + 1],
                                       img.pixels[px * 3 + 2]};
            samples.push_back(s);
            for (int c = 0; c < 3; ++c) mean[c] += s[c];
        }
    if (samples.size() < 2)
        throw std::invalid_argument("compute_rgb_pca: need at least 2 sampled pixels");
    for (double& m : mean) m /= static_cast<double>(samples.size());

    double cov[3][3] = {};
    for (const auto& s : samples)
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) cov[i][j] += (s[i] - mean[i]) * (s[j] - mean[j]);
    for (auto& row : cov)
        for (double& v : row) v /= static_cast<double>(samples.size());

    RgbPca out;
    jacobi3(cov, out.eigvectors, out.eigvalues);
    return out;
}

std::vector<PairRecord> load_pairs_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_pairs_file: cannot open " + path);
    std::vector<PairRecord> pairs;
    std::string a, b;
    int flag;
    while (in >> a >> b >> flag) {
        if (flag != 0 && flag != 1)
            throw std::runtime_error("load_pairs_file: flag must be 0 or 1");
        pairs.push_back({a, b, flag == 1});
    }
    if (pairs.empty()) throw std::runtime_error("load_pairs_file: no pairs in " + path);
    return pairs;
}

}  // namespace fevl
