#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "fevl/data.hpp"

using namespace fevl;

namespace {

DatasetManifest manifest_of(const std::vector<int>& labels) {
    std::vector<ManifestRecord> rows;
    for (std::size_t i = 0; i < labels.size(); ++i)
        rows.push_back({"img" + std::to_string(i) + ".ppm", labels[i]});
    return make_manifest(rows);
}

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& p, const std::string& content) : path(p) {
        std::ofstream(path) << content;
    }
    ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("make_manifest re-indexes labels densely") {
    const auto m = manifest_of({7, 7, 9});
    CHECK(m.num_classes() == 2);
    CHECK(m.class_counts[0] == 2);
    CHECK(m.class_counts[1] == 1);
    CHECK(m.records[0].label == 0);
    CHECK(m.records[2].label == 1);
    CHECK(m.original_labels[0] == 7);
    CHECK(m.original_labels[1] == 9);
}

TEST_CASE("manifest round-trip through CSV") {
    const auto m = manifest_of({3, 1, 3, 2, 2, 2});
    const std::string path = "test_data_manifest.csv";
    save_manifest(m, path);
    const auto back = load_manifest(path);
    std::remove(path.c_str());
    REQUIRE(back.records.size() == m.records.size());
    for (std::size_t i = 0; i < m.records.size(); ++i) {
        CHECK(back.records[i].path == m.records[i].path);
        CHECK(back.records[i].label == m.records[i].label);
    }
    CHECK(back.class_counts == m.class_counts);
}

TEST_CASE("load_manifest rejects malformed and empty input") {
    {
        TempFile f("test_data_empty.csv", "path,label\n");
        CHECK_THROWS_AS(load_manifest(f.path), std::runtime_error);
    }
    {
        TempFile f("test_data_bad.csv", "path,label\na.ppm,1\nnocolumn\n");
        CHECK_THROWS_WITH_AS(load_manifest(f.path), doctest::Contains("line 3"),
                             std::runtime_error);
    }
    CHECK_THROWS_AS(load_manifest("no_such_manifest.csv"), std::runtime_error);
}

TEST_CASE("filter_low_shot boundary semantics") {
    // counts [3,10,50]
    std::vector<int> labels;
    for (int i = 0; i < 3; ++i) labels.push_back(0);
    for (int i = 0; i < 10; ++i) labels.push_back(1);
    for (int i = 0; i < 50; ++i) labels.push_back(2);
    const auto m = manifest_of(labels);

    const auto f5 = filter_low_shot(m, 5);
    CHECK(f5.num_classes() == 2);
    CHECK(f5.records.size() == 60);

    // num_min=0 is the identity.
    const auto f0 = filter_low_shot(m, 0);
    CHECK(f0.records.size() == m.records.size());
    CHECK(f0.num_classes() == m.num_classes());

    // Strict "less than": count exactly num_min survives.
    std::vector<int> small;
    for (int i = 0; i < 3; ++i) small.push_back(0);
    for (int i = 0; i < 4; ++i) small.push_back(1);
    const auto fb = filter_low_shot(manifest_of(small), 4);
    CHECK(fb.num_classes() == 1);
    CHECK(fb.records.size() == 4);

    // Idempotence and the survivor invariant.
    const auto twice = filter_low_shot(f5, 5);
    CHECK(twice.records.size() == f5.records.size());
    for (const auto& r : f5.records) CHECK(f5.class_counts[r.label] >= 5);

    CHECK_THROWS_AS(filter_low_shot(m, 1000), std::runtime_error);
}

TEST_CASE("filter_low_shot preserves record order") {
    const auto m = manifest_of({5, 6, 5, 7, 5, 6});
    const auto f = filter_low_shot(m, 2);  // drops label 7
    REQUIRE(f.records.size() == 5);
    CHECK(f.records[0].path == "img0.ppm");
    CHECK(f.records[3].path == "img4.ppm");
    CHECK(f.records[4].path == "img5.ppm");
}

TEST_CASE("weighted_sample balances classes") {
    // counts [10, 90]: inverse-frequency weights should pull the class mix to
    // 50/50 over many draws.
    std::vector<int> labels(100, 1);
    for (int i = 0; i < 10; ++i) labels[i] = 0;
    const auto m = manifest_of(labels);
    Prng rng(7);
    const auto idx = weighted_sample(m, rng, 10000);
    std::size_t class0 = 0;
    for (std::size_t i : idx) {
        REQUIRE(i < m.records.size());
        if (m.records[i].label == 0) ++class0;
    }
    const double frac = static_cast<double>(class0) / idx.size();
    CHECK(std::abs(frac - 0.5) < 0.02);

    // Determinism.
    Prng r1(9), r2(9);
    CHECK(weighted_sample(m, r1, 100) == weighted_sample(m, r2, 100));
}

TEST_CASE("weighted_sample single class is roughly uniform") {
    const auto m = manifest_of(std::vector<int>(10, 0));
    Prng rng(11);
    const auto idx = weighted_sample(m, rng, 10000);
    std::vector<std::size_t> hits(10, 0);
    for (std::size_t i : idx) ++hits[i];
    // Chi-square against uniform, 9 dof; 21.67 is the 1% critical value.
    double chi2 = 0.0;
    for (std::size_t h : hits) {
        const double diff = static_cast<double>(h) - 1000.0;
        chi2 += diff * diff / 1000.0;
    }
    CHECK(chi2 < 21.67);
}

TEST_CASE("augment identity when everything is disabled") {
    Image img(4, 4, 3);
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
        img.pixels[i] = static_cast<double>(i % 7) / 7.0;
    AugmentSpec spec;
    spec.hflip_enabled = false;
    spec.hsb_enabled = false;
    spec.pca_enabled = false;
    Prng rng(1);
    const Image out = augment(img, spec, rng, nullptr);
    CHECK(out.pixels == img.pixels);
}

TEST_CASE("horizontal flip is an involution") {
    Image img(3, 5, 3);
    Prng fill(2);
    for (double& v : img.pixels) v = fill.uniform01();
    AugmentSpec spec;
    spec.hflip_enabled = true;
    spec.hflip_prob = 1.0;  // forced
    spec.hsb_enabled = false;
    spec.pca_enabled = false;
    Prng rng(3);
    const Image once = augment(img, spec, rng, nullptr);
    CHECK(once.pixels != img.pixels);
    const Image twice = augment(once, spec, rng, nullptr);
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
        CHECK(twice.pixels[i] == doctest::Approx(img.pixels[i]).epsilon(1e-12));
}

TEST_CASE("gray pixels only scale in V under hsb jitter") {
    Image img(2, 2, 3);
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t c = 0; c < 2; ++c)
            for (std::size_t ch = 0; ch < 3; ++ch)
                img.at(r, c, ch) = 0.5;  // gray: S = 0
    AugmentSpec spec;
    spec.hflip_enabled = false;
    spec.pca_enabled = false;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Prng rng(seed);
        const Image out = augment(img, spec, rng, nullptr);
        for (std::size_t r = 0; r < 2; ++r)
            for (std::size_t c = 0; c < 2; ++c) {
                // Still gray (all channels equal) with V scaled.
                CHECK(out.at(r, c, 0) == doctest::Approx(out.at(r, c, 1)).epsilon(1e-12));
                CHECK(out.at(r, c, 1) == doctest::Approx(out.at(r, c, 2)).epsilon(1e-12));
            }
    }
}

TEST_CASE("augment keeps values in range") {
    Image img(6, 6, 3);
    Prng fill(4);
    for (double& v : img.pixels) v = fill.uniform01();
    RgbPca pca = compute_rgb_pca({img}, 1000);
    AugmentSpec spec;  // all ops enabled
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Prng rng(seed);
        const Image out = augment(img, spec, rng, &pca);
        for (double v : out.pixels) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("augment rejects missing pca basis and wrong channel count") {
    Image img(2, 2, 3);
    AugmentSpec spec;
    Prng rng(1);
    CHECK_THROWS_AS(augment(img, spec, rng, nullptr), std::invalid_argument);
    Image gray(2, 2, 1);
    CHECK_THROWS_AS(augment(gray, spec, rng, nullptr), std::invalid_argument);
}

TEST_CASE("rgb/hsv round-trip") {
    Prng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        const double r = rng.uniform01(), g = rng.uniform01(), b = rng.uniform01();
        double h, s, v, r2, g2, b2;
        rgb_to_hsv(r, g, b, &h, &s, &v);
        CHECK(h >= 0.0);
        CHECK(h < 360.0);
        hsv_to_rgb(h, s, v, &r2, &g2, &b2);
        CHECK(r2 == doctest::Approx(r).epsilon(1e-10));
        CHECK(g2 == doctest::Approx(g).epsilon(1e-10));
        CHECK(b2 == doctest::Approx(b).epsilon(1e-10));
    }
    // Pure red.
    double h, s, v;
    rgb_to_hsv(1.0, 0.0, 0.0, &h, &s, &v);
    CHECK(h == doctest::Approx(0.0));
    CHECK(s == doctest::Approx(1.0));
    CHECK(v == doctest::Approx(1.0));
}

TEST_CASE("compute_rgb_pca on constant images") {
    Image img(4, 4, 3);
    for (double& v : img.pixels) v = 0.3;
    const RgbPca pca = compute_rgb_pca({img, img}, 100);
    for (double ev : pca.eigvalues) CHECK(std::abs(ev) < 1e-12);
}

TEST_CASE("compute_rgb_pca recovers a diagonal covariance") {
    // Pixels with independent channels of variance 4, 1, 0.
    Prng rng(6);
    Image img(200, 200, 3);
    for (std::size_t r = 0; r < 200; ++r)
        for (std::size_t c = 0; c < 200; ++c) {
            img.at(r, c, 0) = 0.5 + 2.0 * rng.normal();
            img.at(r, c, 1) = 0.5 + 1.0 * rng.normal();
            img.at(r, c, 2) = 0.5;
        }
    const RgbPca pca = compute_rgb_pca({img}, 100000);
    CHECK(pca.eigvalues[0] == doctest::Approx(4.0).epsilon(0.05));
    CHECK(pca.eigvalues[1] == doctest::Approx(1.0).epsilon(0.05));
    CHECK(std::abs(pca.eigvalues[2]) < 1e-10);
    // Orthonormal eigenvectors.
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) {
            double dot = 0.0;
            for (int k = 0; k < 3; ++k)
                dot += pca.eigvectors[k][a] * pca.eigvectors[k][b];
            CHECK(std::abs(dot - (a == b ? 1.0 : 0.0)) < 1e-10);
        }
}

TEST_CASE("pairs file parsing") {
    TempFile f("test_data_pairs.txt", "a.ppm b.ppm 1\nc.ppm d.ppm 0\n\ne.ppm f.ppm 1\n");
    const auto pairs = load_pairs_file(f.path);
    REQUIRE(pairs.size() == 3);
    CHECK(pairs[0].path_a == "a.ppm");
    CHECK(pairs[0].same);
    CHECK_FALSE(pairs[1].same);
    CHECK(pairs[2].path_b == "f.ppm");

    TempFile bad("test_data_pairs_bad.txt", "a.ppm b.ppm 2\n");
    CHECK_THROWS_AS(load_pairs_file(bad.path), std::runtime_error);
}
