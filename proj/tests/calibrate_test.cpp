#include "advcat/calibrate.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "advcat/rng.hpp"

using namespace advcat;

TEST(MakePalette, LatticeSizes) {
    EXPECT_EQ(make_palette_lattice(9).size(), 729u);
    std::vector<Vec3> corners = make_palette_lattice(2);
    EXPECT_EQ(corners.size(), 8u);
    for (const Vec3& c : corners) {
        EXPECT_TRUE(c.x == 0.0 || c.x == 1.0);
        EXPECT_TRUE(c.y == 0.0 || c.y == 1.0);
        EXPECT_TRUE(c.z == 0.0 || c.z == 1.0);
    }
}

TEST(MakePalette, DistinctValuesOnGrid) {
    const int n = 5;
    std::vector<Vec3> colors = make_palette_lattice(n);
    std::set<std::array<double, 3>> seen;
    for (const Vec3& c : colors) {
        for (double v : {c.x, c.y, c.z}) {
            double k = v * (n - 1);
            EXPECT_NEAR(k, std::round(k), 1e-12);
        }
        seen.insert({c.x, c.y, c.z});
    }
    EXPECT_EQ(seen.size(), colors.size());
}

TEST(MonomialCount, MatchesBinomial) {
    auto binom = [](int n, int k) {
        long long r = 1;
        for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
        return r;
    };
    for (int d = 0; d <= 9; ++d)
        EXPECT_EQ(static_cast<long long>(monomials_up_to(d).size()), binom(d + 3, 3)) << d;
}

TEST(FitColorModel, IdentityPairs) {
    std::vector<ColorPair> pairs;
    for (const Vec3& c : make_palette_lattice(6)) pairs.push_back({c, c});
    ColorModel m = fit_color_model(pairs, 1);
    EXPECT_LT(color_model_mse(m, pairs), 1e-16);
    Vec3 probe{0.31, 0.62, 0.17};
    Vec3 y = m.evaluate_raw(probe);
    EXPECT_NEAR(y.x, probe.x, 1e-7);
    EXPECT_NEAR(y.y, probe.y, 1e-7);
    EXPECT_NEAR(y.z, probe.z, 1e-7);
}

TEST(FitColorModel, RecoversRandomCubicGenerator) {
    Rng rng(17);
    ColorModel truth;
    truth.degree = 3;
    truth.terms = monomials_up_to(3);
    for (int i = 0; i < 3; ++i) {
        truth.coeffs[i].resize(truth.terms.size());
        for (double& w : truth.coeffs[i]) w = rng.uniform(-0.2, 0.2);
    }
    std::vector<ColorPair> pairs;
    for (const Vec3& c : make_palette_lattice(8)) pairs.push_back({c, truth.evaluate_raw(c)});
    // Generator output may leave [0,1]; that is fine for the fit itself.
    ColorModel fit = fit_color_model(pairs, 3);
    EXPECT_LT(color_model_mse(fit, pairs), 1e-12);
    for (int i = 0; i < 3; ++i)
        for (size_t t = 0; t < truth.coeffs[i].size(); ++t)
            EXPECT_NEAR(fit.coeffs[i][t], truth.coeffs[i][t], 1e-5);
}

TEST(FitColorModel, DegreeZeroFitsMeans) {
    Rng rng(33);
    std::vector<ColorPair> pairs;
    Vec3 mean{0, 0, 0};
    for (int i = 0; i < 50; ++i) {
        Vec3 x{rng.uniform(), rng.uniform(), rng.uniform()};
        Vec3 y{rng.uniform(), rng.uniform(), rng.uniform()};
        mean += y;
        pairs.push_back({x, y});
    }
    mean = mean / 50.0;
    ColorModel m = fit_color_model(pairs, 0);
    Vec3 y = m.evaluate_raw({0.5, 0.5, 0.5});
    EXPECT_NEAR(y.x, mean.x, 1e-9);
    EXPECT_NEAR(y.y, mean.y, 1e-9);
    EXPECT_NEAR(y.z, mean.z, 1e-9);
}

TEST(FitColorModel, TrainMseNonIncreasingInDegree) {
    std::vector<ColorPair> pairs =
        synthetic_printer_pairs(make_palette_lattice(7), 0.01, 99);
    double prev = std::numeric_limits<double>::infinity();
    for (int d = 0; d <= 6; ++d) {
        double mse = color_model_mse(fit_color_model(pairs, d), pairs);
        EXPECT_LE(mse, prev + 1e-15) << "degree " << d;
        prev = mse;
    }
}

TEST(FitColorModel, RejectsTooFewPairs) {
    std::vector<ColorPair> pairs;
    for (const Vec3& c : make_palette_lattice(2)) pairs.push_back({c, c});
    EXPECT_THROW(fit_color_model(pairs, 3), ValidationError);  // 20 monomials, 8 pairs
}

TEST(SelectDegree, NoiselessLinearPicksOne) {
    std::vector<ColorPair> pairs;
    for (const Vec3& c : make_palette_lattice(6))
        pairs.push_back({c, {0.2 + 0.5 * c.x, 0.1 + 0.7 * c.y, 0.3 * c.z}});
    Rng rng(5);
    EXPECT_EQ(select_degree(pairs, 4, 5, rng), 1);
}

TEST(SelectDegree, Degree6PrinterDataLandsNearSix) {
    // 729-color palette, 20 partitions, following the published protocol.
    std::vector<ColorPair> pairs =
        synthetic_printer_pairs(make_palette_lattice(9), 0.01, 2024);
    Rng rng(7);
    std::vector<double> curve = degree_mse_curve(pairs, 9, 20, rng);
    int best = 0;
    for (int d = 1; d <= 9; ++d)
        if (curve[d] < curve[best]) best = d;
    EXPECT_GE(best, 5);
    EXPECT_LE(best, 7);
    // Qualitative U-shape: both ends sit above the minimum.
    EXPECT_GT(curve[0], curve[best]);
    EXPECT_GT(curve[1], curve[best]);
    EXPECT_GT(curve[9], curve[best]);
}

TEST(ApplyColorModel, IdentityAndConstant) {
    Rng rng(3);
    Image tex(6, 4, 3);
    for (double& v : tex.data) v = rng.uniform();
    Image same = apply_color_model(ColorModel::identity(), tex);
    for (size_t i = 0; i < tex.data.size(); ++i) EXPECT_NEAR(same.data[i], tex.data[i], 1e-12);

    ColorModel constant;
    constant.degree = 0;
    constant.terms = monomials_up_to(0);
    constant.coeffs = {{{0.25}, {0.5}, {0.75}}};
    Image flat = apply_color_model(constant, tex);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 6; ++x) {
            EXPECT_DOUBLE_EQ(flat.at(x, y, 0), 0.25);
            EXPECT_DOUBLE_EQ(flat.at(x, y, 1), 0.5);
            EXPECT_DOUBLE_EQ(flat.at(x, y, 2), 0.75);
        }
}

TEST(ApplyColorModel, OutputsClamped) {
    ColorModel wild;
    wild.degree = 1;
    wild.terms = monomials_up_to(1);
    for (int i = 0; i < 3; ++i) wild.coeffs[i].assign(wild.terms.size(), 0.0);
    wild.coeffs[0][0] = 3.0;   // constant 3 -> clamps to 1
    wild.coeffs[1][0] = -2.0;  // constant -2 -> clamps to 0
    wild.coeffs[2][0] = 0.5;
    Image tex(2, 2, 3, 0.3);
    Image out = apply_color_model(wild, tex);
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 2; ++x) {
            EXPECT_DOUBLE_EQ(out.at(x, y, 0), 1.0);
            EXPECT_DOUBLE_EQ(out.at(x, y, 1), 0.0);
            EXPECT_DOUBLE_EQ(out.at(x, y, 2), 0.5);
        }
}

TEST(ApplyColorModel, GradientMatchesFiniteDifferences) {
    const ColorModel& model = synthetic_printer_truth();
    Rng rng(11);
    Image tex(5, 5, 3);
    for (double& v : tex.data) v = rng.uniform(0.1, 0.9);
    Image cotangent(5, 5, 3);
    for (double& v : cotangent.data) v = rng.uniform(-1.0, 1.0);

    Image grad = apply_color_model_backward(model, tex, cotangent);

    auto loss = [&](const Image& t) {
        Image out = apply_color_model(model, t);
        double acc = 0.0;
        for (size_t i = 0; i < out.data.size(); ++i) acc += out.data[i] * cotangent.data[i];
        return acc;
    };
    const double h = 1e-6;
    for (int trial = 0; trial < 30; ++trial) {
        size_t idx = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(tex.data.size()) - 1));
        Image plus = tex, minus = tex;
        plus.data[idx] += h;
        minus.data[idx] -= h;
        double fd = (loss(plus) - loss(minus)) / (2 * h);
        double denom = std::max({std::abs(fd), std::abs(grad.data[idx]), 1e-10});
        EXPECT_LT(std::abs(fd - grad.data[idx]) / denom, 1e-6);
    }
}

TEST(PairsCsv, RoundTrip) {
    std::vector<ColorPair> pairs =
        synthetic_printer_pairs(make_palette_lattice(3), 0.01, 1);
    std::string path = testing::TempDir() + "/pairs.csv";
    write_pairs_csv(pairs, path);
    std::vector<ColorPair> back = read_pairs_csv(path);
    ASSERT_EQ(back.size(), pairs.size());
    for (size_t i = 0; i < pairs.size(); ++i) {
        EXPECT_DOUBLE_EQ(back[i].digital.x, pairs[i].digital.x);
        EXPECT_DOUBLE_EQ(back[i].measured.z, pairs[i].measured.z);
    }
}
