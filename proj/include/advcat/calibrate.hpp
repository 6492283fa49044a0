#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "advcat/common.hpp"
#include "advcat/image.hpp"
#include "advcat/rng.hpp"

namespace advcat {

constexpr double kRidgeEps = 1e-10;

// One digital/measured color pair, all channels in [0,1].
struct ColorPair {
    Vec3 digital;
    Vec3 measured;
};

// Exponent triple of one monomial x1^a1 x2^a2 x3^a3.
struct Monomial {
    int a1 = 0, a2 = 0, a3 = 0;
};

inline std::vector<Monomial> monomials_up_to(int degree) {
    if (degree < 0) throw DomainError("monomials_up_to: degree must be >= 0");
    std::vector<Monomial> out;
    for (int a1 = 0; a1 <= degree; ++a1)
        for (int a2 = 0; a2 + a1 <= degree; ++a2)
            for (int a3 = 0; a3 + a2 + a1 <= degree; ++a3) out.push_back({a1, a2, a3});
    return out;
}

// Polynomial RGB -> RGB regression model; one coefficient vector per output
// channel over all monomials with a1+a2+a3 <= degree.
struct ColorModel {
    int degree = 0;
    std::vector<Monomial> terms;
    std::array<std::vector<double>, 3> coeffs;

    Vec3 evaluate_raw(const Vec3& x) const {
        double features[3] = {0, 0, 0};
        for (size_t t = 0; t < terms.size(); ++t) {
            double mono = std::pow(x.x, terms[t].a1) * std::pow(x.y, terms[t].a2) *
                          std::pow(x.z, terms[t].a3);
            for (int i = 0; i < 3; ++i) features[i] += coeffs[i][t] * mono;
        }
        return {features[0], features[1], features[2]};
    }

    Vec3 evaluate(const Vec3& x) const {
        Vec3 y = evaluate_raw(x);
        return {clamp01(y.x), clamp01(y.y), clamp01(y.z)};
    }

    // Jacobian dy_i/dx_j of the unclamped polynomial.
    void jacobian(const Vec3& x, double J[3][3]) const {
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) J[i][j] = 0.0;
        for (size_t t = 0; t < terms.size(); ++t) {
            const Monomial& m = terms[t];
            double p1 = std::pow(x.x, m.a1), p2 = std::pow(x.y, m.a2), p3 = std::pow(x.z, m.a3);
            double d1 = m.a1 > 0 ? m.a1 * std::pow(x.x, m.a1 - 1) * p2 * p3 : 0.0;
            double d2 = m.a2 > 0 ? m.a2 * p1 * std::pow(x.y, m.a2 - 1) * p3 : 0.0;
            double d3 = m.a3 > 0 ? m.a3 * p1 * p2 * std::pow(x.z, m.a3 - 1) : 0.0;
            for (int i = 0; i < 3; ++i) {
                J[i][0] += coeffs[i][t] * d1;
                J[i][1] += coeffs[i][t] * d2;
                J[i][2] += coeffs[i][t] * d3;
            }
        }
    }

    static ColorModel identity() {
        ColorModel m;
        m.degree = 1;
        m.terms = monomials_up_to(1);
        for (int i = 0; i < 3; ++i) m.coeffs[i].assign(m.terms.size(), 0.0);
        for (size_t t = 0; t < m.terms.size(); ++t) {
            if (m.terms[t].a1 == 1 && m.terms[t].a2 == 0 && m.terms[t].a3 == 0) m.coeffs[0][t] = 1.0;
            if (m.terms[t].a1 == 0 && m.terms[t].a2 == 1 && m.terms[t].a3 == 0) m.coeffs[1][t] = 1.0;
            if (m.terms[t].a1 == 0 && m.terms[t].a2 == 0 && m.terms[t].a3 == 1) m.coeffs[2][t] = 1.0;
        }
        return m;
    }
};

// Uniform n^3 lattice over the RGB cube.
inline std::vector<Vec3> make_palette_lattice(int n_per_channel) {
    if (n_per_channel < 2) throw DomainError("make_palette_lattice: need n >= 2");
    std::vector<Vec3> colors;
    colors.reserve(static_cast<size_t>(n_per_channel) * n_per_channel * n_per_channel);
    const double step = 1.0 / (n_per_channel - 1);
    for (int r = 0; r < n_per_channel; ++r)
        for (int g = 0; g < n_per_channel; ++g)
            for (int b = 0; b < n_per_channel; ++b)
                colors.push_back({r * step, g * step, b * step});
    return colors;
}

// Per-channel least squares over the monomial features, solved by normal
// equations with a small ridge term for conditioning.
inline ColorModel fit_color_model(const std::vector<ColorPair>& pairs, int degree) {
    if (degree < 0) throw DomainError("fit_color_model: degree must be >= 0");
    std::vector<Monomial> terms = monomials_up_to(degree);
    const int p = static_cast<int>(terms.size());
    const int n = static_cast<int>(pairs.size());
    if (n < p) throw ValidationError("fit_color_model: fewer pairs than monomials");

    Eigen::MatrixXd A(n, p);
    for (int r = 0; r < n; ++r) {
        const Vec3& x = pairs[r].digital;
        for (int t = 0; t < p; ++t)
            A(r, t) = std::pow(x.x, terms[t].a1) * std::pow(x.y, terms[t].a2) *
                      std::pow(x.z, terms[t].a3);
    }
    Eigen::MatrixXd gram = A.transpose() * A;
    gram.diagonal().array() += kRidgeEps;
    Eigen::LDLT<Eigen::MatrixXd> solver(gram);
    if (solver.info() != Eigen::Success)
        throw NumericError("fit_color_model: normal equations not solvable");

    ColorModel model;
    model.degree = degree;
    model.terms = std::move(terms);
    for (int i = 0; i < 3; ++i) {
        Eigen::VectorXd y(n);
        for (int r = 0; r < n; ++r) {
            const Vec3& m = pairs[r].measured;
            y(r) = i == 0 ? m.x : (i == 1 ? m.y : m.z);
        }
        Eigen::VectorXd w = solver.solve(A.transpose() * y);
        if (!w.allFinite()) throw NumericError("fit_color_model: rank-deficient design");
        model.coeffs[i].assign(w.data(), w.data() + p);
    }
    return model;
}

// Mean squared error per scalar channel of the unclamped prediction.
inline double color_model_mse(const ColorModel& model, const std::vector<ColorPair>& pairs) {
    double acc = 0.0;
    for (const ColorPair& pr : pairs) {
        Vec3 y = model.evaluate_raw(pr.digital);
        Vec3 d = y - pr.measured;
        acc += d.squared_norm();
    }
    return acc / (3.0 * static_cast<double>(pairs.size()));
}

// Validation-MSE curve over degrees 0..d_max, averaged over `splits` random
// 50/50 partitions (the same partitions are reused for every degree).
inline std::vector<double> degree_mse_curve(const std::vector<ColorPair>& pairs, int d_max,
                                            int splits, Rng& rng) {
    if (splits < 1) throw DomainError("degree_mse_curve: splits must be >= 1");
    const int n = static_cast<int>(pairs.size());
    std::vector<std::vector<int>> partitions(splits);
    for (int s = 0; s < splits; ++s) {
        std::vector<int>& idx = partitions[s];
        idx.resize(n);
        std::iota(idx.begin(), idx.end(), 0);
        for (int i = n - 1; i > 0; --i)
            std::swap(idx[i], idx[rng.uniform_int(0, i)]);
    }
    std::vector<double> curve(d_max + 1, std::numeric_limits<double>::infinity());
    for (int d = 0; d <= d_max; ++d) {
        size_t n_terms = monomials_up_to(d).size();
        if (static_cast<size_t>(n / 2) < n_terms) continue;  // infeasible degree
        double acc = 0.0;
        for (int s = 0; s < splits; ++s) {
            const std::vector<int>& idx = partitions[s];
            int half = n / 2;
            std::vector<ColorPair> train, val;
            train.reserve(half);
            val.reserve(n - half);
            for (int i = 0; i < n; ++i)
                (i < half ? train : val).push_back(pairs[idx[i]]);
            ColorModel m = fit_color_model(train, d);
            acc += color_model_mse(m, val);
        }
        curve[d] = acc / splits;
    }
    return curve;
}

// Degree with the smallest average validation MSE; ties break to smaller d.
inline int select_degree(const std::vector<ColorPair>& pairs, int d_max, int splits, Rng& rng) {
    std::vector<double> curve = degree_mse_curve(pairs, d_max, splits, rng);
    int best = 0;
    for (int d = 1; d <= d_max; ++d)
        if (curve[d] < curve[best]) best = d;
    return best;
}

// Per-pixel polynomial evaluation, clamped to [0,1].
inline Image apply_color_model(const ColorModel& model, const Image& texture) {
    if (texture.channels < 3) throw InvalidInputError("apply_color_model: need RGB image");
    Image out = texture;
    for (int y = 0; y < texture.height; ++y) {
        for (int x = 0; x < texture.width; ++x) {
            Vec3 c{texture.at(x, y, 0), texture.at(x, y, 1), texture.at(x, y, 2)};
            Vec3 m = model.evaluate(c);
            out.at(x, y, 0) = m.x;
            out.at(x, y, 1) = m.y;
            out.at(x, y, 2) = m.z;
        }
    }
    return out;
}

// Backward of apply_color_model; the clamp gates the polynomial Jacobian.
inline Image apply_color_model_backward(const ColorModel& model, const Image& texture_in,
                                        const Image& grad_out) {
    Image grad_in(texture_in.width, texture_in.height, texture_in.channels, 0.0);
    double J[3][3];
    for (int y = 0; y < texture_in.height; ++y) {
        for (int x = 0; x < texture_in.width; ++x) {
            Vec3 c{texture_in.at(x, y, 0), texture_in.at(x, y, 1), texture_in.at(x, y, 2)};
            Vec3 raw = model.evaluate_raw(c);
            double gate[3] = {raw.x > 0.0 && raw.x < 1.0 ? 1.0 : 0.0,
                              raw.y > 0.0 && raw.y < 1.0 ? 1.0 : 0.0,
                              raw.z > 0.0 && raw.z < 1.0 ? 1.0 : 0.0};
            model.jacobian(c, J);
            for (int j = 0; j < 3; ++j) {
                double acc = 0.0;
                for (int i = 0; i < 3; ++i) acc += gate[i] * grad_out.at(x, y, i) * J[i][j];
                grad_in.at(x, y, j) = acc;
            }
        }
    }
    return grad_in;
}

// ---------------------------------------------------------------------------
// Synthetic printer: a fixed smooth degree-6 map plus Gaussian noise, used
// when no measured pairs are available.
// ---------------------------------------------------------------------------

namespace detail {

// Shifted Legendre polynomials on [0,1]; orthogonal to all lower degrees, so
// the printer map keeps genuine degree-5/6 structure a lower-degree fit
// cannot absorb.
inline double legendre3(double x) { double t = 2 * x - 1; return (5 * t * t * t - 3 * t) / 2; }
inline double legendre4(double x) {
    double t = 2 * x - 1, t2 = t * t;
    return (35 * t2 * t2 - 30 * t2 + 3) / 8;
}
inline double legendre5(double x) {
    double t = 2 * x - 1, t2 = t * t;
    return (63 * t2 * t2 * t - 70 * t2 * t + 15 * t) / 8;
}
inline double legendre6(double x) {
    double t = 2 * x - 1, t2 = t * t;
    return (231 * t2 * t2 * t2 - 315 * t2 * t2 + 105 * t2 - 5) / 16;
}

inline Vec3 printer_response(const Vec3& c) {
    double r = c.x, g = c.y, b = c.z;
    double yr = 0.07 + 0.68 * r + 0.10 * g + 0.04 * b - 0.10 * r * r + 0.030 * legendre5(r) +
                0.040 * legendre6(r) + 0.018 * legendre4(g) + 0.020 * legendre3(b);
    double yg = 0.06 + 0.70 * g + 0.08 * r + 0.05 * b - 0.08 * g * g + 0.030 * legendre5(g) +
                0.038 * legendre6(b) + 0.020 * legendre4(r) + 0.020 * legendre3(g);
    double yb = 0.09 + 0.66 * b + 0.06 * r + 0.07 * g - 0.09 * b * b + 0.032 * legendre5(b) +
                0.042 * legendre6(g) + 0.016 * legendre4(b) + 0.018 * legendre3(r);
    return {yr, yg, yb};
}

}  // namespace detail

inline const ColorModel& synthetic_printer_truth() {
    static const ColorModel model = [] {
        // Express the fixed degree-6 response in the monomial basis by an
        // exact projection (the response is itself degree 6).
        std::vector<ColorPair> samples;
        for (const Vec3& x : make_palette_lattice(9))
            samples.push_back({x, detail::printer_response(x)});
        return fit_color_model(samples, 6);
    }();
    return model;
}

inline std::vector<ColorPair> synthetic_printer_pairs(const std::vector<Vec3>& digital,
                                                      double noise_sigma, uint64_t seed) {
    const ColorModel& truth = synthetic_printer_truth();
    Rng rng(seed);
    std::vector<ColorPair> pairs;
    pairs.reserve(digital.size());
    for (const Vec3& x : digital) {
        Vec3 y = truth.evaluate_raw(x);
        y.x = clamp01(y.x + rng.normal() * noise_sigma);
        y.y = clamp01(y.y + rng.normal() * noise_sigma);
        y.z = clamp01(y.z + rng.normal() * noise_sigma);
        pairs.push_back({x, y});
    }
    return pairs;
}

// ---------------------------------------------------------------------------
// Pairs CSV: columns R,G,B,R*,G*,B* in [0,1].
// ---------------------------------------------------------------------------

inline void write_pairs_csv(const std::vector<ColorPair>& pairs, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("write_pairs_csv: cannot open " + path);
    out << "R,G,B,R*,G*,B*\n";
    out.precision(17);
    for (const ColorPair& p : pairs)
        out << p.digital.x << ',' << p.digital.y << ',' << p.digital.z << ','
            << p.measured.x << ',' << p.measured.y << ',' << p.measured.z << '\n';
}

inline std::vector<ColorPair> read_pairs_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("read_pairs_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw FormatError("read_pairs_csv: empty file " + path);
    std::vector<ColorPair> pairs;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        double v[6];
        char comma;
        for (int i = 0; i < 6; ++i) {
            if (!(ss >> v[i])) throw FormatError("read_pairs_csv: bad row in " + path);
            if (i < 5 && !(ss >> comma)) throw FormatError("read_pairs_csv: bad row in " + path);
            if (!std::isfinite(v[i]) || v[i] < 0.0 || v[i] > 1.0)
                throw InvalidInputError("read_pairs_csv: channel outside [0,1] in " + path);
        }
        pairs.push_back({{v[0], v[1], v[2]}, {v[3], v[4], v[5]}});
    }
    return pairs;
}

}  // namespace advcat
