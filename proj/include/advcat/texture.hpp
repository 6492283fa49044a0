#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "advcat/common.hpp"
#include "advcat/image.hpp"
#include "advcat/rng.hpp"

namespace advcat {

// Trainable-seed clamp and probability floor before log.
constexpr double kEpsU = 1e-6;
constexpr double kEpsP = 1e-12;

// Discrete color set the texture may use.
struct Palette {
    std::vector<Vec3> colors;

    int size() const { return static_cast<int>(colors.size()); }

    void validate() const {
        if (colors.empty()) throw ValidationError("palette: needs at least one color");
        for (const Vec3& c : colors) {
            if (!c.finite()) throw InvalidInputError("palette: non-finite channel");
            if (c.x < 0.0 || c.x > 1.0 || c.y < 0.0 || c.y > 1.0 || c.z < 0.0 || c.z > 1.0)
                throw ValidationError("palette: channel outside [0,1]");
        }
        for (size_t i = 0; i < colors.size(); ++i)
            for (size_t j = i + 1; j < colors.size(); ++j)
                if (colors[i].x == colors[j].x && colors[i].y == colors[j].y &&
                    colors[i].z == colors[j].z)
                    throw ValidationError("palette: duplicate color");
    }

    // Largest pairwise color distance; 0 for a single color.
    double diameter() const {
        double d = 0.0;
        for (size_t i = 0; i < colors.size(); ++i)
            for (size_t j = i + 1; j < colors.size(); ++j)
                d = std::max(d, (colors[i] - colors[j]).norm());
        return d;
    }
};

// Voronoi control points, one group of points_per_color per palette color.
// Coordinates are texture-map pixel units and may wander outside the map.
struct ControlPoints {
    int num_colors = 0;
    int points_per_color = 0;
    double bound_w = 0.0;
    double bound_h = 0.0;
    std::vector<Vec2> coords;  // row-major: color-major, point-minor

    Vec2& at(int color, int point) {
        return coords[static_cast<size_t>(color) * points_per_color + point];
    }
    Vec2 at(int color, int point) const {
        return coords[static_cast<size_t>(color) * points_per_color + point];
    }

    void validate() const {
        if (num_colors < 1 || points_per_color < 1)
            throw ValidationError("control points: need at least one color and one point");
        if (coords.size() != static_cast<size_t>(num_colors) * points_per_color)
            throw ValidationError("control points: coordinate count mismatch");
        for (const Vec2& p : coords)
            if (!p.finite()) throw InvalidInputError("control points: non-finite coordinate");
    }

    static ControlPoints random(int num_colors, int points_per_color, double w, double h,
                                Rng& rng) {
        ControlPoints cp;
        cp.num_colors = num_colors;
        cp.points_per_color = points_per_color;
        cp.bound_w = w;
        cp.bound_h = h;
        cp.coords.resize(static_cast<size_t>(num_colors) * points_per_color);
        for (Vec2& p : cp.coords) {
            p.x = rng.uniform(0.0, w);
            p.y = rng.uniform(0.0, h);
        }
        return cp;
    }
};

// Per-pixel categorical distribution over the palette, stored N_C x H x W.
using ProbabilityMap = Field3;

// Mixed fixed/trainable uniform seeds feeding the Gumbel transform. In
// shared-per-color mode the u fields are N_C x 1 x 1 and broadcast.
struct GumbelField {
    Field3 u_fix;
    Field3 u_train;
    double lambda_mix = 0.7;

    int num_colors() const { return u_fix.channels; }
    bool shared_per_color() const { return u_fix.height == 1 && u_fix.width == 1; }

    double fix_at(int c, int y, int x) const {
        return u_fix.at(c, u_fix.height == 1 ? 0 : y, u_fix.width == 1 ? 0 : x);
    }
    double train_at(int c, int y, int x) const {
        return u_train.at(c, u_train.height == 1 ? 0 : y, u_train.width == 1 ? 0 : x);
    }

    static GumbelField random(int num_colors, int height, int width, double lambda_mix,
                              Rng& rng, bool shared_per_color = false) {
        if (lambda_mix < 0.0 || lambda_mix > 1.0)
            throw DomainError("gumbel field: lambda outside [0,1]");
        int h = shared_per_color ? 1 : height;
        int w = shared_per_color ? 1 : width;
        GumbelField f;
        f.lambda_mix = lambda_mix;
        f.u_fix = Field3(num_colors, h, w);
        f.u_train = Field3(num_colors, h, w);
        for (double& v : f.u_fix.data) v = rng.uniform_open();
        for (double& v : f.u_train.data) v = std::clamp(rng.uniform_open(), kEpsU, 1.0 - kEpsU);
        return f;
    }

    void clamp_train() {
        for (double& v : u_train.data) v = std::clamp(v, kEpsU, 1.0 - kEpsU);
    }
};

enum class TextureMode { Soft, Hard };

struct TextureMap {
    Image pixels;  // H x W RGB
    TextureMode mode = TextureMode::Soft;
};

// All trainable state of the texture generator.
struct TexParams {
    ControlPoints control_points;
    GumbelField gumbel;
};

namespace detail {

// log w_i = logsumexp_j(-|x - b_ij| / alpha), numerically safe for tiny alpha.
inline void log_weights_at(const ControlPoints& cp, double alpha, double px, double py,
                           double* log_w) {
    const int nc = cp.num_colors;
    const int np = cp.points_per_color;
    for (int i = 0; i < nc; ++i) {
        double m = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < np; ++j) {
            Vec2 b = cp.at(i, j);
            double d = std::hypot(px - b.x, py - b.y);
            m = std::max(m, -d / alpha);
        }
        double acc = 0.0;
        for (int j = 0; j < np; ++j) {
            Vec2 b = cp.at(i, j);
            double d = std::hypot(px - b.x, py - b.y);
            acc += std::exp(-d / alpha - m);
        }
        log_w[i] = m + std::log(acc);
    }
}

}  // namespace detail

// Soft Voronoi probability map: p_k = w_k / sum_i w_i with
// w_i = sum_j exp(-|x - b_ij| / alpha). Computed in log space so the
// hard-Voronoi limit alpha -> 0 stays well defined.
inline ProbabilityMap prob_map(const ControlPoints& cp, const Palette& palette, double alpha,
                               int height, int width) {
    cp.validate();
    palette.validate();
    if (palette.size() != cp.num_colors)
        throw ValidationError("prob_map: palette size differs from control point colors");
    if (!(alpha > 0.0)) throw DomainError("prob_map: alpha must be positive");
    if (height <= 0 || width <= 0) throw DomainError("prob_map: size must be positive");

    const int nc = cp.num_colors;
    ProbabilityMap probs(nc, height, width);
    std::vector<double> log_w(nc);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            double px = x + 0.5, py = y + 0.5;
            detail::log_weights_at(cp, alpha, px, py, log_w.data());
            double m = *std::max_element(log_w.begin(), log_w.end());
            double denom = 0.0;
            for (int i = 0; i < nc; ++i) denom += std::exp(log_w[i] - m);
            for (int i = 0; i < nc; ++i)
                probs.at(i, y, x) = std::exp(log_w[i] - m) / denom;
        }
    }
    return probs;
}

// Cotangent of prob_map with respect to every control point coordinate.
// probs must be the matching forward output.
inline std::vector<Vec2> prob_map_backward(const ControlPoints& cp, double alpha,
                                           const ProbabilityMap& probs,
                                           const Field3& grad_probs) {
    const int nc = cp.num_colors;
    const int np = cp.points_per_color;
    std::vector<Vec2> grad(static_cast<size_t>(nc) * np, Vec2{0.0, 0.0});
    std::vector<double> log_w(nc), dlog_w(nc);
    for (int y = 0; y < probs.height; ++y) {
        for (int x = 0; x < probs.width; ++x) {
            double px = x + 0.5, py = y + 0.5;
            // softmax vjp: dL/dlog w_i = p_i (dL/dp_i - sum_k p_k dL/dp_k)
            double mean = 0.0;
            for (int k = 0; k < nc; ++k) mean += probs.at(k, y, x) * grad_probs.at(k, y, x);
            bool any = false;
            for (int i = 0; i < nc; ++i) {
                dlog_w[i] = probs.at(i, y, x) * (grad_probs.at(i, y, x) - mean);
                if (dlog_w[i] != 0.0) any = true;
            }
            if (!any) continue;
            detail::log_weights_at(cp, alpha, px, py, log_w.data());
            for (int i = 0; i < nc; ++i) {
                if (dlog_w[i] == 0.0) continue;
                for (int j = 0; j < np; ++j) {
                    Vec2 b = cp.at(i, j);
                    double dx = px - b.x, dy = py - b.y;
                    double d = std::hypot(dx, dy);
                    if (d < 1e-12) continue;  // kernel kink at the control point itself
                    double s = std::exp(-d / alpha - log_w[i]);
                    double coef = dlog_w[i] * s / (alpha * d);
                    grad[static_cast<size_t>(i) * np + j] += Vec2{coef * dx, coef * dy};
                }
            }
        }
    }
    return grad;
}

// Uniform m x m box smoothing with replicate border padding; replicate
// padding keeps each pixel's distribution normalized.
inline ProbabilityMap smooth_prob_map(const ProbabilityMap& p, int m) {
    if (m < 1 || m % 2 == 0) throw DomainError("smooth_prob_map: kernel size must be odd and >= 1");
    if (m == 1) return p;
    const int r = m / 2;
    const double inv = 1.0 / (m * m);
    ProbabilityMap out(p.channels, p.height, p.width);
    for (int c = 0; c < p.channels; ++c) {
        for (int y = 0; y < p.height; ++y) {
            for (int x = 0; x < p.width; ++x) {
                double acc = 0.0;
                for (int ky = -r; ky <= r; ++ky) {
                    int yy = std::clamp(y + ky, 0, p.height - 1);
                    for (int kx = -r; kx <= r; ++kx) {
                        int xx = std::clamp(x + kx, 0, p.width - 1);
                        acc += p.at(c, yy, xx);
                    }
                }
                out.at(c, y, x) = acc * inv;
            }
        }
    }
    return out;
}

// Adjoint of smooth_prob_map (scatter with the same clamped taps).
inline Field3 smooth_prob_map_backward(const Field3& grad_out, int m) {
    if (m < 1 || m % 2 == 0) throw DomainError("smooth_prob_map: kernel size must be odd and >= 1");
    if (m == 1) return grad_out;
    const int r = m / 2;
    const double inv = 1.0 / (m * m);
    Field3 grad_in(grad_out.channels, grad_out.height, grad_out.width);
    for (int c = 0; c < grad_out.channels; ++c) {
        for (int y = 0; y < grad_out.height; ++y) {
            for (int x = 0; x < grad_out.width; ++x) {
                double g = grad_out.at(c, y, x) * inv;
                if (g == 0.0) continue;
                for (int ky = -r; ky <= r; ++ky) {
                    int yy = std::clamp(y + ky, 0, grad_out.height - 1);
                    for (int kx = -r; kx <= r; ++kx) {
                        int xx = std::clamp(x + kx, 0, grad_out.width - 1);
                        grad_in.at(c, yy, xx) += g;
                    }
                }
            }
        }
    }
    return grad_in;
}

// g = -log(-log(lambda * u_fix + (1 - lambda) * u_train)), broadcast over
// the full texture size when the field is shared per color.
inline Field3 gumbel_values(const GumbelField& f, int height, int width) {
    const int nc = f.num_colors();
    Field3 g(nc, height, width);
    for (int c = 0; c < nc; ++c) {
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) {
                double u_train = std::clamp(f.train_at(c, y, x), kEpsU, 1.0 - kEpsU);
                double mixed = f.lambda_mix * f.fix_at(c, y, x) +
                               (1.0 - f.lambda_mix) * u_train;
                if (!(mixed > 0.0 && mixed < 1.0))
                    throw NumericError("gumbel_values: mixed seed left (0,1)");
                g.at(c, y, x) = -std::log(-std::log(mixed));
            }
        }
    }
    return g;
}

// Cotangent with respect to u_train, shaped like the stored field (entries
// collapse by summation in shared-per-color mode).
inline Field3 gumbel_values_backward(const GumbelField& f, const Field3& grad_g) {
    Field3 grad(f.u_train.channels, f.u_train.height, f.u_train.width);
    const double lam = f.lambda_mix;
    for (int c = 0; c < grad_g.channels; ++c) {
        for (int y = 0; y < grad_g.height; ++y) {
            for (int x = 0; x < grad_g.width; ++x) {
                double ut = f.train_at(c, y, x);
                if (ut < kEpsU || ut > 1.0 - kEpsU) continue;  // clamp subgradient
                double mixed = lam * f.fix_at(c, y, x) + (1.0 - lam) * ut;
                double coef = (1.0 - lam) / (mixed * (-std::log(mixed)));
                grad.at(c, grad.height == 1 ? 0 : y, grad.width == 1 ? 0 : x) +=
                    grad_g.at(c, y, x) * coef;
            }
        }
    }
    return grad;
}

struct SoftSample {
    TextureMap texture;
    Field3 weights;  // cached softmax weights for the backward pass
};

// Gumbel-softmax color blend: c(x) = sum_i c_i softmax_i((g_i + log p_i)/tau).
inline SoftSample soft_sample(const ProbabilityMap& p, const Field3& g, const Palette& palette,
                              double tau) {
    if (!(tau > 0.0)) throw DomainError("soft_sample: tau must be positive");
    if (!p.same_shape(g)) throw ValidationError("soft_sample: field shapes differ");
    if (palette.size() != p.channels)
        throw ValidationError("soft_sample: palette size differs from map channels");
    const int nc = p.channels;
    SoftSample out;
    out.texture.mode = TextureMode::Soft;
    out.texture.pixels = Image(p.width, p.height, 3);
    out.weights = Field3(nc, p.height, p.width);
    std::vector<double> z(nc);
    for (int y = 0; y < p.height; ++y) {
        for (int x = 0; x < p.width; ++x) {
            double zmax = -std::numeric_limits<double>::infinity();
            for (int i = 0; i < nc; ++i) {
                double pi = std::max(p.at(i, y, x), kEpsP);
                z[i] = (g.at(i, y, x) + std::log(pi)) / tau;
                zmax = std::max(zmax, z[i]);
            }
            double denom = 0.0;
            for (int i = 0; i < nc; ++i) denom += std::exp(z[i] - zmax);
            Vec3 color{0.0, 0.0, 0.0};
            for (int i = 0; i < nc; ++i) {
                double s = std::exp(z[i] - zmax) / denom;
                out.weights.at(i, y, x) = s;
                color += palette.colors[i] * s;
            }
            out.texture.pixels.at(x, y, 0) = color.x;
            out.texture.pixels.at(x, y, 1) = color.y;
            out.texture.pixels.at(x, y, 2) = color.z;
        }
    }
    return out;
}

struct SoftSampleGrad {
    Field3 grad_probs;
    Field3 grad_g;
};

// Backward of soft_sample: pushes a texture cotangent to the probability map
// and the Gumbel values. p must be the forward input, sample the forward output.
inline SoftSampleGrad soft_sample_backward(const ProbabilityMap& p, const Palette& palette,
                                           double tau, const SoftSample& sample,
                                           const Image& grad_texture) {
    const int nc = p.channels;
    SoftSampleGrad out;
    out.grad_probs = Field3(nc, p.height, p.width);
    out.grad_g = Field3(nc, p.height, p.width);
    std::vector<double> a(nc);
    for (int y = 0; y < p.height; ++y) {
        for (int x = 0; x < p.width; ++x) {
            Vec3 gt{grad_texture.at(x, y, 0), grad_texture.at(x, y, 1), grad_texture.at(x, y, 2)};
            double mean = 0.0;
            bool any = false;
            for (int i = 0; i < nc; ++i) {
                a[i] = palette.colors[i].dot(gt);
                double s = sample.weights.at(i, y, x);
                mean += s * a[i];
                any = any || a[i] != 0.0;
            }
            if (!any) continue;
            for (int i = 0; i < nc; ++i) {
                double s = sample.weights.at(i, y, x);
                double dz = s * (a[i] - mean);
                out.grad_g.at(i, y, x) = dz / tau;
                double pi = p.at(i, y, x);
                out.grad_probs.at(i, y, x) = pi > kEpsP ? dz / (tau * pi) : 0.0;
            }
        }
    }
    return out;
}

// Discrete evaluation-time sampling: argmax_i (g_i + log p_i); ties break to
// the lowest color index.
inline TextureMap hard_sample(const ProbabilityMap& p, const Field3& g, const Palette& palette) {
    if (!p.same_shape(g)) throw ValidationError("hard_sample: field shapes differ");
    if (palette.size() != p.channels)
        throw ValidationError("hard_sample: palette size differs from map channels");
    TextureMap tex;
    tex.mode = TextureMode::Hard;
    tex.pixels = Image(p.width, p.height, 3);
    for (int y = 0; y < p.height; ++y) {
        for (int x = 0; x < p.width; ++x) {
            int best = 0;
            double best_v = -std::numeric_limits<double>::infinity();
            for (int i = 0; i < p.channels; ++i) {
                double v = g.at(i, y, x) + std::log(std::max(p.at(i, y, x), kEpsP));
                if (v > best_v) {
                    best_v = v;
                    best = i;
                }
            }
            tex.pixels.at(x, y, 0) = palette.colors[best].x;
            tex.pixels.at(x, y, 1) = palette.colors[best].y;
            tex.pixels.at(x, y, 2) = palette.colors[best].z;
        }
    }
    return tex;
}

}  // namespace advcat
