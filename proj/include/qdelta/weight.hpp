#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace qdelta {

using Vec3d = std::array<double, 3>;

enum class WeightProfile { Ball, Box };

inline std::string to_string(WeightProfile p) { return p == WeightProfile::Ball ? "ball" : "box"; }

inline WeightProfile parse_profile(const std::string& s) {
    if (s == "ball") return WeightProfile::Ball;
    if (s == "box") return WeightProfile::Box;
    throw std::invalid_argument("unknown weight profile '" + s + "' (expected ball or box)");
}

/// 1D mollifier e * exp(-1/(1-u^2)) on (-1, 1), peak value 1 at u = 0.
inline double bump1(double u) {
    double s = 1.0 - u * u;
    if (s <= 0.0) return 0.0;
    return std::exp(1.0 - 1.0 / s);
}

/// Smooth compactly supported weight. Ball: bump of |t - center| / radius.
/// Box: product of 1D bumps, one per axis, all with the same half-width.
struct WeightSpec {
    Vec3d center{0.0, 0.0, 0.0};
    double radius = 1.0;
    WeightProfile profile = WeightProfile::Ball;

    void validate() const {
        if (!(radius > 0.0) || !std::isfinite(radius)) throw std::invalid_argument("weight radius must be positive");
        for (double c : center)
            if (!std::isfinite(c)) throw std::invalid_argument("weight center must be finite");
    }

    double operator()(const Vec3d& t) const {
        double u0 = (t[0] - center[0]) / radius, u1 = (t[1] - center[1]) / radius, u2 = (t[2] - center[2]) / radius;
        if (profile == WeightProfile::Ball) return bump1(std::sqrt(u0 * u0 + u1 * u1 + u2 * u2));
        return bump1(u0) * bump1(u1) * bump1(u2);
    }

    double sup() const { return 1.0; }

    /// Axis-aligned bounding box of the support.
    std::array<Vec3d, 2> support_box() const {
        return {Vec3d{center[0] - radius, center[1] - radius, center[2] - radius},
                Vec3d{center[0] + radius, center[1] + radius, center[2] + radius}};
    }
};

inline double weight_eval(const WeightSpec& w, const Vec3d& t) { return w(t); }

}  // namespace qdelta
