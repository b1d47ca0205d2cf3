#pragma once

#include <stdexcept>

namespace qbsde {

/// Uniform partition of [0, T] into m steps.
struct TimeGrid {
    double T = 1.0;
    int m = 200;

    double dt() const { return T / m; }
    double t(int i) const { return (T * i) / m; }

    void check() const {
        if (!(T > 0.0)) throw std::invalid_argument("TimeGrid: T must be positive");
        if (m < 1) throw std::invalid_argument("TimeGrid: m must be at least 1");
    }
};

} // namespace qbsde
