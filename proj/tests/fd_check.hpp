#pragma once

#include <cmath>
#include <functional>

// Central-difference derivative of f with respect to *x.
inline double fd_derivative(const std::function<double()>& f, double* x,
                            double h = 1e-6) {
    double orig = *x;
    *x = orig + h;
    double fp = f();
    *x = orig - h;
    double fm = f();
    *x = orig;
    return (fp - fm) / (2.0 * h);
}

// Relative agreement with absolute floor, suitable for double-precision FD.
inline bool grad_close(double analytic, double numeric, double rel = 1e-5,
                       double abs_floor = 1e-7) {
    double diff = std::fabs(analytic - numeric);
    double scale = std::max(std::fabs(analytic), std::fabs(numeric));
    return diff <= abs_floor || diff <= rel * scale;
}
