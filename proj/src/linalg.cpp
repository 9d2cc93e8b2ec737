#include "stresskit/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "stresskit/errors.hpp"

namespace stresskit::linalg {

SymEigen sym_eigen(Matrix a) {
    const int n = a.rows();
    if (a.cols() != n) throw ShapeError("sym_eigen expects a square matrix");
    Matrix v({n, n});
    for (int i = 0; i < n; ++i) v.at(i, i) = 1.0;

    // Cyclic Jacobi sweeps until off-diagonal mass is negligible.
    const int max_sweeps = 100;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += a.at(p, q) * a.at(p, q);
        if (off < 1e-26 * (n > 1 ? n : 1)) break;

        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                double apq = a.at(p, q);
                if (std::abs(apq) < 1e-300) continue;
                double app = a.at(p, p), aqq = a.at(q, q);
                double tau = (aqq - app) / (2.0 * apq);
                double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                double c = 1.0 / std::sqrt(1.0 + t * t);
                double s = t * c;
                for (int i = 0; i < n; ++i) {
                    double aip = a.at(i, p), aiq = a.at(i, q);
                    a.at(i, p) = c * aip - s * aiq;
                    a.at(i, q) = s * aip + c * aiq;
                }
                for (int i = 0; i < n; ++i) {
                    double api = a.at(p, i), aqi = a.at(q, i);
                    a.at(p, i) = c * api - s * aqi;
                    a.at(q, i) = s * api + c * aqi;
                }
                for (int i = 0; i < n; ++i) {
                    double vip = v.at(i, p), viq = v.at(i, q);
                    v.at(i, p) = c * vip - s * viq;
                    v.at(i, q) = s * vip + c * viq;
                }
            }
        }
    }

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> diag(n);
    for (int i = 0; i < n; ++i) diag[i] = a.at(i, i);
    std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return diag[x] > diag[y]; });

    SymEigen out;
    out.values.resize(n);
    out.vectors = Matrix({n, n});
    for (int j = 0; j < n; ++j) {
        int src = order[j];
        out.values[j] = diag[src];
        // deterministic sign: largest-|component| positive, first index on ties
        int arg = 0;
        double best = std::abs(v.at(0, src));
        for (int i = 1; i < n; ++i) {
            double m = std::abs(v.at(i, src));
            if (m > best) {
                best = m;
                arg = i;
            }
        }
        double sgn = v.at(arg, src) < 0.0 ? -1.0 : 1.0;
        for (int i = 0; i < n; ++i) out.vectors.at(i, j) = sgn * v.at(i, src);
    }
    return out;
}

std::vector<double> solve_spd(Matrix a, std::vector<double> b) {
    const int n = a.rows();
    if (a.cols() != n || static_cast<int>(b.size()) != n) throw ShapeError("solve_spd dims");
    // in-place lower Cholesky
    for (int j = 0; j < n; ++j) {
        double d = a.at(j, j);
        for (int k = 0; k < j; ++k) d -= a.at(j, k) * a.at(j, k);
        if (d <= 0.0 || !std::isfinite(d)) throw DegenerateDataError("matrix not positive definite");
        double ljj = std::sqrt(d);
        a.at(j, j) = ljj;
        for (int i = j + 1; i < n; ++i) {
            double s = a.at(i, j);
            for (int k = 0; k < j; ++k) s -= a.at(i, k) * a.at(j, k);
            a.at(i, j) = s / ljj;
        }
    }
    for (int i = 0; i < n; ++i) {
        double s = b[i];
        for (int k = 0; k < i; ++k) s -= a.at(i, k) * b[k];
        b[i] = s / a.at(i, i);
    }
    for (int i = n - 1; i >= 0; --i) {
        double s = b[i];
        for (int k = i + 1; k < n; ++k) s -= a.at(k, i) * b[k];
        b[i] = s / a.at(i, i);
    }
    return b;
}

BandedSpd::BandedSpd(int n, int bandwidth) : n_(n), bw_(bandwidth) {
    if (n <= 0 || bandwidth < 0) throw ConfigError("bad band matrix dims");
    band_.assign(static_cast<std::size_t>(n) * (bw_ + 1), 0.0);
}

double& BandedSpd::at(int i, int j) {
    int d = i - j;
    if (d < 0 || d > bw_ || i >= n_) throw ShapeError("band index out of range");
    return band_[static_cast<std::size_t>(i) * (bw_ + 1) + d];
}

double BandedSpd::at(int i, int j) const {
    int d = i - j;
    if (d < 0 || d > bw_ || i >= n_) throw ShapeError("band index out of range");
    return band_[static_cast<std::size_t>(i) * (bw_ + 1) + d];
}

void BandedSpd::factorize() {
    for (int j = 0; j < n_; ++j) {
        double d = at(j, j);
        int k0 = std::max(0, j - bw_);
        for (int k = k0; k < j; ++k) d -= at(j, k) * at(j, k);
        if (d <= 0.0 || !std::isfinite(d)) throw DegenerateDataError("band matrix not positive definite");
        double ljj = std::sqrt(d);
        at(j, j) = ljj;
        int imax = std::min(n_ - 1, j + bw_);
        for (int i = j + 1; i <= imax; ++i) {
            double s = at(i, j);
            int kk0 = std::max({0, i - bw_, j - bw_});
            for (int k = kk0; k < j; ++k)
                if (i - k <= bw_) s -= at(i, k) * at(j, k);
            at(i, j) = s / ljj;
        }
    }
    factored_ = true;
}

void BandedSpd::solve(std::vector<double>& b) const {
    if (!factored_) throw ConfigError("BandedSpd::solve before factorize");
    if (static_cast<int>(b.size()) != n_) throw ShapeError("band solve rhs size");
    for (int i = 0; i < n_; ++i) {
        double s = b[i];
        int k0 = std::max(0, i - bw_);
        for (int k = k0; k < i; ++k) s -= at(i, k) * b[k];
        b[i] = s / at(i, i);
    }
    for (int i = n_ - 1; i >= 0; --i) {
        double s = b[i];
        int kmax = std::min(n_ - 1, i + bw_);
        for (int k = i + 1; k <= kmax; ++k) s -= at(k, i) * b[k];
        b[i] = s / at(i, i);
    }
}

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw InsufficientDataError("fit_line needs >= 2 points");
    double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    double denom = n * sxx - sx * sx;
    if (denom == 0.0) throw DegenerateDataError("fit_line: degenerate x values");
    LineFit f;
    f.slope = (n * sxy - sx * sy) / denom;
    f.intercept = (sy - f.slope * sx) / n;
    return f;
}

}  // namespace stresskit::linalg
