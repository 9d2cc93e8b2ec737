#pragma once

#include <vector>

#include "stresskit/nd/tensor.hpp"

namespace stresskit::linalg {

// Symmetric eigendecomposition (cyclic Jacobi). Eigenvalues sorted descending;
// vectors.at(i, j) is component i of the eigenvector for values[j]. Each
// eigenvector is sign-fixed so its largest-magnitude component is positive.
struct SymEigen {
    std::vector<double> values;
    Matrix vectors;
};
SymEigen sym_eigen(Matrix a);

// Dense SPD solve via Cholesky. Throws DegenerateDataError if not positive
// definite.
std::vector<double> solve_spd(Matrix a, std::vector<double> b);

// SPD band matrix (lower storage): at(i, j) addresses A(i,j) with j <= i and
// i - j <= bandwidth. factorize() replaces the band with its Cholesky factor.
class BandedSpd {
public:
    BandedSpd(int n, int bandwidth);
    int size() const { return n_; }
    double& at(int i, int j);
    double at(int i, int j) const;
    void factorize();
    void solve(std::vector<double>& b) const;

private:
    int n_, bw_;
    std::vector<double> band_;  // band_[i*(bw+1) + d] = A(i, i-d)
    bool factored_ = false;
};

// Least-squares line y ~ intercept + slope * x.
struct LineFit {
    double intercept;
    double slope;
};
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace stresskit::linalg
