#include <doctest.h>

#include <cmath>

#include "stresskit/errors.hpp"
#include "stresskit/linalg.hpp"
#include "stresskit/rng.hpp"
#include "test_util.hpp"

using namespace stresskit;

TEST_SUITE("linalg") {

TEST_CASE("jacobi eigen of a 2x2 with known spectrum") {
    // [[2,1],[1,2]] -> eigenvalues 3, 1
    Matrix a({2, 2}, {2, 1, 1, 2});
    auto e = linalg::sym_eigen(a);
    CHECK(e.values[0] == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(e.values[1] == doctest::Approx(1.0).epsilon(1e-12));
    // eigenvector for 3 is (1,1)/sqrt(2), sign-fixed positive
    CHECK(e.vectors.at(0, 0) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-10));
    CHECK(e.vectors.at(1, 0) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-10));
}

TEST_CASE("jacobi reconstructs a random symmetric matrix") {
    Rng rng(11);
    const int n = 12;
    Matrix a({n, n});
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) a.at(i, j) = a.at(j, i) = rng.normal();
    auto e = linalg::sym_eigen(a);
    // A = V diag(w) V^T
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int k = 0; k < n; ++k) s += e.vectors.at(i, k) * e.values[k] * e.vectors.at(j, k);
            CHECK(s == doctest::Approx(a.at(i, j)).epsilon(1e-9).scale(1.0));
        }
    }
    // orthonormality
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int k = 0; k < n; ++k) s += e.vectors.at(k, i) * e.vectors.at(k, j);
            CHECK(std::abs(s - (i == j ? 1.0 : 0.0)) < 1e-10);
        }
    for (int i = 1; i < n; ++i) CHECK(e.values[i - 1] >= e.values[i]);
}

TEST_CASE("dense spd solve") {
    Matrix a({2, 2}, {4, 1, 1, 3});
    auto x = linalg::solve_spd(a, {1, 2});
    CHECK(4 * x[0] + 1 * x[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(1 * x[0] + 3 * x[1] == doctest::Approx(2.0).epsilon(1e-12));
    Matrix bad({2, 2}, {1, 2, 2, 1});  // indefinite
    CHECK_THROWS_AS(linalg::solve_spd(bad, {1, 1}), DegenerateDataError);
}

TEST_CASE("banded cholesky agrees with dense solve") {
    Rng rng(5);
    const int n = 40, bw = 2;
    Matrix dense({n, n});
    linalg::BandedSpd band(n, bw);
    for (int i = 0; i < n; ++i) {
        dense.at(i, i) = 5.0 + rng.uniform();
        band.at(i, i) = dense.at(i, i);
        for (int d = 1; d <= bw; ++d) {
            if (i - d < 0) continue;
            double v = rng.uniform(-0.5, 0.5);
            dense.at(i, i - d) = dense.at(i - d, i) = v;
            band.at(i, i - d) = v;
        }
    }
    std::vector<double> rhs(n);
    for (auto& v : rhs) v = rng.normal();
    auto xd = linalg::solve_spd(dense, rhs);
    band.factorize();
    auto xb = rhs;
    band.solve(xb);
    for (int i = 0; i < n; ++i) CHECK(xb[i] == doctest::Approx(xd[i]).epsilon(1e-10));
}

TEST_CASE("line fit closed form") {
    auto f = linalg::fit_line({0, 1, 2, 3}, {1, 3, 5, 7});
    CHECK(f.intercept == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(f.slope == doctest::Approx(2.0).epsilon(1e-12));
}

}  // TEST_SUITE
