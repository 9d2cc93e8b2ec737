#include "stresskit/subspace.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "stresskit/csv.hpp"
#include "stresskit/errors.hpp"
#include "stresskit/linalg.hpp"

namespace stresskit::subspace {

Standardizer fit_standardizer(const Matrix& x) {
    const int n = x.rows(), c = x.cols();
    if (n < 2) throw InsufficientDataError("standardizer needs N >= 2");
    Standardizer s;
    s.mean.assign(c, 0.0);
    s.std.assign(c, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) s.mean[j] += x.at(i, j);
    for (int j = 0; j < c; ++j) s.mean[j] /= n;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) {
            double d = x.at(i, j) - s.mean[j];
            s.std[j] += d * d;
        }
    for (int j = 0; j < c; ++j) {
        double sd = std::sqrt(s.std[j] / n);
        s.std[j] = sd < 1e-8 ? 1.0 : sd;
    }
    return s;
}

Matrix standardize(const Standardizer& s, const Matrix& x) {
    if (x.cols() != static_cast<int>(s.mean.size())) throw ShapeError("standardizer width mismatch");
    Matrix out = x;
    for (int i = 0; i < out.rows(); ++i)
        for (int j = 0; j < out.cols(); ++j) out.at(i, j) = (out.at(i, j) - s.mean[j]) / s.std[j];
    return out;
}

PcaModel fit_pca(const Matrix& x) {
    const int n = x.rows(), c = x.cols();
    if (n < 2) throw InsufficientDataError("PCA needs N >= 2");
    PcaModel m;
    m.mean.assign(c, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) m.mean[j] += x.at(i, j);
    for (int j = 0; j < c; ++j) m.mean[j] /= n;

    Matrix cov({c, c});
    for (int i = 0; i < n; ++i) {
        for (int a = 0; a < c; ++a) {
            double da = x.at(i, a) - m.mean[a];
            for (int b = a; b < c; ++b) cov.at(a, b) += da * (x.at(i, b) - m.mean[b]);
        }
    }
    for (int a = 0; a < c; ++a)
        for (int b = a; b < c; ++b) {
            cov.at(a, b) /= n;  // population covariance
            cov.at(b, a) = cov.at(a, b);
        }

    auto eig = linalg::sym_eigen(cov);
    if (eig.values.empty() || eig.values.front() < 1e-12)
        throw DegenerateDataError("data has no variance; PCA undefined");
    for (auto& v : eig.values)
        if (v < 0.0 && v > -1e-10) v = 0.0;  // clip tiny negatives from roundoff
    m.components = std::move(eig.vectors);
    m.eigenvalues = std::move(eig.values);
    return m;
}

Matrix pca_scores(const PcaModel& pca, const Matrix& x) {
    const int n = x.rows(), c = x.cols();
    if (c != static_cast<int>(pca.mean.size())) throw ShapeError("pca_scores width mismatch");
    Matrix out({n, c});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) {
            double s = 0.0;
            for (int k = 0; k < c; ++k) s += (x.at(i, k) - pca.mean[k]) * pca.components.at(k, j);
            out.at(i, j) = s;
        }
    return out;
}

namespace {

void check_binary_labels(const std::vector<int>& labels, std::size_t n) {
    if (labels.size() != n) throw ShapeError("label count mismatch");
    int pos = 0, neg = 0;
    for (int l : labels) {
        if (l == 1)
            ++pos;
        else if (l == 0)
            ++neg;
        else
            throw ConfigError("labels must be 0/1");
    }
    if (pos == 0 || neg == 0) throw DegenerateDataError("both classes must be present");
}

}  // namespace

std::vector<ComponentScore> rank_stress_components(const PcaModel& pca, const Matrix& x,
                                                   const std::vector<int>& labels) {
    check_binary_labels(labels, static_cast<std::size_t>(x.rows()));
    Matrix scores = pca_scores(pca, x);
    const int n = scores.rows(), c = scores.cols();
    double ymean = 0.0;
    for (int l : labels) ymean += l;
    ymean /= n;
    double yvar = ymean * (1.0 - ymean);

    std::vector<ComponentScore> out(c);
    for (int j = 0; j < c; ++j) {
        double xm = 0.0;
        for (int i = 0; i < n; ++i) xm += scores.at(i, j);
        xm /= n;
        double sxx = 0.0, sxy = 0.0;
        for (int i = 0; i < n; ++i) {
            double dx = scores.at(i, j) - xm;
            sxx += dx * dx;
            sxy += dx * (labels[i] - ymean);
        }
        sxx /= n;
        sxy /= n;
        double denom = std::sqrt(sxx * yvar);
        out[j].component = j;
        out[j].correlation = denom < 1e-15 ? 0.0 : sxy / denom;
    }
    std::stable_sort(out.begin(), out.end(), [](const ComponentScore& a, const ComponentScore& b) {
        return std::abs(a.correlation) > std::abs(b.correlation);
    });
    return out;
}

LdaAxis fit_lda(const Matrix& x, const std::vector<int>& labels) {
    const int n = x.rows(), c = x.cols();
    check_binary_labels(labels, static_cast<std::size_t>(n));
    int n0 = 0, n1 = 0;
    for (int l : labels) (l == 1 ? n1 : n0)++;
    if (n0 < 2 || n1 < 2) throw DegenerateDataError("each class needs at least 2 samples");

    std::vector<double> mu0(c, 0.0), mu1(c, 0.0);
    for (int i = 0; i < n; ++i) {
        auto& mu = labels[i] == 1 ? mu1 : mu0;
        for (int j = 0; j < c; ++j) mu[j] += x.at(i, j);
    }
    for (int j = 0; j < c; ++j) {
        mu0[j] /= n0;
        mu1[j] /= n1;
    }

    // pooled within-class covariance, population convention
    Matrix sw({c, c});
    for (int i = 0; i < n; ++i) {
        const auto& mu = labels[i] == 1 ? mu1 : mu0;
        for (int a = 0; a < c; ++a) {
            double da = x.at(i, a) - mu[a];
            for (int b = a; b < c; ++b) sw.at(a, b) += da * (x.at(i, b) - mu[b]);
        }
    }
    double trace = 0.0;
    for (int a = 0; a < c; ++a) {
        for (int b = a; b < c; ++b) {
            sw.at(a, b) /= n;
            sw.at(b, a) = sw.at(a, b);
        }
        trace += sw.at(a, a);
    }
    double gamma = 1e-4 * trace / c;
    if (gamma <= 0.0) gamma = 1e-8;  // all-identical within classes
    for (int a = 0; a < c; ++a) sw.at(a, a) += gamma;

    std::vector<double> rhs(c);
    for (int j = 0; j < c; ++j) rhs[j] = mu1[j] - mu0[j];
    std::vector<double> d = linalg::solve_spd(std::move(sw), std::move(rhs));

    double norm = 0.0;
    for (double v : d) norm += v * v;
    norm = std::sqrt(norm);
    if (norm < 1e-12) throw DegenerateDataError("class means coincide; LDA direction undefined");
    for (auto& v : d) v /= norm;

    // orient so the stress class projects positive; measured against the
    // class-mean difference, which is origin-free and equals the stress-mean
    // projection in the standardized frame
    double sep = 0.0;
    for (int j = 0; j < c; ++j) sep += d[j] * (mu1[j] - mu0[j]);
    if (sep < 0.0)
        for (auto& v : d) v = -v;

    LdaAxis axis;
    axis.direction = std::move(d);
    axis.class_mean_nostress = std::move(mu0);
    axis.class_mean_stress = std::move(mu1);

    double zm = 0.0;
    std::vector<double> z(n);
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 0; j < c; ++j) s += axis.direction[j] * x.at(i, j);
        z[i] = s;
        zm += s;
    }
    zm /= n;
    double zvar = 0.0;
    for (double v : z) zvar += (v - zm) * (v - zm);
    axis.sigma_proj = std::sqrt(zvar / n);
    return axis;
}

std::vector<double> project(const LdaAxis& axis, const Matrix& x) {
    if (x.cols() != static_cast<int>(axis.direction.size())) throw ShapeError("projection width");
    std::vector<double> z(x.rows(), 0.0);
    for (int i = 0; i < x.rows(); ++i)
        for (int j = 0; j < x.cols(); ++j) z[i] += axis.direction[j] * x.at(i, j);
    return z;
}

Perturbed perturb_along_axis(const std::vector<double>& mean_coeffs,
                             const std::vector<double>& direction, double sigma_proj,
                             double scale) {
    if (mean_coeffs.size() != direction.size()) throw ShapeError("perturbation dims");
    Perturbed p;
    p.minus.resize(mean_coeffs.size());
    p.plus.resize(mean_coeffs.size());
    for (std::size_t j = 0; j < mean_coeffs.size(); ++j) {
        double step = scale * sigma_proj * direction[j];
        p.plus[j] = mean_coeffs[j] + step;
        p.minus[j] = mean_coeffs[j] - step;
    }
    return p;
}

void write_lda_axis_csv(const std::string& path, const std::vector<std::string>& channels,
                        const LdaAxis& axis) {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t j = 0; j < channels.size(); ++j)
        rows.push_back({channels[j], csv::format_double(axis.direction[j])});
    csv::write_rows(path, {"channel", "weight"}, rows);
}

void write_perturbed_csv(const std::string& path, const std::vector<std::string>& channels,
                         const std::vector<double>& mean, const Perturbed& p) {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t j = 0; j < channels.size(); ++j)
        rows.push_back({channels[j], csv::format_double(p.minus[j]), csv::format_double(mean[j]),
                        csv::format_double(p.plus[j])});
    csv::write_rows(path, {"channel", "minus3", "mean", "plus3"}, rows);
}

void write_pca_report_csv(const std::string& path, const std::vector<std::string>& channels,
                          const PcaModel& pca, const std::vector<ComponentScore>& ranking,
                          int top_loadings) {
    std::vector<double> corr(pca.eigenvalues.size(), 0.0);
    for (const auto& r : ranking) corr[r.component] = r.correlation;
    std::vector<std::vector<std::string>> rows;
    const int c = static_cast<int>(channels.size());
    for (std::size_t j = 0; j < pca.eigenvalues.size(); ++j) {
        std::vector<int> order(c);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return std::abs(pca.components.at(a, static_cast<int>(j))) >
                   std::abs(pca.components.at(b, static_cast<int>(j)));
        });
        std::string loads;
        for (int t = 0; t < std::min(top_loadings, c); ++t) {
            if (t) loads += ";";
            loads += channels[order[t]] + ":" +
                     csv::format_double(pca.components.at(order[t], static_cast<int>(j)));
        }
        rows.push_back({std::to_string(j), csv::format_double(pca.eigenvalues[j]),
                        csv::format_double(corr[j]), loads});
    }
    csv::write_rows(path, {"component", "eigenvalue", "stress_correlation", "top_loadings"}, rows);
}

}  // namespace stresskit::subspace
