#pragma once

#include <string>
#include <vector>

#include "stresskit/nd/tensor.hpp"

namespace stresskit::subspace {

// Column-wise z-scoring helper (population convention, degenerate columns
// clamped to unit scale), used to standardize the pooled frame matrix before
// PCA/LDA.
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> std;
};
Standardizer fit_standardizer(const Matrix& x);
Matrix standardize(const Standardizer& s, const Matrix& x);

struct PcaModel {
    std::vector<double> mean;        // length C
    Matrix components;               // C x C, column j = j-th PC
    std::vector<double> eigenvalues; // descending, length C
};

// Eigendecomposition of the population covariance. Deterministic sign: each
// PC's largest-magnitude component is positive.
PcaModel fit_pca(const Matrix& x);

// Scores = (X - mean) . components, N x C.
Matrix pca_scores(const PcaModel& pca, const Matrix& x);

struct ComponentScore {
    int component;       // PC index (0-based)
    double correlation;  // point-biserial vs the stress label
};

// Point-biserial correlation of each PC score with the binary label, sorted
// by |correlation| descending (ties keep lower component index).
std::vector<ComponentScore> rank_stress_components(const PcaModel& pca, const Matrix& x,
                                                   const std::vector<int>& labels);

struct LdaAxis {
    std::vector<double> direction;  // unit vector
    std::vector<double> class_mean_nostress;
    std::vector<double> class_mean_stress;
    double sigma_proj = 0.0;  // population std of projections
};

// Binary LDA direction (Sigma_w + gamma I)^-1 (mu1 - mu0) with shrinkage
// gamma = 1e-4 * trace(Sigma_w) / C; sign fixed so the stress-class mean
// projects positive.
LdaAxis fit_lda(const Matrix& x, const std::vector<int>& labels);

std::vector<double> project(const LdaAxis& axis, const Matrix& x);

struct Perturbed {
    std::vector<double> minus;
    std::vector<double> plus;
};

// mean +- scale * sigma_proj * direction.
Perturbed perturb_along_axis(const std::vector<double>& mean_coeffs,
                             const std::vector<double>& direction, double sigma_proj,
                             double scale = 3.0);

void write_lda_axis_csv(const std::string& path, const std::vector<std::string>& channels,
                        const LdaAxis& axis);
void write_perturbed_csv(const std::string& path, const std::vector<std::string>& channels,
                         const std::vector<double>& mean, const Perturbed& p);
void write_pca_report_csv(const std::string& path, const std::vector<std::string>& channels,
                          const PcaModel& pca, const std::vector<ComponentScore>& ranking,
                          int top_loadings = 3);

}  // namespace stresskit::subspace
