#pragma once

#include "hcd/eigensolver.hpp"
#include "hcd/fem.hpp"
#include "hcd/geometry.hpp"
#include "hcd/spectral.hpp"

#include <memory>
#include <vector>

namespace hcd {

/// Periodic corrector of one direction on a perforated realization.
struct CorrectorField {
    int direction = 0;
    Mesh mesh;                 // periodic mesh of the realization region
    Vec nodal;                 // N_j at every mesh node (periodic images included)
    std::vector<std::uint8_t> matrix_elements;
    double cell_mean = 0.0;    // mean of N_j over the cell after centring
    double residual = 0.0;     // relative residual of the perforated cell equation
    bool mean_zero = true;
};

/// Solves the perforated periodic cell problems for both directions on `real`
/// (which must tile its region), with harmonic extension into the inclusions.
std::array<CorrectorField, 2> corrector_cells(const InclusionRealization& real, const Mat2& A1, double h);
CorrectorField corrector_cell(const InclusionRealization& real, const Mat2& A1, double h, int direction);

/// (1/|cell|) int_{cell \ incl} A1 (e_i + grad N_i) . (e_j + grad N_j) for one realization.
Mat2 effective_tensor(const std::array<CorrectorField, 2>& n, const Mat2& A1);

struct HomogenizedTensor {
    Mat2 A = Mat2::Identity();
    Mat2 stderr_ = Mat2::Zero();
    std::vector<Mat2> samples;
    std::vector<double> volume_fractions;  // discrete, per sample
    double lambda_max = 1.0;
    double volume_fraction = 0.0;
    Mat2 voigt = Mat2::Identity();         // (1 - f) A1: arithmetic bound of the perforated medium
    Mat2 reuss = Mat2::Zero();             // harmonic bound: zero for perforations
    double hashin_shtrikman = 0.0;         // isotropic A1 only: a1 (1 - f)/(1 + f), else NaN

    /// Eigenvalue-wise reuss <= A <= voigt in the quadratic-form sense.
    bool within_bounds(double tol = 1e-10) const;
};

/// Monte-Carlo over `samples` periodized n x n cells of the ensemble.
HomogenizedTensor homogenized_tensor(const RandomMediumSpec& spec, const Mat2& A1, int n_cells, double h,
                                     int samples, std::uint64_t seed);
HomogenizedTensor homogenized_tensor(const std::vector<Mat2>& samples, const std::vector<double>& fractions,
                                     const Mat2& A1);

/// Discretized homogenised defect operator on a Dirichlet box.
struct MacroProblem {
    OperatorPair op;  // K and the full mass matrix
    SpMat M_out;
    SpMat M_in;
    std::vector<std::uint8_t> defect_elements;
    Mat2 A1hom;
    DefectSpec defect;

    /// K - beta M_out - lam M_in.
    SpMat pencil(double beta, double lam) const;
};

MacroProblem assemble_macro(const Mat2& A1hom, const DefectSpec& defect, const Box& box, double h);

struct NuSample {
    double lambda = 0.0;
    double beta = 0.0;
    std::vector<double> nu;  // smallest branches, ascending
};

struct DefectEigenpair {
    double lambda0 = 0.0;
    Vec u0;                  // dof vector, ||u0||_L2 = 1
    int branch = 0;
    int multiplicity = 1;
    double beta = 0.0;
    double theta = 0.0;
    double residual = 0.0;   // ||(K - beta M_out - lam0 M_in) u0|| / ||K u0||
    double energy_defect = 0.0;  // relative gap in the energy identity
};

struct DefectSolution {
    std::vector<DefectEigenpair> pairs;
    std::vector<NuSample> trace;
    Interval gap;
    int count_low = 0;   // branches below lam at the lower gap end
    int count_high = 0;
    std::shared_ptr<const MacroProblem> macro;
};

struct DefectOptions {
    int m_max = 6;
    double root_tol = 1e-8;
    int trace_points = 9;
    double end_margin = 1e-6;  // relative offset from the gap ends
};

/// Roots of nu_k(lam) = lam inside `gap`, where nu_k are the eigenvalues of the pencil
/// (K - beta(lam) M_out, M_in). The count of negative pivots of K - beta M_out - lam M_in
/// equals #{k : nu_k(lam) < lam} and brackets each root for bisection.
DefectSolution defect_eigenproblem(std::shared_ptr<const MacroProblem> macro, const BetaEnsemble& ens,
                                   const Interval& gap, const DefectOptions& opt = {},
                                   const EigenOptions& eig = {});

/// Smallest `k` eigenvalues of the pencil at a fixed beta.
std::vector<double> nu_branches(const MacroProblem& macro, double beta, int k, const EigenOptions& eig = {},
                                Eigen::MatrixXd* vectors = nullptr);

struct RadialRoot {
    double lambda = 0.0;
    int angular = 0;
    int multiplicity = 1;
};

/// Exact roots for a disk defect with isotropic A1hom = a I and A2 = a2 I on the plane,
/// matching J_m(k r) inside to K_m(kappa r) outside, k^2 = lam/a2, kappa^2 = -beta/a.
std::vector<RadialRoot> radial_oracle(double a, double a2, double R, const std::function<double(double)>& beta,
                                      const Interval& gap, int m_max = 4, double step = 0.01);

/// Two-scale component u_1 = lam0 u0 b_{lam0}, kept in separable form.
struct MicroscopicComponent {
    double lambda0 = 0.0;
    double mean_b = 0.0;     // <b_{lam0}> per unit volume
    double mean_b2 = 0.0;    // E int b^2 per unit volume
    double u0_norm_sq = 1.0;

    /// <u1> = lam0 <b> u0 as a multiple of u0.
    double mean_factor() const { return lambda0 * mean_b; }
    /// ||u1||^2 over R^2 x Omega.
    double norm_sq() const { return lambda0 * lambda0 * u0_norm_sq * mean_b2; }
};

MicroscopicComponent microscopic_component(double lambda0, double u0_norm_sq, const BetaEnsemble& ens);

/// 0.95 sqrt(|beta(lam0)| / Lambda_max); DomainError when beta(lam0) >= 0.
double theta_bound(double beta_lambda0, const Mat2& A1hom);

} // namespace hcd
