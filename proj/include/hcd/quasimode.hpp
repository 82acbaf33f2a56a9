#pragma once

// The eps-problem around a defect mode: quasimode construction, resolvent
// certificate, and the diagnostics run on true eps-eigenfunctions.

#include "hcd/eigensolver.hpp"
#include "hcd/fem.hpp"
#include "hcd/geometry.hpp"
#include "hcd/homogenization.hpp"
#include "hcd/spectral.hpp"

#include <array>
#include <cmath>
#include <vector>

namespace hcd {

/// Discrete eps-operator on a Dirichlet box together with its geometry.
struct EpsProblem {
    double epsilon = 0.0;
    ScaledGeometry geom;
    OperatorPair op;
    std::vector<int> element_inclusion;  // kept inclusion per element, -1 elsewhere
    std::vector<std::uint8_t> defect_elements;

    const Mesh& mesh() const { return op.mesh; }
};

/// Scales `real` by eps, drops inclusions meeting the defect closure and assembles
/// the operator on `box` with spacing h.
EpsProblem assemble_eps_problem(const InclusionRealization& real, double epsilon, const DefectSpec& defect,
                                const Box& box, double h, const Mat2& A1);

struct HarmonicExtension {
    Vec field;                       // nodal
    double max_energy_ratio = 0.0;   // max over inclusions of |grad u~|_incl / |grad u|_ring
    int inclusions = 0;
};

/// Replaces nodal values strictly inside each kept inclusion by the discrete harmonic
/// extension of the trace. `ring_width` is the width of the buffer ring used for the
/// energy monitor (in physical units).
HarmonicExtension harmonic_extension(const Mesh& mesh, const Vec& nodal, const ScaledGeometry& geom,
                                     double ring_width);

/// Nodal b^eps: on each kept inclusion solves (-eps^2 Lap - lambda0) b = 1 with zero
/// trace; zero elsewhere. With a table, a lambda0 within 1e-6 lambda_1 of a scaled
/// pole raises PoleProximityError.
Vec realize_b_eps(const Mesh& mesh, const ScaledGeometry& geom, double lambda0,
                  const DirichletModeTable* table = nullptr);

struct CutoffSchedule {
    double L0 = 2.0;
    double rho0 = 0.5;

    double L(double eps) const { return L0 * std::pow(eps, -0.25); }
    double rho(double eps) const { return rho0 * std::pow(eps, 0.25); }
};

/// eta_L: 1 on B_{L/2}, linear down to 0 at |x| = L.
double eta_cutoff(double r, double L);
/// xi_rho: 0 on |x| <= R + rho, linear up to 1 at R + 2 rho.
double xi_cutoff(double r, double R, double rho);

/// Macroscopic mode evaluated on the eps mesh.
struct MacroMode {
    double lambda0 = 0.0;
    Vec u0;      // nodal on the eps mesh
    Vec grad_x;  // nodal d/dx u0
    Vec grad_y;
    double grad_sup = 0.0;
};

/// Interpolates u0 (dof vector of `macro`) onto `mesh` nodes.
MacroMode transfer_mode(const MacroProblem& macro, const Vec& u0, double lambda0, const Mesh& mesh);

struct Quasimode {
    Vec nodal;
    double eps = 0.0;
    double L = 0.0;
    double rho = 0.0;
    double corrector_l2 = 0.0;     // || sum_j |N_j^eps| ||_{L2(B_L)}
    double corrector_term_l2 = 0.0;  // || eta xi N_j^eps d_j u0 ||
    double microscopic_l2 = 0.0;   // || lambda0 b u0 ||
};

/// u0 + lambda0 b u0 + eta_L xi_rho eps N_j(x/eps) d_j u0. The correctors live on the
/// unit-scale realization mesh and are sampled at x/eps.
Quasimode build_quasimode(const Mesh& mesh, const MacroMode& mode, const Vec& b_eps,
                          const std::array<CorrectorField, 2>& correctors, double eps, double defect_radius,
                          const CutoffSchedule& schedule);

/// Solves (K + M) u_hat = (lambda0 + 1) M u; throws NumericalError when the relative
/// residual exceeds 1e-10.
Vec resolvent_image(const OperatorPair& op, const Vec& u, double lambda0);

struct QuasimodeReport {
    double eps = 0.0;
    double rho = 0.0;
    double L = 0.0;
    double lambda0 = 0.0;
    double norm_u = 0.0;
    double norm_diff = 0.0;
    double certificate = 0.0;  // (lambda0+1) ||u_hat - u|| / ||u||
    double corrector_l2 = 0.0;
    double grad_sup = 0.0;
    double rho_sqrt = 0.0;
    double tail = 0.0;  // L^{1/2} exp(-theta L)
    double locality = 0.0;  // fraction of ||u||^2 inside B_L
};

/// Certificate and norms; with `qm` the cut-off parameters and corrector norms are
/// copied in, locality is measured on B_L and the tail term uses `theta`.
QuasimodeReport quasimode_report(const OperatorPair& op, const Vec& u, const Vec& u_hat, double lambda0,
                                 const Quasimode* qm = nullptr, double grad_sup = 0.0, double theta = 0.0);

struct DecayFit {
    std::vector<double> radii;   // annulus inner radii
    std::vector<double> masses;  // L2 mass per annulus
    std::vector<double> areas;
    double width = 0.0;
    double alpha = 0.0;
    double fit_residual = 0.0;
    double gamma = 0.0;
    double bound = 0.0;  // sqrt(|beta_inf(lambda0)| / gamma)
};

/// Least-squares fit of log(mass/area) = c - 2 alpha r over annuli of `width` covering
/// [r_in, r_out]. Throws ConfigError with fewer than 3 annuli.
DecayFit decay_fit(const Mesh& mesh, const Vec& nodal, double r_in, double r_out, double width,
                   double beta_inf_lambda0, const Mat2& A1);

struct TwoScaleReport {
    double l2_error = 0.0;             // ||u~ - u0|| on matrix + defect
    double amplification_error = 0.0;  // sum_k |int u - int (1+lambda0 b) u0| / sum_k |int (1+lambda0 b) u0|
    double eigen_error = 0.0;
    double sign = 1.0;
};

/// `u` is an eps-eigenvector (dofs of problem.op); u0 is the transferred macro mode.
TwoScaleReport two_scale_diagnostics(const EpsProblem& problem, const Vec& u, double lambda_eps,
                                     const MacroMode& mode, const Vec& b_eps, double ring_width);

/// ||E_window u||_M / ||u||_M from a complete window decomposition.
double projection_mass(const OperatorPair& op, const Vec& u, const SpectralWindowResult& window);
/// Same, computing the window eigenpairs slice by slice.
double projection_mass(const OperatorPair& op, const Vec& u, const Interval& window, const EigenOptions& opt);

struct ProjectionBounds {
    double lower = 0.0;
    double upper = 1.0;
    double estimate = 0.0;  // Gauss quadrature value
    int steps = 0;
};

/// Bounds on ||E_window u|| / ||u|| without the window eigenpairs: Lanczos on the
/// shift-inverted pencil about the window centre started from u gives a Gauss rule for
/// the spectral measure of u; the Chebyshev-Markov-Stieltjes inequalities turn it into
/// two-sided bounds. The window maps to |tau| >= 1/radius.
ProjectionBounds projection_mass_bounds(const OperatorPair& op, const Vec& u, const Interval& window,
                                        int steps = 80);

} // namespace hcd
