#ifndef CVLINK_FOCK_HPP
#define CVLINK_FOCK_HPP

#include <complex>
#include <vector>

#include <Eigen/Dense>

namespace cvlink::fock {

using Complex = std::complex<double>;
using Eigen::MatrixXcd;
using Eigen::VectorXcd;

/// Pure state on a truncated Fock space |0>..|cutoff-1>.
struct FockVector {
    int cutoff = 0;
    VectorXcd amplitudes;

    double norm() const { return amplitudes.norm(); }
    /// 1 - <psi|psi>; nonzero for truncated coherent states.
    double norm_defect() const { return 1.0 - amplitudes.squaredNorm(); }
};

/// Density matrix on a (possibly tensor-product) truncated space.
/// dims lists the subsystem dimensions; matrix is prod(dims) square.
struct DensityOperator {
    std::vector<int> dims;
    MatrixXcd matrix;

    int total_dim() const;
    double trace_real() const { return matrix.trace().real(); }
    bool is_hermitian(double rel_tol = 1e-12) const;
    double min_eigenvalue() const;
};

/// X = a + a^dag, P = i(a^dag - a); vacuum Var(X) = Var(P) = 1 SNU.
struct QuadratureOps {
    int cutoff = 0;
    MatrixXcd X;
    MatrixXcd P;
};

/// Coherent amplitudes c_n = e^{-|a|^2/2} a^n / sqrt(n!).
FockVector coherent_state(Complex alpha, int cutoff);

/// Smallest cutoff with coherent norm defect < tol at |alpha| = alpha_max,
/// floored at 12.
int default_cutoff(double alpha_max, double tol = 1e-10);

/// Analytic overlap <alpha|beta> = exp(-|a|^2/2 - |b|^2/2 + conj(a) b).
Complex coherent_overlap(Complex alpha, Complex beta);

QuadratureOps quadrature_operators(int cutoff);

/// Annihilation operator on the truncated space.
MatrixXcd annihilation(int cutoff);

DensityOperator pure_density(const FockVector& psi);
DensityOperator pure_density(const VectorXcd& psi, std::vector<int> dims);

DensityOperator tensor(const DensityOperator& a, const DensityOperator& b);

/// Trace out everything except subsystem `keep` (bipartite only).
DensityOperator partial_trace(const DensityOperator& rho, int keep);

/// Transpose subsystem `subsystem` of a bipartite state. Involution.
DensityOperator partial_transpose(const DensityOperator& rho, int subsystem);

/// N(rho) = sum |negative eigenvalues of rho^{T_A}|. Brute-force oracle
/// for the SDP certification path.
double negativity_exact(const DensityOperator& rho);

/// Pure-loss (beam-splitter) channel of transmission t on one subsystem
/// of a bipartite state.
DensityOperator attenuate_mode(const DensityOperator& rho, int subsystem, double t);

/// Q(beta) = <beta|rho|beta> / pi for a single-mode state.
double q_function(const DensityOperator& rho, Complex beta);

}  // namespace cvlink::fock

#endif
