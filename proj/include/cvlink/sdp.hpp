#ifndef CVLINK_SDP_HPP
#define CVLINK_SDP_HPP

#include <complex>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace cvlink::sdp {

using Complex = std::complex<double>;
using Eigen::MatrixXcd;
using Eigen::VectorXd;

/// One entry of a Hermitian coefficient matrix. An off-diagonal entry
/// (r,c,v) stands for v E_rc + conj(v) E_cr, so the functional value on a
/// Hermitian X is 2 Re(conj(v) X_rc); a diagonal entry must have real v.
struct Triplet {
    int block = 0;
    int row = 0;
    int col = 0;
    Complex value;
};

struct Constraint {
    std::vector<Triplet> entries;
    double rhs = 0.0;
};

struct BoxConstraint {
    std::vector<Triplet> entries;
    double lower = 0.0;
    double upper = 0.0;
};

/// min sum_b <C_b, X_b>  s.t.  <A_i, X> = b_i,  l_j <= <B_j, X> <= u_j,
/// every block X_b Hermitian PSD.
struct SdpProblem {
    std::vector<int> block_dims;
    std::vector<MatrixXcd> objective;  // Hermitian, one per block (may be empty = 0)
    std::vector<Constraint> equalities;
    std::vector<BoxConstraint> boxes;

    int total_dim() const;
    void validate() const;
    /// Value of a triplet functional on given block matrices.
    static double apply(const std::vector<Triplet>& entries,
                        const std::vector<MatrixXcd>& blocks);
};

enum class SdpStatus { optimal, infeasible, iteration_limit, numerical_failure };

std::string to_string(SdpStatus s);

struct SdpSolution {
    std::vector<MatrixXcd> block_values;
    VectorXd y;                       // multipliers for the equality constraints
    std::vector<double> box_values;   // functional values of the box constraints
    double objective_value = 0.0;
    double dual_objective = 0.0;
    double duality_gap = 0.0;         // |primal - dual|
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    double certificate_norm = 0.0;    // infeasibility certificate quality
    int iterations = 0;
    SdpStatus status = SdpStatus::numerical_failure;
};

struct SolveOptions {
    double tol = 1e-7;
    int max_iter = 200;
    double regularization = 1e-12;
    int total_dim_cap = 400;
};

SdpSolution solve(const SdpProblem& problem, const SolveOptions& opt = {});

/// Text dump of a problem for cross-checks with external solvers.
void dump_problem(std::ostream& out, const SdpProblem& p);

}  // namespace cvlink::sdp

#endif
