#include "cvlink/fock.hpp"

#include <cmath>
#include <stdexcept>

namespace cvlink::fock {

int DensityOperator::total_dim() const {
    int d = 1;
    for (int s : dims) d *= s;
    return d;
}

bool DensityOperator::is_hermitian(double rel_tol) const {
    double scale = matrix.norm();
    if (scale == 0.0) return true;
    return (matrix - matrix.adjoint()).norm() <= rel_tol * scale;
}

double DensityOperator::min_eigenvalue() const {
    Eigen::SelfAdjointEigenSolver<MatrixXcd> es(matrix, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

FockVector coherent_state(Complex alpha, int cutoff) {
    if (cutoff < 2) throw std::invalid_argument("coherent_state: cutoff must be >= 2");
    FockVector psi;
    psi.cutoff = cutoff;
    psi.amplitudes.resize(cutoff);
    // c_n = c_{n-1} * alpha / sqrt(n), c_0 = exp(-|alpha|^2/2)
    Complex c = std::exp(Complex(-0.5 * std::norm(alpha), 0.0));
    for (int n = 0; n < cutoff; ++n) {
        psi.amplitudes(n) = c;
        c *= alpha / std::sqrt(double(n + 1));
    }
    return psi;
}

int default_cutoff(double alpha_max, double tol) {
    int nc = 12;
    while (nc < 512) {
        FockVector psi = coherent_state(Complex(alpha_max, 0.0), nc);
        if (psi.norm_defect() < tol) break;
        ++nc;
    }
    return nc;
}

Complex coherent_overlap(Complex alpha, Complex beta) {
    return std::exp(-0.5 * std::norm(alpha) - 0.5 * std::norm(beta) +
                    std::conj(alpha) * beta);
}

MatrixXcd annihilation(int cutoff) {
    MatrixXcd a = MatrixXcd::Zero(cutoff, cutoff);
    for (int n = 1; n < cutoff; ++n) a(n - 1, n) = std::sqrt(double(n));
    return a;
}

QuadratureOps quadrature_operators(int cutoff) {
    if (cutoff < 2) throw std::invalid_argument("quadrature_operators: cutoff must be >= 2");
    QuadratureOps ops;
    ops.cutoff = cutoff;
    MatrixXcd a = annihilation(cutoff);
    MatrixXcd ad = a.adjoint();
    ops.X = a + ad;
    ops.P = Complex(0.0, 1.0) * (ad - a);
    return ops;
}

DensityOperator pure_density(const FockVector& psi) {
    return pure_density(psi.amplitudes, {psi.cutoff});
}

DensityOperator pure_density(const VectorXcd& psi, std::vector<int> dims) {
    DensityOperator rho;
    rho.dims = std::move(dims);
    rho.matrix = psi * psi.adjoint();
    return rho;
}

DensityOperator tensor(const DensityOperator& a, const DensityOperator& b) {
    DensityOperator out;
    out.dims = a.dims;
    out.dims.insert(out.dims.end(), b.dims.begin(), b.dims.end());
    int da = a.matrix.rows();
    int db = b.matrix.rows();
    out.matrix.resize(da * db, da * db);
    for (int i = 0; i < da; ++i)
        for (int j = 0; j < da; ++j)
            out.matrix.block(i * db, j * db, db, db) = a.matrix(i, j) * b.matrix;
    return out;
}

namespace {

void require_bipartite(const DensityOperator& rho) {
    if (rho.dims.size() != 2)
        throw std::invalid_argument("operation requires a bipartite state (dims of size 2)");
}

}  // namespace

DensityOperator partial_trace(const DensityOperator& rho, int keep) {
    require_bipartite(rho);
    if (keep < 0 || keep > 1) throw std::out_of_range("partial_trace: keep must be 0 or 1");
    int dA = rho.dims[0], dB = rho.dims[1];
    DensityOperator out;
    if (keep == 0) {
        out.dims = {dA};
        out.matrix = MatrixXcd::Zero(dA, dA);
        for (int i = 0; i < dA; ++i)
            for (int j = 0; j < dA; ++j)
                for (int b = 0; b < dB; ++b)
                    out.matrix(i, j) += rho.matrix(i * dB + b, j * dB + b);
    } else {
        out.dims = {dB};
        out.matrix = MatrixXcd::Zero(dB, dB);
        for (int a = 0; a < dA; ++a)
            out.matrix += rho.matrix.block(a * dB, a * dB, dB, dB);
    }
    return out;
}

DensityOperator partial_transpose(const DensityOperator& rho, int subsystem) {
    require_bipartite(rho);
    if (subsystem < 0 || subsystem > 1)
        throw std::out_of_range("partial_transpose: subsystem must be 0 or 1");
    int dA = rho.dims[0], dB = rho.dims[1];
    DensityOperator out;
    out.dims = rho.dims;
    out.matrix.resize(dA * dB, dA * dB);
    for (int i = 0; i < dA; ++i)
        for (int j = 0; j < dA; ++j) {
            auto blk = rho.matrix.block(i * dB, j * dB, dB, dB);
            if (subsystem == 0)
                out.matrix.block(j * dB, i * dB, dB, dB) = blk;
            else
                out.matrix.block(i * dB, j * dB, dB, dB) = blk.transpose();
        }
    return out;
}

double negativity_exact(const DensityOperator& rho) {
    if (!rho.is_hermitian(1e-10))
        throw std::invalid_argument("negativity_exact: state is not Hermitian");
    DensityOperator pt = partial_transpose(rho, 0);
    Eigen::SelfAdjointEigenSolver<MatrixXcd> es(pt.matrix, Eigen::EigenvaluesOnly);
    double neg = 0.0;
    for (int i = 0; i < es.eigenvalues().size(); ++i) {
        double lam = es.eigenvalues()(i);
        if (lam < 0.0) neg -= lam;
    }
    return neg;
}

DensityOperator attenuate_mode(const DensityOperator& rho, int subsystem, double t) {
    require_bipartite(rho);
    if (t < 0.0 || t > 1.0) throw std::invalid_argument("attenuate_mode: t outside [0,1]");
    int d = rho.dims[subsystem];
    // Kraus operators E_l |n> = sqrt(C(n,l) t^{n-l} (1-t)^l) |n-l>
    std::vector<MatrixXcd> kraus;
    for (int l = 0; l < d; ++l) {
        MatrixXcd e = MatrixXcd::Zero(d, d);
        for (int n = l; n < d; ++n) {
            double c = std::exp(std::lgamma(n + 1.0) - std::lgamma(l + 1.0) -
                                std::lgamma(n - l + 1.0));
            double w = c * std::pow(t, double(n - l)) * std::pow(1.0 - t, double(l));
            e(n - l, n) = std::sqrt(w);
        }
        if (e.norm() > 0.0) kraus.push_back(std::move(e));
        if (t >= 1.0) break;  // only l = 0 survives
    }
    DensityOperator out;
    out.dims = rho.dims;
    out.matrix = MatrixXcd::Zero(rho.matrix.rows(), rho.matrix.cols());
    int dA = rho.dims[0], dB = rho.dims[1];
    for (const auto& e : kraus) {
        MatrixXcd k;
        if (subsystem == 0) {
            k = MatrixXcd::Zero(dA * dB, dA * dB);
            for (int i = 0; i < dA; ++i)
                for (int j = 0; j < dA; ++j)
                    if (e(i, j) != Complex(0.0, 0.0))
                        k.block(i * dB, j * dB, dB, dB) =
                            e(i, j) * MatrixXcd::Identity(dB, dB);
        } else {
            k = MatrixXcd::Zero(dA * dB, dA * dB);
            for (int i = 0; i < dA; ++i) k.block(i * dB, i * dB, dB, dB) = e;
        }
        out.matrix += k * rho.matrix * k.adjoint();
    }
    return out;
}

double q_function(const DensityOperator& rho, Complex beta) {
    if (rho.dims.size() != 1)
        throw std::invalid_argument("q_function: single-mode state required");
    FockVector b = coherent_state(beta, rho.dims[0]);
    Complex val = b.amplitudes.adjoint() * rho.matrix * b.amplitudes;
    return val.real() / M_PI;
}

}  // namespace cvlink::fock
