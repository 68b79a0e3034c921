#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "cvlink/fock.hpp"

using namespace cvlink::fock;

namespace {

// Haar-ish random density matrix: G G^dag / tr
DensityOperator random_state(std::vector<int> dims, std::mt19937_64& rng) {
    int d = 1;
    for (int s : dims) d *= s;
    std::normal_distribution<double> g;
    MatrixXcd m(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) m(i, j) = Complex(g(rng), g(rng));
    MatrixXcd rho = m * m.adjoint();
    rho /= rho.trace();
    return {std::move(dims), std::move(rho)};
}

MatrixXcd random_unitary(int d, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    MatrixXcd m(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) m(i, j) = Complex(g(rng), g(rng));
    Eigen::HouseholderQR<MatrixXcd> qr(m);
    return qr.householderQ();
}

}  // namespace

TEST_CASE("coherent state basics") {
    auto vac = coherent_state(0.0, 8);
    CHECK(std::abs(vac.amplitudes(0) - Complex(1.0, 0.0)) < 1e-15);
    CHECK(vac.norm_defect() == doctest::Approx(0.0).epsilon(1e-15));

    // analytic overlap, real case: <1|-1> = e^{-2}
    auto a = coherent_state(1.0, 40);
    auto b = coherent_state(-1.0, 40);
    Complex ov = a.amplitudes.adjoint() * b.amplitudes;
    CHECK(std::abs(ov.real() - std::exp(-2.0)) < 1e-12);
    CHECK(std::abs(ov.imag()) < 1e-14);
}

TEST_CASE("coherent norm defect equals analytic Poisson tail") {
    // oracle: defect = 1 - sum_{n<N} e^{-|a|^2} |a|^{2n} / n!
    double a2 = 1.0;
    double tail = 1.0, term = std::exp(-a2);
    for (int n = 0; n < 16; ++n) {
        tail -= term;
        term *= a2 / double(n + 1);
    }
    auto psi = coherent_state(1.0, 16);
    CHECK(psi.norm_defect() == doctest::Approx(tail).epsilon(1e-9));
    CHECK(psi.norm_defect() < 1e-12);
}

TEST_CASE("default cutoff rule") {
    CHECK(default_cutoff(0.1) == 12);  // floor
    int nc = default_cutoff(1.0);
    CHECK(coherent_state(1.0, nc).norm_defect() < 1e-10);
    CHECK(coherent_state(1.0, nc - 1).norm_defect() >= 1e-10);
}

TEST_CASE("overlap formula vs truncated inner product") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1.2, 1.2);
    for (int trial = 0; trial < 20; ++trial) {
        Complex x(u(rng), u(rng)), y(u(rng), u(rng));
        auto fa = coherent_state(x, 48);
        auto fb = coherent_state(y, 48);
        Complex num = fa.amplitudes.adjoint() * fb.amplitudes;
        Complex ana = coherent_overlap(x, y);
        CHECK(std::abs(num - ana) < 1e-10);
        CHECK(std::abs(std::norm(ana) - std::exp(-std::norm(x - y))) < 1e-10);
    }
}

TEST_CASE("quadrature conventions") {
    auto q = quadrature_operators(24);
    auto vac = coherent_state(0.0, 24);
    DensityOperator rho = pure_density(vac);
    // vacuum variance 1 SNU
    double x2 = (rho.matrix * q.X * q.X).trace().real();
    CHECK(x2 == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((rho.matrix * q.X).trace().real() == doctest::Approx(0.0).epsilon(1e-12));

    auto c9 = coherent_state(0.9, 24);
    auto r9 = pure_density(c9);
    CHECK((r9.matrix * q.X).trace().real() == doctest::Approx(1.8).epsilon(1e-10));

    // direct matrix expectation oracle: Var_X on |i>
    auto q32 = quadrature_operators(32);
    auto ci = coherent_state(Complex(0.0, 1.0), 32);
    auto ri = pure_density(ci);
    double mx = (ri.matrix * q32.X).trace().real();
    double vx = (ri.matrix * q32.X * q32.X).trace().real() - mx * mx;
    CHECK(vx == doctest::Approx(1.0).epsilon(1e-9));

    // [X,P] = 2i Identity away from the truncation edge
    MatrixXcd comm = q.X * q.P - q.P * q.X;
    for (int n = 0; n < 22; ++n)
        CHECK(std::abs(comm(n, n) - Complex(0.0, 2.0)) < 1e-12);
}

TEST_CASE("partial transpose involution and PPT of product states") {
    std::mt19937_64 rng(11);
    auto rho = random_state({3, 3}, rng);
    auto pt2 = partial_transpose(partial_transpose(rho, 0), 0);
    CHECK((pt2.matrix - rho.matrix).norm() < 1e-14);

    auto a = random_state({3}, rng);
    auto b = random_state({4}, rng);
    auto prod = tensor(a, b);
    auto pt = partial_transpose(prod, 0);
    Eigen::SelfAdjointEigenSolver<MatrixXcd> es(pt.matrix, Eigen::EigenvaluesOnly);
    CHECK(es.eigenvalues().minCoeff() > -1e-12);
    CHECK(negativity_exact(prod) == doctest::Approx(0.0).epsilon(1e-10));
}

TEST_CASE("Bell state negativity and PT eigenvalue") {
    VectorXcd psi = VectorXcd::Zero(4);
    psi(0) = psi(3) = 1.0 / std::sqrt(2.0);
    auto rho = pure_density(psi, {2, 2});
    auto pt = partial_transpose(rho, 0);
    Eigen::SelfAdjointEigenSolver<MatrixXcd> es(pt.matrix, Eigen::EigenvaluesOnly);
    CHECK(es.eigenvalues().minCoeff() == doctest::Approx(-0.5).epsilon(1e-12));
    CHECK(negativity_exact(rho) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("trace preservation and hermiticity through the algebra") {
    std::mt19937_64 rng(23);
    auto rho = random_state({4, 5}, rng);
    auto ta = partial_trace(rho, 0);
    auto tb = partial_trace(rho, 1);
    CHECK(ta.trace_real() == doctest::Approx(rho.trace_real()).epsilon(1e-12));
    CHECK(tb.trace_real() == doctest::Approx(rho.trace_real()).epsilon(1e-12));
    CHECK(ta.is_hermitian());
    CHECK(tb.is_hermitian());
    CHECK(partial_transpose(rho, 1).is_hermitian());
}

TEST_CASE("negativity invariant under local unitaries") {
    std::mt19937_64 rng(31);
    auto rho = random_state({3, 4}, rng);
    double n0 = negativity_exact(rho);
    for (int trial = 0; trial < 5; ++trial) {
        MatrixXcd ua = random_unitary(3, rng);
        MatrixXcd ub = random_unitary(4, rng);
        MatrixXcd u = MatrixXcd::Zero(12, 12);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) u.block(i * 4, j * 4, 4, 4) = ua(i, j) * ub;
        DensityOperator rot{{3, 4}, u * rho.matrix * u.adjoint()};
        CHECK(negativity_exact(rot) == doctest::Approx(n0).epsilon(1e-9));
    }
}

TEST_CASE("q function values and normalization") {
    auto vac = pure_density(coherent_state(0.0, 16));
    CHECK(q_function(vac, 0.0) == doctest::Approx(1.0 / M_PI).epsilon(1e-12));

    auto c = pure_density(coherent_state(Complex(0.7, -0.3), 24));
    CHECK(q_function(c, Complex(0.7, -0.3)) == doctest::Approx(1.0 / M_PI).epsilon(1e-9));

    // integral of Q over a wide grid is 1
    double h = 0.1, sum = 0.0;
    for (double x = -4.0; x < 4.0; x += h)
        for (double y = -4.0; y < 4.0; y += h)
            sum += q_function(c, Complex(x + h / 2, y + h / 2)) * h * h;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("attenuation channel maps coherent to attenuated coherent") {
    int nc = 20;
    auto a = pure_density(coherent_state(0.0, 2));  // dummy A side |0><0|
    auto b = pure_density(coherent_state(1.2, nc));
    auto rho = tensor(a, b);
    auto out = attenuate_mode(rho, 1, 0.6);
    auto outB = partial_trace(out, 1);
    auto expect = pure_density(coherent_state(1.2 * std::sqrt(0.6), nc));
    CHECK((outB.matrix - expect.matrix).norm() < 1e-9);
    CHECK(out.trace_real() == doctest::Approx(1.0).epsilon(1e-12));
}
