#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "cvlink/alphabet.hpp"
#include "cvlink/fock.hpp"

using namespace cvlink;
using alphabet::Complex;

TEST_CASE("two-state alphabet construction") {
    auto a = alphabet::two_state(1.0);
    REQUIRE(a.size() == 2);
    CHECK(a.amplitudes[0] == Complex(1.0, 0.0));
    CHECK(a.amplitudes[1] == Complex(-1.0, 0.0));
    CHECK(a.priors[0] == 0.5);

    // alpha = 0: both states are the vacuum
    auto z = alphabet::two_state(0.0);
    CHECK(z.amplitudes[0] == Complex(0.0, 0.0));
    CHECK(z.amplitudes[1] == Complex(0.0, 0.0));

    // Gram off-diagonal = <−1|+1>/2 = e^{−2}/2
    auto g = alphabet::gram_matrix(a);
    CHECK(std::abs(g(0, 1) - Complex(std::exp(-2.0) / 2.0, 0.0)) < 1e-14);
    CHECK(std::abs(g.trace().real() - 1.0) < 1e-14);

    CHECK_THROWS(alphabet::two_state(-0.1));
}

TEST_CASE("four-state alphabet geometry") {
    auto a = alphabet::four_state(1.0);
    REQUIRE(a.size() == 4);
    for (int k = 0; k < 4; ++k) {
        CHECK(std::abs(std::abs(a.amplitudes[k]) - 1.0) < 1e-15);
        CHECK(a.priors[k] == 0.25);
    }
    // 90 degree spacing: amplitudes are i^k
    for (int k = 0; k < 4; ++k) {
        Complex expect = std::pow(Complex(0.0, 1.0), k);
        CHECK(std::abs(a.amplitudes[k] - expect) < 1e-15);
    }

    // alpha = 0: all states identical, Gram = all-1/4, rank 1
    auto g0 = alphabet::gram_matrix(alphabet::four_state(0.0));
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) CHECK(std::abs(g0(i, j) - Complex(0.25, 0.0)) < 1e-15);
    Eigen::SelfAdjointEigenSolver<fock::MatrixXcd> es(g0, Eigen::EigenvaluesOnly);
    CHECK(es.eigenvalues()(3) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(es.eigenvalues()(2)) < 1e-14);
}

TEST_CASE("four-state Gram eigenvalues equal Poisson sector sums") {
    // oracle: for uniform priors the Gram of {i^k alpha} diagonalizes in the
    // Fourier basis with eigenvalues sum_{n = m mod 4} e^{-|a|^2} |a|^{2n}/n!
    double alpha = 1.0;
    auto g = alphabet::gram_matrix(alphabet::four_state(alpha));
    std::vector<double> sector(4, 0.0);
    double term = std::exp(-alpha * alpha);
    for (int n = 0; n < 60; ++n) {
        sector[n % 4] += term;
        term *= alpha * alpha / double(n + 1);
    }
    Eigen::SelfAdjointEigenSolver<fock::MatrixXcd> es(g, Eigen::EigenvaluesOnly);
    std::sort(sector.begin(), sector.end());
    for (int i = 0; i < 4; ++i)
        CHECK(es.eigenvalues()(i) == doctest::Approx(sector[i]).epsilon(1e-12));
}

TEST_CASE("calibrated alphabets") {
    // asymmetric measured amplitudes are accepted as-is
    auto a = alphabet::calibrated(
        {Complex(0.88, 0.0), Complex(0.0, 0.92), Complex(-0.87, 0.0), Complex(0.0, -0.92)},
        {0.25, 0.25, 0.25, 0.25});
    CHECK(a.size() == 4);
    CHECK(a.max_abs_amplitude() == doctest::Approx(0.92));

    CHECK_THROWS(alphabet::calibrated({Complex(1.0, 0.0)}, {0.5, 0.5}));
    CHECK_THROWS(alphabet::calibrated({Complex(1.0, 0.0), Complex(0.0, 0.0)}, {1.5, -0.5}));
    CHECK_THROWS(alphabet::calibrated({Complex(1.0, 0.0), Complex(0.0, 0.0)}, {0.7, 0.2}));

    // degenerate priors {1, 0}: single-state source, Gram rank 1, no entanglement
    auto single = alphabet::calibrated({Complex(0.8, 0.0), Complex(-0.8, 0.0)}, {1.0, 0.0});
    auto g = alphabet::gram_matrix(single);
    Eigen::SelfAdjointEigenSolver<fock::MatrixXcd> es(g, Eigen::EigenvaluesOnly);
    CHECK(std::abs(es.eigenvalues()(0)) < 1e-14);
    auto sm = alphabet::source_model(single, 14);
    CHECK(fock::negativity_exact(sm.purification_density()) ==
          doctest::Approx(0.0).epsilon(1e-10));
}

TEST_CASE("Gram is Hermitian PSD and phase invariant for random alphabets") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(-1.2, 1.2);
    for (int trial = 0; trial < 10; ++trial) {
        int k = 2 + int(rng() % 4);
        std::vector<Complex> amps(k);
        std::vector<double> pri(k, 1.0 / k);
        for (auto& c : amps) c = Complex(u(rng), u(rng));
        auto a = alphabet::calibrated(amps, pri);
        auto g = alphabet::gram_matrix(a);
        CHECK((g - g.adjoint()).norm() < 1e-13);
        Eigen::SelfAdjointEigenSolver<fock::MatrixXcd> es(g, Eigen::EigenvaluesOnly);
        CHECK(es.eigenvalues().minCoeff() > -1e-12);

        // global phase on every amplitude leaves |G_jk| unchanged
        double phi = u(rng);
        std::vector<Complex> rot(k);
        for (int i = 0; i < k; ++i) rot[i] = amps[i] * std::polar(1.0, phi);
        auto gr = alphabet::gram_matrix(alphabet::calibrated(rot, pri));
        CHECK((g.cwiseAbs() - gr.cwiseAbs()).norm() < 1e-12);
    }
}

TEST_CASE("source model purification is consistent with the Gram") {
    std::mt19937_64 rng(29);
    std::uniform_real_distribution<double> u(-0.9, 0.9);
    for (int trial = 0; trial < 6; ++trial) {
        int k = 2 + int(rng() % 3);
        std::vector<Complex> amps(k);
        std::vector<double> pri(k, 1.0 / k);
        for (auto& c : amps) c = Complex(u(rng), u(rng));
        auto sm = alphabet::source_model(alphabet::calibrated(amps, pri), 20);
        auto rho = sm.purification_density();
        auto marginal = fock::partial_trace(rho, 0);  // trace out the signal mode
        CHECK((marginal.matrix - sm.gram).norm() < 1e-10);
        CHECK(rho.trace_real() == doctest::Approx(1.0).epsilon(1e-10));
    }
}

TEST_CASE("purification negativity vanishes at zero and grows with amplitude") {
    CHECK(fock::negativity_exact(
              alphabet::source_model(alphabet::two_state(0.5), 12).purification_density()) >
          0.01);

    int nc = fock::default_cutoff(2.0);
    for (bool four : {false, true}) {
        double prev = -1e-9;
        for (double alpha : {0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0}) {
            auto a = four ? alphabet::four_state(alpha) : alphabet::two_state(alpha);
            double n = fock::negativity_exact(
                alphabet::source_model(a, nc).purification_density());
            if (alpha == 0.0) CHECK(n == doctest::Approx(0.0).epsilon(1e-10));
            CHECK(n >= prev - 1e-9);
            prev = n;
        }
    }
}
