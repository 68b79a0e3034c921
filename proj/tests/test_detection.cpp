#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "cvlink/detection.hpp"
#include "cvlink/fock.hpp"

using namespace cvlink;
using detection::SlotRecord;

namespace {

channel::TransmissionHistogram unit_bin() {
    channel::TransmissionHistogram h;
    h.bin_edges = {0.0, 1.0};
    h.probabilities = {1.0};
    h.counts = {1};
    h.retained = {true};
    return h;
}

}  // namespace

TEST_CASE("normalization is invariant under the raw acquisition scale") {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g;
    std::vector<double> sig(5000), vac(5000);
    for (auto& x : sig) x = 1.3 + 1.7 * g(rng);
    for (auto& x : vac) x = 0.9 * g(rng);

    auto q1 = detection::normalize_quadrature(sig, vac);
    std::vector<double> sig2 = sig, vac2 = vac;
    for (auto& x : sig2) x *= 7.3;
    for (auto& x : vac2) x *= 7.3;
    auto q2 = detection::normalize_quadrature(sig2, vac2);
    CHECK(q1.mean == doctest::Approx(q2.mean).epsilon(1e-12));
    CHECK(q1.var == doctest::Approx(q2.var).epsilon(1e-12));
    CHECK(q1.se_var == doctest::Approx(q2.se_var).epsilon(1e-12));

    CHECK_THROWS(detection::normalize_quadrature(sig, {1.0}));
    CHECK_THROWS(detection::normalize_quadrature(sig, {1.0, 1.0, 1.0}));
}

TEST_CASE("normalization recovers known Gaussian parameters") {
    // fixture: raw scale 0.35, state mean 1.8 SNU, state variance 1.05 SNU
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g;
    const double scale = 0.35, mean_snu = 1.8, var_snu = 1.05;
    const int n = 40000;
    std::vector<double> sig(n), vac(n);
    for (auto& x : sig) x = scale * (mean_snu + std::sqrt(var_snu + 1.0) * g(rng));
    for (auto& x : vac) x = scale * std::sqrt(2.0) * g(rng);
    auto q = detection::normalize_quadrature(sig, vac);
    CHECK(std::abs(q.mean - mean_snu) < 3.0 * q.se_mean);
    CHECK(std::abs(q.var - var_snu) < 3.0 * q.se_var);

    // vacuum into the signal port: state variance 1 SNU, zero excess noise
    std::vector<double> vsig(n);
    for (auto& x : vsig) x = scale * std::sqrt(2.0) * g(rng);
    auto qv = detection::normalize_quadrature(vsig, vac);
    CHECK(std::abs(qv.var - 1.0) < 3.0 * qv.se_var);
    CHECK(std::abs(qv.mean) < 3.0 * qv.se_mean);
}

TEST_CASE("variance standard error follows the two-port Gaussian formula") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> g;
    const int n = 15000;
    std::vector<double> sig(n), vac(n);
    for (auto& x : sig) x = std::sqrt(2.0) * g(rng);
    for (auto& x : vac) x = std::sqrt(2.0) * g(rng);
    auto q = detection::normalize_quadrature(sig, vac);
    double v_out = q.var + 1.0;
    // signal and vacuum ports each contribute Var * sqrt(2/(n-1))
    double expect = v_out * std::sqrt(2.0 / (n - 1.0) + 2.0 / (n - 1.0));
    CHECK(q.se_var == doctest::Approx(expect).epsilon(1e-12));
    // 15000 states per bin: stderr of the variance is about 1.63 percent
    CHECK(q.se_var / v_out == doctest::Approx(0.0163).epsilon(0.01));
}

TEST_CASE("simulated records reproduce the prepared state moments") {
    auto a = alphabet::two_state(0.9);
    channel::ChannelParams p;  // T = 1, eta = 1, no excess noise
    detection::SimulateOptions opt;
    opt.n_slots = 200000;
    opt.seed = 11;
    opt.raw_scale = 3.7;  // exercised and cancelled by normalization
    auto rec = detection::simulate_records(a, 1.0, p, opt);
    auto m = detection::bin_records(rec, unit_bin(), a.size(), 100);
    REQUIRE(m.n_bins() == 1);
    REQUIRE(m.retained[0]);
    const auto& c0 = m.cells[0][0];
    CHECK(std::abs(c0.mean_x - 1.8) < 3.0 * c0.se_mean);
    CHECK(std::abs(c0.mean_p - 0.0) < 3.0 * c0.se_mean);
    CHECK(std::abs(c0.var_x - 1.0) < 3.0 * c0.se_var);
    CHECK(std::abs(c0.var_p - 1.0) < 3.0 * c0.se_var);
    const auto& c1 = m.cells[0][1];
    CHECK(std::abs(c1.mean_x + 1.8) < 3.0 * c1.se_mean);

    // vacuum alphabet at T = 1: signal and vacuum ports statistically identical
    auto vac_rec = detection::simulate_records(alphabet::two_state(0.0), 1.0, p, opt);
    auto vm = detection::bin_records(vac_rec, unit_bin(), 2, 100);
    CHECK(std::abs(vm.cells[0][0].mean_x) < 3.0 * vm.cells[0][0].se_mean);
    CHECK(std::abs(vm.cells[0][0].var_x - 1.0) < 3.0 * vm.cells[0][0].se_var);
}

TEST_CASE("binning is order invariant and counts out-of-range records") {
    auto a = alphabet::four_state(0.7);
    channel::ChannelParams p;
    detection::SimulateOptions opt;
    opt.n_slots = 20000;
    opt.seed = 3;
    auto rec = detection::simulate_records(a, 0.8, p, opt);

    channel::TransmissionHistogram h;
    h.bin_edges = {0.75, 0.85};
    h.probabilities = {1.0};
    h.counts = {1};
    h.retained = {true};

    auto m1 = detection::bin_records(rec, h, a.size(), 10);
    auto shuffled = rec;
    std::mt19937_64 rng(99);
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    auto m2 = detection::bin_records(shuffled, h, a.size(), 10);
    for (int k = 0; k < 4; ++k) {
        CHECK(m1.cells[0][k].mean_x == doctest::Approx(m2.cells[0][k].mean_x).epsilon(1e-12));
        CHECK(m1.cells[0][k].var_p == doctest::Approx(m2.cells[0][k].var_p).epsilon(1e-12));
        CHECK(m1.cells[0][k].n == m2.cells[0][k].n);
    }

    // a record outside every bin is reported, not silently dropped
    rec.push_back(SlotRecord{0, 0.0, 0.0, 0.1, -0.1, 0.2});
    auto m3 = detection::bin_records(rec, h, a.size(), 10);
    CHECK(m3.out_of_range == 1);
}

TEST_CASE("raw vacuum variance tracks the transmission when the LO fades") {
    auto a = alphabet::two_state(0.5);
    channel::ChannelParams p;
    channel::TransmissionHistogram h;
    h.bin_edges = {0.2, 0.3, 0.9, 1.0};
    h.probabilities = {0.5, 0.0, 0.5};
    h.counts = {1, 0, 1};
    h.retained = {true, false, true};
    detection::SimulateOptions opt;
    opt.n_slots = 120000;
    opt.seed = 21;
    opt.lo_scales_with_t = true;
    auto rec = detection::simulate_records(a, h, p, opt);
    auto m = detection::bin_records(rec, h, a.size(), 100);
    // centers 0.25 and 0.95: raw vacuum variances scale with T
    double ratio = m.raw_vacuum_var[0] / m.raw_vacuum_var[2];
    CHECK(ratio == doctest::Approx(0.25 / 0.95).epsilon(0.05));

    // normalized amplitude estimates scale as sqrt(T) at fixed preparation
    double ax_lo = m.cells[0][0].mean_x / 2.0;
    double ax_hi = m.cells[2][0].mean_x / 2.0;
    CHECK(ax_lo / ax_hi == doctest::Approx(std::sqrt(0.25 / 0.95)).epsilon(0.05));
}

TEST_CASE("Q estimation matches the analytic Q function") {
    // vacuum: empirical peak near 1/pi
    std::mt19937_64 rng(31);
    std::normal_distribution<double> g;
    const int n = 270000;
    std::vector<double> xs(n), ps(n);
    for (int i = 0; i < n; ++i) {
        xs[i] = std::sqrt(2.0) * g(rng);
        ps[i] = std::sqrt(2.0) * g(rng);
    }
    detection::QGrid grid;
    grid.lo = -2.0;
    grid.hi = 2.0;
    grid.n = 40;
    auto f = detection::estimate_q(xs, ps, grid);
    CHECK(f.peak() == doctest::Approx(1.0 / M_PI).epsilon(0.05));

    // field integrates to one over the grid by construction
    double total = 0.0;
    for (double v : f.values) total += v;
    CHECK(total * grid.step() * grid.step() == doctest::Approx(1.0).epsilon(1e-12));

    // displaced coherent state: empirical Q tracks the fock-core oracle
    auto rho = fock::pure_density(fock::coherent_state({0.8, 0.3}, 18));
    for (int i = 0; i < n; ++i) {
        xs[i] = 1.6 + std::sqrt(2.0) * g(rng);
        ps[i] = 0.6 + std::sqrt(2.0) * g(rng);
    }
    auto fc = detection::estimate_q(xs, ps, grid);
    double h = grid.step();
    double cell_sigma = 3.0 * std::sqrt((1.0 / M_PI) / (n * h * h));
    for (int iy = 0; iy < grid.n; iy += 4)
        for (int ix = 0; ix < grid.n; ix += 4) {
            fock::Complex beta(grid.lo + (ix + 0.5) * h, grid.lo + (iy + 0.5) * h);
            double expect = fock::q_function(rho, beta);
            double got = fc.values[std::size_t(iy) * grid.n + ix];
            CHECK(std::abs(got - expect) < cell_sigma + 0.05 * expect + 1e-4);
        }

    CHECK_THROWS(detection::estimate_q({}, {}, grid));
    detection::QGrid far;
    far.lo = 50.0;
    far.hi = 51.0;
    CHECK_THROWS(detection::estimate_q(xs, ps, far));
}

TEST_CASE("Stokes mapping reduces to a calibration rescaling") {
    auto [x, p] = detection::stokes_to_quadrature(1.4, -0.7, 1.0);
    CHECK(x == doctest::Approx(1.4));
    CHECK(p == doctest::Approx(-0.7));

    // two calibrations differing by a factor give outputs differing by sqrt
    auto [x1, p1] = detection::stokes_to_quadrature(1.4, -0.7, 2.5);
    CHECK(x / x1 == doctest::Approx(std::sqrt(2.5)).epsilon(1e-12));
    CHECK(p / p1 == doctest::Approx(std::sqrt(2.5)).epsilon(1e-12));
    CHECK_THROWS(detection::stokes_to_quadrature(1.0, 1.0, 0.0));

    // normalized moments do not depend on the calibration constant
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g;
    std::vector<double> s1(4000), vac1(4000);
    for (auto& v : s1) v = 0.9 + 1.1 * g(rng);
    for (auto& v : vac1) v = 1.1 * g(rng);
    for (double cal : {1.0, 6.25}) {
        std::vector<double> s(4000), vac(4000);
        for (int i = 0; i < 4000; ++i) {
            s[i] = detection::stokes_to_quadrature(s1[i], 0.0, cal).first;
            vac[i] = detection::stokes_to_quadrature(vac1[i], 0.0, cal).first;
        }
        auto q = detection::normalize_quadrature(s, vac);
        auto q0 = detection::normalize_quadrature(s1, vac1);
        CHECK(q.mean == doctest::Approx(q0.mean).epsilon(1e-12));
        CHECK(q.var == doctest::Approx(q0.var).epsilon(1e-12));
    }
}

TEST_CASE("record files round trip and tolerate malformed lines") {
    std::vector<SlotRecord> rec = {
        {0, 1.25, -0.5, 0.01, 0.02, 0.8},
        {3, -2.0, 0.75, -0.3, 0.1, 0.55},
    };
    std::ostringstream os;
    detection::write_records(os, rec, "fixture");
    std::string text = os.str() + "garbage line\n1,2,3\n";
    std::istringstream is(text);
    detection::IngestStats stats;
    auto back = detection::read_records(is, &stats);
    REQUIRE(back.size() == 2);
    CHECK(stats.parsed == 2);
    CHECK(stats.dropped == 2);
    CHECK(back[0].state == 0);
    CHECK(back[1].signal_p == doctest::Approx(0.75));
    CHECK(back[1].monitor_t == doctest::Approx(0.55));
}

TEST_CASE("moments CSV round trips through the documented header") {
    auto a = alphabet::two_state(0.6);
    channel::ChannelParams p;
    detection::SimulateOptions opt;
    opt.n_slots = 5000;
    opt.seed = 13;
    auto rec = detection::simulate_records(a, 0.9, p, opt);
    auto m = detection::bin_records(rec, unit_bin(), a.size(), 10);
    std::ostringstream os;
    detection::write_moments_csv(os, m, "fixture");
    CHECK(os.str().find("bin_lo,bin_hi,prob,state,mean_x") != std::string::npos);
    std::istringstream is(os.str());
    auto back = detection::read_moments_csv(is);
    REQUIRE(back.n_bins() == 1);
    REQUIRE(back.n_states() == 2);
    for (int k = 0; k < 2; ++k) {
        CHECK(back.cells[0][k].mean_x == doctest::Approx(m.cells[0][k].mean_x).epsilon(1e-9));
        CHECK(back.cells[0][k].var_p == doctest::Approx(m.cells[0][k].var_p).epsilon(1e-9));
        CHECK(back.cells[0][k].n == m.cells[0][k].n);
        CHECK(back.cells[0][k].se_var == doctest::Approx(m.cells[0][k].se_var).epsilon(1e-9));
    }
}
