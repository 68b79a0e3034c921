#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <sstream>

#include "cvlink/rates.hpp"

using namespace cvlink;

namespace {

certify::BinResult make_bin(int bin, double lo, double hi, double prob, double sigma,
                            double negativity) {
    certify::BinResult r;
    r.bin = bin;
    r.bin_lo = lo;
    r.bin_hi = hi;
    r.prob = prob;
    r.sigma = sigma;
    r.result.negativity = negativity;
    r.result.log_negativity = certify::log_negativity(negativity);
    r.result.status = sdp::SdpStatus::optimal;
    return r;
}

}  // namespace

TEST_CASE("logarithmic negativity values") {
    CHECK(certify::log_negativity(0.0) == 0.0);
    CHECK(certify::log_negativity(0.5) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(certify::log_negativity(0.49) ==
          doctest::Approx(std::log2(1.98)).epsilon(1e-12));
    CHECK(certify::log_negativity(0.49) == doctest::Approx(0.9855).epsilon(1e-3));
}

TEST_CASE("single-bin aggregation at the modulation rate") {
    auto rep = rates::aggregate({make_bin(0, 0.0, 1.0, 1.0, 0.0, 0.5)}, 2.22e6);
    CHECK(rep.total_rate.at(0.0) == doctest::Approx(2.22e6).epsilon(1e-12));
    CHECK(rep.mean_log_negativity.at(0.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS(rates::aggregate({}, -1.0));
}

TEST_CASE("aggregation equals the independent weighted re-summation") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<certify::BinResult> rs;
    for (double sigma : {0.0, 1.0, 2.0}) {
        for (int b = 0; b < 12; ++b)
            rs.push_back(make_bin(b, 0.5 + 0.02 * b, 0.52 + 0.02 * b, 0.05 + 0.02 * u(rng),
                                  sigma, 0.6 * u(rng)));
    }
    double rate = 2.22e6;
    auto rep = rates::aggregate(rs, rate);
    for (double sigma : {0.0, 1.0, 2.0}) {
        double acc = 0.0;
        for (const auto& r : rs)
            if (r.sigma == sigma)
                acc += r.prob * std::log2(2.0 * r.result.negativity + 1.0);
        CHECK(rep.total_rate.at(sigma) == doctest::Approx(rate * acc).epsilon(1e-12));
    }
    // linearity in the state rate
    auto rep3 = rates::aggregate(rs, 3.0 * rate);
    for (const auto& [sigma, total] : rep.total_rate)
        CHECK(rep3.total_rate.at(sigma) == doctest::Approx(3.0 * total).epsilon(1e-12));
}

TEST_CASE("sigma band ordering propagates from per-bin monotonicity") {
    std::vector<certify::BinResult> rs;
    for (int b = 0; b < 5; ++b) {
        double base = 0.1 * (b + 1);
        for (double sigma : {0.0, 1.0, 2.0, 3.0})
            rs.push_back(make_bin(b, 0.6 + 0.05 * b, 0.65 + 0.05 * b, 0.2, sigma,
                                  base * (1.0 - 0.2 * sigma)));
    }
    auto rep = rates::aggregate(rs, 1e6);
    double prev = 1e18;
    for (double sigma : {0.0, 1.0, 2.0, 3.0}) {
        CHECK(rep.total_rate.at(sigma) <= prev + 1e-9);
        CHECK(rep.total_rate.at(sigma) >= 0.0);
        prev = rep.total_rate.at(sigma);
    }
}

TEST_CASE("unretained mass silently contributes zero") {
    // bins carrying zero certified entanglement lower the rate, never raise it
    std::vector<certify::BinResult> rs = {
        make_bin(0, 0.7, 0.8, 0.9, 0.0, 0.5),
        make_bin(1, 0.8, 0.9, 0.02, 0.0, 0.0),
    };
    auto rep = rates::aggregate(rs, 1e6);
    CHECK(rep.total_rate.at(0.0) == doctest::Approx(0.9e6).epsilon(1e-12));
}

TEST_CASE("rate report serialization") {
    auto rep = rates::aggregate({make_bin(0, 0.7, 0.8, 0.5, 0.0, 0.3),
                                 make_bin(0, 0.7, 0.8, 0.5, 1.0, 0.2)},
                                2.22e6);
    std::ostringstream csv;
    rates::write_rate_csv(csv, rep, "fixture");
    CHECK(csv.str().find("sigma,bin_lo,bin_hi,prob,log_negativity,rate_contribution") !=
          std::string::npos);
    std::ostringstream sum;
    rates::write_summary(sum, rep);
    CHECK(sum.str().find("state rate: 2.22e+06") != std::string::npos);
    CHECK(sum.str().find("sigma 0") != std::string::npos);
    CHECK(sum.str().find("sigma 1") != std::string::npos);
}
