#ifndef CVLINK_RATES_HPP
#define CVLINK_RATES_HPP

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "cvlink/certify.hpp"

namespace cvlink::rates {

struct BinContribution {
    double bin_lo = 0.0, bin_hi = 0.0;
    double probability = 0.0;
    double log_negativity = 0.0;
};

/// Aggregated entanglement-transfer rate per sigma level.
struct RateReport {
    double state_rate = 0.0;  // states per second
    certify::LogBase base = certify::LogBase::two;
    std::map<double, std::vector<BinContribution>> per_bin;  // sigma -> bins
    std::map<double, double> total_rate;                     // sigma -> units/s
    std::map<double, double> mean_log_negativity;            // probability-weighted
};

/// Weighted sum over sub-channels: state_rate * sum_i p_i * E_N,i with
/// unrenormalized retained-bin probabilities.
RateReport aggregate(const std::vector<certify::BinResult>& results,
                     double state_rate, certify::LogBase base = certify::LogBase::two);

void write_rate_csv(std::ostream& out, const RateReport& r,
                    const std::string& header_comment = "");
void write_summary(std::ostream& out, const RateReport& r);

}  // namespace cvlink::rates

#endif
