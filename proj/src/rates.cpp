#include "cvlink/rates.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

namespace cvlink::rates {

RateReport aggregate(const std::vector<certify::BinResult>& results,
                     double state_rate, certify::LogBase base) {
    if (state_rate < 0.0) throw std::invalid_argument("aggregate: negative state rate");
    RateReport rep;
    rep.state_rate = state_rate;
    rep.base = base;
    for (const auto& r : results) {
        BinContribution c;
        c.bin_lo = r.bin_lo;
        c.bin_hi = r.bin_hi;
        c.probability = r.prob;
        c.log_negativity = certify::log_negativity(r.result.negativity, base);
        rep.per_bin[r.sigma].push_back(c);
    }
    for (auto& [sigma, bins] : rep.per_bin) {
        double acc = 0.0;
        for (const auto& c : bins) acc += c.probability * c.log_negativity;
        rep.mean_log_negativity[sigma] = acc;
        rep.total_rate[sigma] = state_rate * acc;
    }
    return rep;
}

void write_rate_csv(std::ostream& out, const RateReport& r,
                    const std::string& header_comment) {
    if (!header_comment.empty()) out << "# " << header_comment << "\n";
    out << "sigma,bin_lo,bin_hi,prob,log_negativity,rate_contribution\n";
    char buf[192];
    for (const auto& [sigma, bins] : r.per_bin)
        for (const auto& c : bins) {
            std::snprintf(buf, sizeof buf, "%g,%.6f,%.6f,%.9g,%.9g,%.9g\n", sigma,
                          c.bin_lo, c.bin_hi, c.probability, c.log_negativity,
                          r.state_rate * c.probability * c.log_negativity);
            out << buf;
        }
}

void write_summary(std::ostream& out, const RateReport& r) {
    out << "entanglement transfer rate summary\n";
    out << "  state rate: " << r.state_rate << " states/s\n";
    out << "  log base:   " << (r.base == certify::LogBase::two ? "2" : "e") << "\n";
    for (const auto& [sigma, total] : r.total_rate) {
        out << "  sigma " << sigma << ": " << total / 1e6
            << " M log-neg units/s (weighted mean E_N = "
            << r.mean_log_negativity.at(sigma) << ")\n";
    }
}

}  // namespace cvlink::rates
