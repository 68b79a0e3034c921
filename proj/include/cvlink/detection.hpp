#ifndef CVLINK_DETECTION_HPP
#define CVLINK_DETECTION_HPP

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "cvlink/alphabet.hpp"
#include "cvlink/channel.hpp"

namespace cvlink::detection {

/// One integrated time slot: signal outcome pair, the interleaved vacuum
/// reference pair, and the simultaneous transmission monitor value.
struct SlotRecord {
    int state = 0;
    double signal_x = 0.0;
    double signal_p = 0.0;
    double vacuum_x = 0.0;
    double vacuum_p = 0.0;
    double monitor_t = 0.0;
};

/// Shot-noise normalized conditional moments for one (bin, state) cell.
/// Variances are heterodyne-corrected state variances in SNU.
struct StateMoments {
    double mean_x = 0.0;
    double mean_p = 0.0;
    double var_x = 0.0;
    double var_p = 0.0;
    std::int64_t n = 0;
    double se_mean = 0.0;
    double se_var = 0.0;
};

struct BinnedMoments {
    std::vector<double> bin_lo, bin_hi;
    std::vector<double> prob;
    std::vector<bool> retained;
    std::vector<double> raw_vacuum_var;            // per bin, before normalization
    std::vector<std::vector<StateMoments>> cells;  // [bin][state]
    std::int64_t out_of_range = 0;

    int n_bins() const { return int(cells.size()); }
    int n_states() const { return cells.empty() ? 0 : int(cells[0].size()); }
};

struct SimulateOptions {
    std::int64_t n_slots = 0;
    std::uint64_t seed = 1;
    double raw_scale = 1.0;       // arbitrary acquisition scale on all raw outcomes
    bool lo_scales_with_t = true; // shot-noise level follows the monitored T
};

/// Forward model of the link: per slot draw T, pick a state, propagate it,
/// and emit double-homodyne outcomes plus the vacuum reference.
std::vector<SlotRecord> simulate_records(const alphabet::Alphabet& a,
                                         const std::function<double(std::mt19937_64&)>& draw_t,
                                         const channel::ChannelParams& params,
                                         const SimulateOptions& opt);

std::vector<SlotRecord> simulate_records(const alphabet::Alphabet& a,
                                         const channel::TransmissionHistogram& hist,
                                         const channel::ChannelParams& params,
                                         const SimulateOptions& opt);

std::vector<SlotRecord> simulate_records(const alphabet::Alphabet& a, double fixed_t,
                                         const channel::ChannelParams& params,
                                         const SimulateOptions& opt);

struct NormalizedQuad {
    double mean = 0.0;
    double var = 0.0;       // state variance, vacuum unit subtracted
    double se_mean = 0.0;
    double se_var = 0.0;
    double scale = 0.0;     // multiplier taking raw outcomes to SNU
};

/// Vacuum-referenced normalization of one quadrature: scale so the vacuum
/// outcome variance is 2, then subtract the heterodyne vacuum unit.
NormalizedQuad normalize_quadrature(const std::vector<double>& signal,
                                    const std::vector<double>& vacuum);

/// Sort records into transmission bins and estimate conditional moments
/// per (bin, state). Bins below min_count are marked not retained.
BinnedMoments bin_records(const std::vector<SlotRecord>& records,
                          const channel::TransmissionHistogram& hist, int n_states,
                          std::int64_t min_count);

struct QGrid {
    double lo = -3.0;
    double hi = 3.0;
    int n = 60;
    double step() const { return (hi - lo) / n; }
};

struct QField {
    QGrid grid;
    std::vector<double> values;  // n x n, row-major in (re, im)
    std::int64_t n_outside = 0;  // samples not covered by the grid
    double peak() const;
};

/// Histogram estimate of Q(beta) from normalized outcome pairs,
/// beta = (x + i p)/2, normalized so sum * cell_area = 1.
QField estimate_q(const std::vector<double>& xs, const std::vector<double>& ps,
                  const QGrid& grid);

/// Quadratures from raw S1/S2 Stokes outcomes with a trusted circular LO;
/// the calibration constant cancels after vacuum normalization.
std::pair<double, double> stokes_to_quadrature(double s1_raw, double s2_raw,
                                               double lo_calibration);

struct IngestStats {
    std::int64_t parsed = 0;
    std::int64_t dropped = 0;
};

void write_records(std::ostream& out, const std::vector<SlotRecord>& records,
                   const std::string& header_comment = "");
std::vector<SlotRecord> read_records(std::istream& in, IngestStats* stats = nullptr);
std::vector<SlotRecord> read_record_file(const std::string& path,
                                         IngestStats* stats = nullptr);

void write_moments_csv(std::ostream& out, const BinnedMoments& m,
                       const std::string& header_comment = "");
BinnedMoments read_moments_csv(std::istream& in);
BinnedMoments read_moments_file(const std::string& path);

}  // namespace cvlink::detection

#endif
