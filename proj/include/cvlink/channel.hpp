#ifndef CVLINK_CHANNEL_HPP
#define CVLINK_CHANNEL_HPP

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

namespace cvlink::channel {

/// Binned probability distribution of the channel transmittance T in [0,1].
struct TransmissionHistogram {
    std::vector<double> bin_edges;      // size n_bins + 1, strictly increasing
    std::vector<double> probabilities;  // pre-filter, sums to 1
    std::vector<std::int64_t> counts;
    std::vector<bool> retained;

    int n_bins() const { return int(counts.size()); }
    double bin_center(int i) const { return 0.5 * (bin_edges[i] + bin_edges[i + 1]); }
    /// Probability mass in retained bins (not renormalized).
    double retained_mass() const;
    /// Mean of the unfiltered distribution.
    double mean() const;
    /// Bin index for a transmission value, or -1 if outside all bins.
    int find_bin(double t) const;
};

/// Gaussian beam clipped by a circular aperture, with isotropic
/// Gaussian wander of the beam center.
struct BeamGeometry {
    double beam_radius = 1.0;      // 1/e^2 intensity radius at the receiver
    double aperture_radius = 1.0;
    double jitter_sigma = 0.0;     // per-axis std dev of the center offset
};

struct ChannelParams {
    double eta = 1.0;            // detector efficiency, (0,1]
    double excess_noise = 0.0;   // SNU
    double monitor_tap = 0.0;    // fraction split off for monitoring
    bool noise_at_sender = false;
};

TransmissionHistogram empirical_histogram(const std::vector<double>& samples,
                                          double bin_width, std::int64_t min_count);

/// Fraction of beam power passing the aperture when the beam center is
/// displaced by r from the aperture center. Nonincreasing in r.
double beam_wander_transmission(const BeamGeometry& g, double r);

/// Draw n transmissions from the jitter model. Deterministic per seed.
std::vector<double> sample_transmissions(const BeamGeometry& g, int n,
                                         std::uint64_t seed);

/// Mean transmission of the jitter model by quadrature over the Rayleigh
/// offset distribution.
double expected_transmission(const BeamGeometry& g);

struct Propagated {
    std::complex<double> amplitude;
    double variance;
};

/// Loss + efficiency + excess noise acting on a coherent amplitude and a
/// quadrature variance (SNU). Default: noise added at the receiver.
Propagated propagate(std::complex<double> amplitude, double variance, double t,
                     const ChannelParams& p);

std::vector<double> read_transmission_file(const std::string& path);

}  // namespace cvlink::channel

#endif
