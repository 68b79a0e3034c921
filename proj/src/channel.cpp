#include "cvlink/channel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <random>
#include <stdexcept>

namespace cvlink::channel {

double TransmissionHistogram::retained_mass() const {
    double m = 0.0;
    for (int i = 0; i < n_bins(); ++i)
        if (retained[i]) m += probabilities[i];
    return m;
}

double TransmissionHistogram::mean() const {
    double m = 0.0;
    for (int i = 0; i < n_bins(); ++i) m += probabilities[i] * bin_center(i);
    return m;
}

int TransmissionHistogram::find_bin(double t) const {
    if (bin_edges.empty() || t < bin_edges.front() || t > bin_edges.back()) return -1;
    auto it = std::upper_bound(bin_edges.begin(), bin_edges.end(), t);
    int idx = int(it - bin_edges.begin()) - 1;
    if (idx == n_bins()) --idx;  // t exactly on the last edge
    return idx;
}

TransmissionHistogram empirical_histogram(const std::vector<double>& samples,
                                          double bin_width, std::int64_t min_count) {
    if (samples.empty()) throw std::invalid_argument("empirical_histogram: no samples");
    if (bin_width <= 0.0) throw std::invalid_argument("empirical_histogram: bin_width <= 0");
    for (double t : samples)
        if (t < 0.0 || t > 1.0)
            throw std::invalid_argument("empirical_histogram: sample outside [0,1]");

    auto [mn, mx] = std::minmax_element(samples.begin(), samples.end());
    double lo = std::floor(*mn / bin_width) * bin_width;
    int n_bins = std::max(1, int(std::ceil((*mx - lo) / bin_width + 1e-12)));
    if (lo + n_bins * bin_width <= *mx) ++n_bins;

    TransmissionHistogram h;
    h.bin_edges.resize(n_bins + 1);
    for (int i = 0; i <= n_bins; ++i) h.bin_edges[i] = lo + i * bin_width;
    h.counts.assign(n_bins, 0);
    for (double t : samples) {
        int idx = std::min(int((t - lo) / bin_width), n_bins - 1);
        ++h.counts[idx];
    }
    h.probabilities.resize(n_bins);
    h.retained.resize(n_bins);
    for (int i = 0; i < n_bins; ++i) {
        h.probabilities[i] = double(h.counts[i]) / double(samples.size());
        h.retained[i] = h.counts[i] >= min_count;
    }
    return h;
}

namespace {

// exp(-z) I_0(z), Abramowitz & Stegun 9.8.1 / 9.8.2.
double i0e(double z) {
    double az = std::abs(z);
    if (az < 3.75) {
        double t = z / 3.75, t2 = t * t;
        double i0 = 1.0 + t2 * (3.5156229 + t2 * (3.0899424 + t2 * (1.2067492 +
                    t2 * (0.2659732 + t2 * (0.0360768 + t2 * 0.0045813)))));
        return i0 * std::exp(-az);
    }
    double t = 3.75 / az;
    double p = 0.39894228 + t * (0.01328592 + t * (0.00225319 + t * (-0.00157565 +
               t * (0.00916281 + t * (-0.02057706 + t * (0.02635537 +
               t * (-0.01647633 + t * 0.00392377)))))));
    return p / std::sqrt(az);
}

double clipped_power_integrand(const BeamGeometry& g, double r, double rho) {
    double w2 = g.beam_radius * g.beam_radius;
    double d = rho - r;
    return 4.0 * rho / w2 * std::exp(-2.0 * d * d / w2) * i0e(4.0 * rho * r / w2);
}

double simpson(const std::function<double(double)>& f, double a, double b, int n) {
    if (n % 2) ++n;
    double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
}

}  // namespace

double beam_wander_transmission(const BeamGeometry& g, double r) {
    if (g.beam_radius <= 0.0 || g.aperture_radius <= 0.0)
        throw std::invalid_argument("beam_wander_transmission: nonpositive geometry");
    if (r < 0.0) throw std::invalid_argument("beam_wander_transmission: r < 0");
    auto f = [&](double rho) { return clipped_power_integrand(g, r, rho); };
    double prev = simpson(f, 0.0, g.aperture_radius, 64);
    for (int n = 128; n <= 16384; n *= 2) {
        double cur = simpson(f, 0.0, g.aperture_radius, n);
        if (std::abs(cur - prev) < 1e-11) {
            prev = cur;
            break;
        }
        prev = cur;
        if (n == 16384)
            throw std::runtime_error("beam_wander_transmission: integration did not converge");
    }
    return std::clamp(prev, 0.0, 1.0);
}

std::vector<double> sample_transmissions(const BeamGeometry& g, int n,
                                         std::uint64_t seed) {
    if (n <= 0) throw std::invalid_argument("sample_transmissions: n must be > 0");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> jitter(0.0, g.jitter_sigma);
    std::vector<double> out(n);
    for (int i = 0; i < n; ++i) {
        double dx = g.jitter_sigma > 0.0 ? jitter(rng) : 0.0;
        double dy = g.jitter_sigma > 0.0 ? jitter(rng) : 0.0;
        out[i] = beam_wander_transmission(g, std::hypot(dx, dy));
    }
    return out;
}

double expected_transmission(const BeamGeometry& g) {
    if (g.jitter_sigma <= 0.0) return beam_wander_transmission(g, 0.0);
    double s2 = g.jitter_sigma * g.jitter_sigma;
    auto f = [&](double r) {
        return r / s2 * std::exp(-0.5 * r * r / s2) * beam_wander_transmission(g, r);
    };
    return simpson(f, 0.0, 8.0 * g.jitter_sigma, 512);
}

Propagated propagate(std::complex<double> amplitude, double variance, double t,
                     const ChannelParams& p) {
    if (t < 0.0 || t > 1.0) throw std::invalid_argument("propagate: T outside [0,1]");
    if (p.eta <= 0.0 || p.eta > 1.0) throw std::invalid_argument("propagate: eta outside (0,1]");
    double te = t * p.eta;
    Propagated out;
    out.amplitude = std::sqrt(te) * amplitude;
    if (p.noise_at_sender)
        out.variance = 1.0 + te * (variance - 1.0 + p.excess_noise);
    else
        out.variance = 1.0 + te * (variance - 1.0) + p.excess_noise;
    return out;
}

std::vector<double> read_transmission_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open transmission file: " + path);
    std::vector<double> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        try {
            out.push_back(std::stod(line));
        } catch (const std::exception&) {
            // tolerate stray non-numeric lines
        }
    }
    return out;
}

}  // namespace cvlink::channel
