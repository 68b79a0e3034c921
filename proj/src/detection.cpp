#include "cvlink/detection.hpp"

#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace cvlink::detection {

namespace {

double sample_mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / double(v.size());
}

double sample_var(const std::vector<double>& v, double mean) {
    double s = 0.0;
    for (double x : v) s += (x - mean) * (x - mean);
    return s / double(v.size() - 1);
}

}  // namespace

std::vector<SlotRecord> simulate_records(const alphabet::Alphabet& a,
                                         const std::function<double(std::mt19937_64&)>& draw_t,
                                         const channel::ChannelParams& params,
                                         const SimulateOptions& opt) {
    if (opt.n_slots <= 0) throw std::invalid_argument("simulate_records: n_slots must be > 0");
    std::mt19937_64 rng(opt.seed);
    std::discrete_distribution<int> pick_state(a.priors.begin(), a.priors.end());
    std::normal_distribution<double> gauss(0.0, 1.0);

    std::vector<SlotRecord> out;
    out.reserve(opt.n_slots);
    for (std::int64_t i = 0; i < opt.n_slots; ++i) {
        SlotRecord r;
        r.monitor_t = draw_t(rng);
        r.state = pick_state(rng);
        auto prop = channel::propagate(a.amplitudes[r.state], 1.0, r.monitor_t, params);
        // Raw outcomes carry the acquisition scale; with an LO that fades
        // with the channel, everything additionally rides on sqrt(T).
        double g = opt.raw_scale;
        if (opt.lo_scales_with_t) g *= std::sqrt(r.monitor_t);
        double sd_sig = std::sqrt(prop.variance + 1.0);  // heterodyne vacuum unit
        double sd_vac = std::sqrt(2.0);
        r.signal_x = g * (2.0 * prop.amplitude.real() + sd_sig * gauss(rng));
        r.signal_p = g * (2.0 * prop.amplitude.imag() + sd_sig * gauss(rng));
        r.vacuum_x = g * sd_vac * gauss(rng);
        r.vacuum_p = g * sd_vac * gauss(rng);
        out.push_back(r);
    }
    return out;
}

std::vector<SlotRecord> simulate_records(const alphabet::Alphabet& a,
                                         const channel::TransmissionHistogram& hist,
                                         const channel::ChannelParams& params,
                                         const SimulateOptions& opt) {
    std::discrete_distribution<int> pick_bin(hist.probabilities.begin(),
                                             hist.probabilities.end());
    auto draw = [&, pick_bin](std::mt19937_64& rng) mutable {
        int b = pick_bin(rng);
        std::uniform_real_distribution<double> in_bin(hist.bin_edges[b],
                                                      hist.bin_edges[b + 1]);
        return std::clamp(in_bin(rng), 0.0, 1.0);
    };
    return simulate_records(a, draw, params, opt);
}

std::vector<SlotRecord> simulate_records(const alphabet::Alphabet& a, double fixed_t,
                                         const channel::ChannelParams& params,
                                         const SimulateOptions& opt) {
    return simulate_records(a, [fixed_t](std::mt19937_64&) { return fixed_t; }, params, opt);
}

NormalizedQuad normalize_quadrature(const std::vector<double>& signal,
                                    const std::vector<double>& vacuum) {
    if (vacuum.size() < 2 || signal.size() < 2)
        throw std::invalid_argument("normalize_quadrature: need >= 2 samples per port");
    double vac_mean = sample_mean(vacuum);
    double vac_var = sample_var(vacuum, vac_mean);
    if (vac_var <= 0.0)
        throw std::invalid_argument("normalize_quadrature: degenerate vacuum variance");
    double c = std::sqrt(2.0 / vac_var);

    NormalizedQuad q;
    q.scale = c;
    double m = sample_mean(signal);
    double v_out = c * c * sample_var(signal, m);  // normalized outcome variance
    q.mean = c * m;
    q.var = v_out - 1.0;
    double ns = double(signal.size()), nv = double(vacuum.size());
    q.se_mean = std::sqrt(v_out / ns);
    // the vacuum reference contributes its own estimation noise
    q.se_var = v_out * std::sqrt(2.0 / (ns - 1.0) + 2.0 / (nv - 1.0));
    return q;
}

BinnedMoments bin_records(const std::vector<SlotRecord>& records,
                          const channel::TransmissionHistogram& hist, int n_states,
                          std::int64_t min_count) {
    int nb = hist.n_bins();
    // [bin][state] -> raw sample buffers
    std::vector<std::vector<std::vector<double>>> sx(nb), sp(nb), vx(nb), vp(nb);
    for (int b = 0; b < nb; ++b) {
        sx[b].resize(n_states);
        sp[b].resize(n_states);
        vx[b].resize(n_states);
        vp[b].resize(n_states);
    }

    BinnedMoments out;
    for (const auto& r : records) {
        int b = hist.find_bin(r.monitor_t);
        if (b < 0 || r.state < 0 || r.state >= n_states) {
            ++out.out_of_range;
            continue;
        }
        sx[b][r.state].push_back(r.signal_x);
        sp[b][r.state].push_back(r.signal_p);
        vx[b][r.state].push_back(r.vacuum_x);
        vp[b][r.state].push_back(r.vacuum_p);
    }

    out.cells.resize(nb);
    out.bin_lo.resize(nb);
    out.bin_hi.resize(nb);
    out.prob.resize(nb);
    out.retained.resize(nb);
    out.raw_vacuum_var.resize(nb, 0.0);
    for (int b = 0; b < nb; ++b) {
        out.bin_lo[b] = hist.bin_edges[b];
        out.bin_hi[b] = hist.bin_edges[b + 1];
        out.prob[b] = hist.probabilities[b];
        out.cells[b].resize(n_states);
        std::int64_t total = 0;
        std::vector<double> all_vac;
        for (int k = 0; k < n_states; ++k) {
            total += std::int64_t(sx[b][k].size());
            all_vac.insert(all_vac.end(), vx[b][k].begin(), vx[b][k].end());
            all_vac.insert(all_vac.end(), vp[b][k].begin(), vp[b][k].end());
        }
        bool keep = hist.retained[b] && total >= min_count;
        for (int k = 0; k < n_states && keep; ++k)
            if (sx[b][k].size() < 2) keep = false;
        out.retained[b] = keep;
        if (all_vac.size() >= 2) {
            double m = sample_mean(all_vac);
            out.raw_vacuum_var[b] = sample_var(all_vac, m);
        }
        if (!keep) continue;
        for (int k = 0; k < n_states; ++k) {
            auto qx = normalize_quadrature(sx[b][k], vx[b][k]);
            auto qp = normalize_quadrature(sp[b][k], vp[b][k]);
            StateMoments& c = out.cells[b][k];
            c.mean_x = qx.mean;
            c.mean_p = qp.mean;
            c.var_x = qx.var;
            c.var_p = qp.var;
            c.n = std::int64_t(sx[b][k].size());
            c.se_mean = std::max(qx.se_mean, qp.se_mean);
            c.se_var = std::max(qx.se_var, qp.se_var);
        }
    }
    return out;
}

double QField::peak() const {
    double p = 0.0;
    for (double v : values) p = std::max(p, v);
    return p;
}

QField estimate_q(const std::vector<double>& xs, const std::vector<double>& ps,
                  const QGrid& grid) {
    if (xs.size() != ps.size() || xs.empty())
        throw std::invalid_argument("estimate_q: empty or mismatched samples");
    QField f;
    f.grid = grid;
    f.values.assign(std::size_t(grid.n) * grid.n, 0.0);
    double h = grid.step();
    std::int64_t inside = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        double re = 0.5 * xs[i];
        double im = 0.5 * ps[i];
        int ix = int(std::floor((re - grid.lo) / h));
        int iy = int(std::floor((im - grid.lo) / h));
        if (ix < 0 || ix >= grid.n || iy < 0 || iy >= grid.n) {
            ++f.n_outside;
            continue;
        }
        f.values[std::size_t(iy) * grid.n + ix] += 1.0;
        ++inside;
    }
    if (inside == 0) throw std::invalid_argument("estimate_q: grid does not cover data");
    double norm = double(inside) * h * h;  // sum * cell_area = 1 on the grid
    for (double& v : f.values) v /= norm;
    return f;
}

std::pair<double, double> stokes_to_quadrature(double s1_raw, double s2_raw,
                                               double lo_calibration) {
    if (lo_calibration == 0.0)
        throw std::invalid_argument("stokes_to_quadrature: zero LO calibration");
    double s = std::sqrt(std::abs(lo_calibration));
    return {s1_raw / s, s2_raw / s};
}

void write_records(std::ostream& out, const std::vector<SlotRecord>& records,
                   const std::string& header_comment) {
    if (!header_comment.empty()) out << "# " << header_comment << "\n";
    out << "# k,signal_x,signal_p,vacuum_x,vacuum_p,monitor_T\n";
    char buf[160];
    for (const auto& r : records) {
        std::snprintf(buf, sizeof buf, "%d,%.12g,%.12g,%.12g,%.12g,%.12g\n", r.state,
                      r.signal_x, r.signal_p, r.vacuum_x, r.vacuum_p, r.monitor_t);
        out << buf;
    }
}

std::vector<SlotRecord> read_records(std::istream& in, IngestStats* stats) {
    std::vector<SlotRecord> out;
    IngestStats local;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        SlotRecord r;
        char extra;
        int got = std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%lf,%lf %c", &r.state,
                              &r.signal_x, &r.signal_p, &r.vacuum_x, &r.vacuum_p,
                              &r.monitor_t, &extra);
        if (got != 6) {
            ++local.dropped;
            continue;
        }
        ++local.parsed;
        out.push_back(r);
    }
    if (stats) *stats = local;
    return out;
}

std::vector<SlotRecord> read_record_file(const std::string& path, IngestStats* stats) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open record file: " + path);
    return read_records(in, stats);
}

void write_moments_csv(std::ostream& out, const BinnedMoments& m,
                       const std::string& header_comment) {
    if (!header_comment.empty()) out << "# " << header_comment << "\n";
    out << "bin_lo,bin_hi,prob,state,mean_x,mean_p,var_x,var_p,n,se_mean,se_var\n";
    char buf[320];
    for (int b = 0; b < m.n_bins(); ++b) {
        if (!m.retained[b]) continue;
        for (int k = 0; k < m.n_states(); ++k) {
            const auto& c = m.cells[b][k];
            std::snprintf(buf, sizeof buf,
                          "%.6f,%.6f,%.9g,%d,%.12g,%.12g,%.12g,%.12g,%lld,%.12g,%.12g\n",
                          m.bin_lo[b], m.bin_hi[b], m.prob[b], k, c.mean_x, c.mean_p,
                          c.var_x, c.var_p, static_cast<long long>(c.n), c.se_mean,
                          c.se_var);
            out << buf;
        }
    }
}

BinnedMoments read_moments_csv(std::istream& in) {
    BinnedMoments m;
    std::string line;
    int n_states = 0;
    struct Row {
        double lo, hi, prob;
        int state;
        StateMoments sm;
    };
    std::vector<Row> rows;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("bin_lo", 0) == 0) continue;
        Row r;
        long long n = 0;
        int got = std::sscanf(line.c_str(),
                              "%lf,%lf,%lf,%d,%lf,%lf,%lf,%lf,%lld,%lf,%lf", &r.lo,
                              &r.hi, &r.prob, &r.state, &r.sm.mean_x, &r.sm.mean_p,
                              &r.sm.var_x, &r.sm.var_p, &n, &r.sm.se_mean,
                              &r.sm.se_var);
        if (got != 11) continue;
        r.sm.n = n;
        n_states = std::max(n_states, r.state + 1);
        rows.push_back(r);
    }
    for (const auto& r : rows) {
        int b = -1;
        for (int i = 0; i < int(m.bin_lo.size()); ++i)
            if (std::abs(m.bin_lo[i] - r.lo) < 1e-12) b = i;
        if (b < 0) {
            b = int(m.bin_lo.size());
            m.bin_lo.push_back(r.lo);
            m.bin_hi.push_back(r.hi);
            m.prob.push_back(r.prob);
            m.retained.push_back(true);
            m.raw_vacuum_var.push_back(0.0);
            m.cells.emplace_back();
        }
        if (int(m.cells[b].size()) <= r.state) m.cells[b].resize(n_states);
        m.cells[b][r.state] = r.sm;
    }
    for (auto& c : m.cells) c.resize(n_states);
    return m;
}

BinnedMoments read_moments_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open moments file: " + path);
    return read_moments_csv(in);
}

}  // namespace cvlink::detection
