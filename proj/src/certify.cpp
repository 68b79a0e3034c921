#include "cvlink/certify.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace cvlink::certify {

using sdp::Complex;
using sdp::Triplet;

double log_negativity(double negativity, LogBase base) {
    if (negativity < 0.0) throw std::invalid_argument("log_negativity: negative input");
    double v = std::log(2.0 * negativity + 1.0);
    return base == LogBase::two ? v / std::log(2.0) : v;
}

namespace {

// Triplets of the Hermitian matrix |k><k|_A (x) O acting on the rho block.
void add_projected_operator(std::vector<Triplet>& out, int k, const fock::MatrixXcd& o,
                            int cutoff) {
    int off = k * cutoff;
    for (int i = 0; i < cutoff; ++i) {
        if (std::abs(o(i, i)) > 0.0)
            out.push_back({0, off + i, off + i, Complex(o(i, i).real(), 0.0)});
        for (int j = i + 1; j < cutoff; ++j)
            if (std::abs(o(i, j)) > 0.0) out.push_back({0, off + i, off + j, o(i, j)});
    }
}

}  // namespace

sdp::SdpProblem build_sdp(const CertificationProblem& p) {
    const int k_states = p.source.alphabet.size();
    const int nc = p.source.cutoff;
    const int n = k_states * nc;
    if (int(p.moments.size()) != k_states)
        throw std::invalid_argument("build_sdp: one moment set per alphabet state required");
    {
        Eigen::SelfAdjointEigenSolver<fock::MatrixXcd> es(p.source.gram,
                                                          Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() < -1e-10)
            throw std::invalid_argument("build_sdp: Gram matrix is not PSD");
    }

    sdp::SdpProblem prob;
    prob.block_dims = {n, n, n};  // rho, sigma+, sigma-
    prob.objective.resize(3);
    prob.objective[2] = fock::MatrixXcd::Identity(n, n);

    // tr_B rho = G, entrywise; the Gram diagonal entries sum to 1, so the
    // unit-trace condition is already implied and not added separately
    // (keeping it would make the equality set rank-deficient)
    for (int j = 0; j < k_states; ++j) {
        {
            sdp::Constraint c;
            for (int b = 0; b < nc; ++b)
                c.entries.push_back({0, j * nc + b, j * nc + b, Complex(1.0, 0.0)});
            c.rhs = p.source.gram(j, j).real();
            prob.equalities.push_back(std::move(c));
        }
        for (int l = j + 1; l < k_states; ++l) {
            sdp::Constraint re, im;
            for (int b = 0; b < nc; ++b) {
                re.entries.push_back({0, j * nc + b, l * nc + b, Complex(0.5, 0.0)});
                im.entries.push_back({0, j * nc + b, l * nc + b, Complex(0.0, 0.5)});
            }
            re.rhs = p.source.gram(j, l).real();
            im.rhs = p.source.gram(j, l).imag();
            prob.equalities.push_back(std::move(re));
            prob.equalities.push_back(std::move(im));
        }
    }

    // rho^{T_A} = sigma+ - sigma-, entrywise. The (p,q) component of the
    // partial transpose reads rho at (p', q') with the Alice indices swapped.
    for (int pi = 0; pi < n; ++pi) {
        int ia = pi / nc, ib = pi % nc;
        for (int qi = pi; qi < n; ++qi) {
            int ja = qi / nc, jb = qi % nc;
            int pp = ja * nc + ib, qq = ia * nc + jb;
            if (pi == qi) {
                sdp::Constraint c;
                c.entries.push_back({0, pp, qq, Complex(1.0, 0.0)});
                c.entries.push_back({1, pi, qi, Complex(-1.0, 0.0)});
                c.entries.push_back({2, pi, qi, Complex(1.0, 0.0)});
                prob.equalities.push_back(std::move(c));
            } else {
                sdp::Constraint re, im;
                re.entries.push_back({0, pp, qq, Complex(0.5, 0.0)});
                re.entries.push_back({1, pi, qi, Complex(-0.5, 0.0)});
                re.entries.push_back({2, pi, qi, Complex(0.5, 0.0)});
                im.entries.push_back({0, pp, qq, Complex(0.0, 0.5)});
                im.entries.push_back({1, pi, qi, Complex(0.0, -0.5)});
                im.entries.push_back({2, pi, qi, Complex(0.0, 0.5)});
                prob.equalities.push_back(std::move(re));
                prob.equalities.push_back(std::move(im));
            }
        }
    }

    // quadrature moment windows per state
    fock::QuadratureOps q = fock::quadrature_operators(nc);
    fock::MatrixXcd x2 = q.X * q.X, p2 = q.P * q.P;
    double s = p.sigma_level;
    for (int k = 0; k < k_states; ++k) {
        const MomentTargets& mt = p.moments[k];
        double pk = p.source.alphabet.priors[k];
        double se2 = std::sqrt(mt.se_var * mt.se_var +
                               4.0 * mt.mean_x * mt.mean_x * mt.se_mean * mt.se_mean);
        double sep2 = std::sqrt(mt.se_var * mt.se_var +
                                4.0 * mt.mean_p * mt.mean_p * mt.se_mean * mt.se_mean);
        struct Row {
            const fock::MatrixXcd* op;
            double target, half;
        } rows[] = {
            {&q.X, mt.mean_x, s * mt.se_mean},
            {&q.P, mt.mean_p, s * mt.se_mean},
            {&x2, mt.var_x + mt.mean_x * mt.mean_x, s * se2},
            {&p2, mt.var_p + mt.mean_p * mt.mean_p, s * sep2},
        };
        for (const auto& r : rows) {
            sdp::BoxConstraint bx;
            add_projected_operator(bx.entries, k, *r.op, nc);
            bx.lower = pk * (r.target - r.half);
            bx.upper = pk * (r.target + r.half);
            prob.boxes.push_back(std::move(bx));
        }
    }
    return prob;
}

CertificationResult certify_bin(const CertificationProblem& p, LogBase base) {
    sdp::SdpProblem prob = build_sdp(p);
    sdp::SolveOptions so;
    so.tol = p.tol;
    so.max_iter = p.max_iter;
    sdp::SdpSolution sol = sdp::solve(prob, so);

    CertificationResult r;
    r.status = sol.status;
    r.duality_gap = sol.duality_gap;

    // independent recheck of the returned state against the constraint set
    double viol = 0.0;
    if (!sol.block_values.empty()) {
        const auto& blocks = sol.block_values;
        for (const auto& c : prob.equalities)
            viol = std::max(viol, std::abs(sdp::SdpProblem::apply(c.entries, blocks) - c.rhs));
        for (std::size_t i = 0; i < prob.boxes.size(); ++i) {
            double v = sdp::SdpProblem::apply(prob.boxes[i].entries, blocks);
            viol = std::max(viol, prob.boxes[i].lower - v);
            viol = std::max(viol, v - prob.boxes[i].upper);
        }
        fock::DensityOperator rho{{p.source.alphabet.size(), p.source.cutoff},
                                  sol.block_values[0]};
        viol = std::max(viol, -rho.min_eigenvalue());
    }
    r.constraint_violation = viol;

    if (sol.status == sdp::SdpStatus::optimal && viol < 1e3 * p.tol) {
        r.negativity = std::max(0.0, sol.objective_value);
        double btol = 10.0 * p.tol;
        for (std::size_t i = 0; i < prob.boxes.size(); ++i) {
            static const char* names[] = {"X", "P", "X2", "P2"};
            double v = sol.box_values.empty() ? 0.0 : sol.box_values[i];
            double lo = prob.boxes[i].lower, hi = prob.boxes[i].upper;
            double slack = std::min(v - lo, hi - v);
            if (slack < btol * (1.0 + std::abs(hi))) {
                std::ostringstream name;
                name << "state" << i / 4 << ":" << names[i % 4];
                r.binding.push_back({name.str(), slack});
            }
        }
    } else {
        r.negativity = 0.0;  // conservative on non-optimal status
        if (sol.status == sdp::SdpStatus::optimal) r.status = sdp::SdpStatus::numerical_failure;
    }
    r.log_negativity = log_negativity(r.negativity, base);
    return r;
}

std::vector<MomentTargets> ideal_moments(const alphabet::Alphabet& a, double t_eff,
                                         double epsilon) {
    std::vector<MomentTargets> out;
    double st = std::sqrt(t_eff);
    for (const auto& amp : a.amplitudes) {
        MomentTargets m;
        m.mean_x = 2.0 * st * amp.real();
        m.mean_p = 2.0 * st * amp.imag();
        m.var_x = 1.0 + epsilon;
        m.var_p = 1.0 + epsilon;
        out.push_back(m);
    }
    return out;
}

namespace {

alphabet::Alphabet make_alphabet(AlphabetKind kind, double amplitude) {
    return kind == AlphabetKind::two_state ? alphabet::two_state(amplitude)
                                           : alphabet::four_state(amplitude);
}

}  // namespace

std::vector<double> theoretical_curve(AlphabetKind kind, double t_eff, double epsilon,
                                      const std::vector<double>& amplitude_grid,
                                      const CurveOptions& opt) {
    if (amplitude_grid.empty())
        throw std::invalid_argument("theoretical_curve: empty amplitude grid");
    std::vector<double> out;
    for (double a : amplitude_grid) {
        if (a == 0.0) {
            out.push_back(0.0);  // identical states carry no entanglement
            continue;
        }
        alphabet::Alphabet alpha = make_alphabet(kind, a);
        int nc = opt.cutoff > 0 ? opt.cutoff
                                : fock::default_cutoff(std::sqrt(t_eff) * a);
        CertificationProblem cp;
        cp.source = alphabet::source_model(alpha, nc);
        cp.moments = ideal_moments(alpha, t_eff, epsilon);
        cp.sigma_level = 0.0;
        cp.tol = opt.tol;
        out.push_back(certify_bin(cp, opt.base).negativity);
    }
    return out;
}

ComparisonTable compare_alphabets(double t_eff, const std::vector<double>& epsilon_grid,
                                  const std::vector<double>& amplitude_grid,
                                  const CurveOptions& opt) {
    ComparisonTable tab;
    const double zero_tol = 1e-5;
    for (double eps : epsilon_grid) {
        ComparisonRow row;
        row.epsilon = eps;
        auto two = theoretical_curve(AlphabetKind::two_state, t_eff, eps, amplitude_grid, opt);
        auto four = theoretical_curve(AlphabetKind::four_state, t_eff, eps, amplitude_grid, opt);
        for (std::size_t i = 0; i < amplitude_grid.size(); ++i) {
            if (two[i] > row.two_state_max) {
                row.two_state_max = two[i];
                row.two_state_argmax = amplitude_grid[i];
            }
            if (four[i] > row.four_state_max) {
                row.four_state_max = four[i];
                row.four_state_argmax = amplitude_grid[i];
            }
        }
        if (!tab.two_state_zero_epsilon && row.two_state_max < zero_tol)
            tab.two_state_zero_epsilon = eps;
        if (!tab.four_state_zero_epsilon && row.four_state_max < zero_tol)
            tab.four_state_zero_epsilon = eps;
        tab.rows.push_back(row);
    }
    return tab;
}

std::vector<BinResult> certify_all(const detection::BinnedMoments& binned,
                                   const alphabet::SourceModel& source,
                                   const std::vector<double>& sigma_levels,
                                   int workers, LogBase base, double tol) {
    struct Task {
        int bin;
        double sigma;
    };
    std::vector<Task> tasks;
    for (int b = 0; b < binned.n_bins(); ++b) {
        if (!binned.retained[b]) continue;
        for (double s : sigma_levels) tasks.push_back({b, s});
    }
    std::vector<BinResult> results(tasks.size());
    std::atomic<std::size_t> next{0};
    auto work = [&]() {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= tasks.size()) break;
            const Task& t = tasks[i];
            CertificationProblem cp;
            cp.source = source;
            cp.sigma_level = t.sigma;
            cp.tol = tol;
            for (int k = 0; k < binned.n_states(); ++k) {
                const auto& c = binned.cells[t.bin][k];
                cp.moments.push_back(
                    {c.mean_x, c.mean_p, c.var_x, c.var_p, c.se_mean, c.se_var});
            }
            BinResult br;
            br.bin = t.bin;
            br.bin_lo = binned.bin_lo[t.bin];
            br.bin_hi = binned.bin_hi[t.bin];
            br.prob = binned.prob[t.bin];
            br.sigma = t.sigma;
            br.result = certify_bin(cp, base);
            results[i] = std::move(br);
        }
    };
    int nw = std::max(1, workers);
    if (nw == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < nw; ++i) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }
    return results;
}

void write_results_csv(std::ostream& out, const std::vector<BinResult>& results,
                       const std::string& header_comment) {
    if (!header_comment.empty()) out << "# " << header_comment << "\n";
    out << "bin_lo,bin_hi,prob,sigma,negativity,log_negativity,status,gap\n";
    char buf[256];
    for (const auto& r : results) {
        std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.9g,%g,%.9g,%.9g,%s,%.3g\n", r.bin_lo,
                      r.bin_hi, r.prob, r.sigma, r.result.negativity,
                      r.result.log_negativity, sdp::to_string(r.result.status).c_str(),
                      r.result.duality_gap);
        out << buf;
    }
}

std::vector<BinResult> read_results_csv(std::istream& in) {
    std::vector<BinResult> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("bin_lo", 0) == 0) continue;
        BinResult r;
        char status[64] = {0};
        int got = std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf,%lf,%lf,%63[^,],%lf",
                              &r.bin_lo, &r.bin_hi, &r.prob, &r.sigma,
                              &r.result.negativity, &r.result.log_negativity, status,
                              &r.result.duality_gap);
        if (got < 7) continue;
        std::string st(status);
        if (st == "optimal") r.result.status = sdp::SdpStatus::optimal;
        else if (st == "infeasible") r.result.status = sdp::SdpStatus::infeasible;
        else if (st == "iteration_limit") r.result.status = sdp::SdpStatus::iteration_limit;
        else r.result.status = sdp::SdpStatus::numerical_failure;
        out.push_back(r);
    }
    return out;
}

std::vector<BinResult> read_results_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open results file: " + path);
    return read_results_csv(in);
}

}  // namespace cvlink::certify
