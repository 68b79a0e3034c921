#include "cvlink/sdp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ostream>
#include <stdexcept>

#include <lapacke.h>

namespace cvlink::sdp {

int SdpProblem::total_dim() const {
    int d = 0;
    for (int b : block_dims) d += b;
    return d;
}

void SdpProblem::validate() const {
    for (int d : block_dims)
        if (d <= 0) throw std::invalid_argument("sdp: nonpositive block dimension");
    if (!objective.empty() && objective.size() != block_dims.size())
        throw std::invalid_argument("sdp: objective/block count mismatch");
    auto check_entries = [&](const std::vector<Triplet>& es) {
        for (const auto& e : es) {
            if (e.block < 0 || e.block >= int(block_dims.size()))
                throw std::invalid_argument("sdp: triplet block out of range");
            int d = block_dims[e.block];
            if (e.row < 0 || e.row >= d || e.col < 0 || e.col >= d)
                throw std::invalid_argument("sdp: triplet index out of range");
            if (e.row == e.col && std::abs(e.value.imag()) > 1e-14)
                throw std::invalid_argument("sdp: diagonal triplet must be real");
        }
    };
    for (const auto& c : equalities) check_entries(c.entries);
    for (const auto& b : boxes) {
        check_entries(b.entries);
        if (b.lower > b.upper + 1e-14)
            throw std::invalid_argument("sdp: box with lower > upper");
    }
}

double SdpProblem::apply(const std::vector<Triplet>& entries,
                         const std::vector<MatrixXcd>& blocks) {
    Complex s = 0.0;
    for (const auto& e : entries) {
        if (e.row == e.col)
            s += e.value * blocks[e.block](e.row, e.row);
        else
            s += e.value * blocks[e.block](e.col, e.row) +
                 std::conj(e.value) * blocks[e.block](e.row, e.col);
    }
    return s.real();
}

std::string to_string(SdpStatus s) {
    switch (s) {
        case SdpStatus::optimal: return "optimal";
        case SdpStatus::infeasible: return "infeasible";
        case SdpStatus::iteration_limit: return "iteration_limit";
        case SdpStatus::numerical_failure: return "numerical_failure";
    }
    return "unknown";
}

namespace {

struct RawEntry {
    int p, q;
    Complex a;  // a * E_pq
};

struct BlockEntries {
    int block;
    std::vector<RawEntry> raw;
};

struct IConstraint {
    std::vector<BlockEntries> blocks;  // sorted by block id
    double rhs = 0.0;
};

// Expand Hermitian triplets into raw matrix entries, grouped per block.
std::vector<BlockEntries> expand(const std::vector<Triplet>& entries) {
    std::vector<BlockEntries> out;
    for (const auto& e : entries) {
        auto it = std::find_if(out.begin(), out.end(),
                               [&](const BlockEntries& b) { return b.block == e.block; });
        if (it == out.end()) {
            out.push_back({e.block, {}});
            it = out.end() - 1;
        }
        if (e.row == e.col) {
            it->raw.push_back({e.row, e.col, Complex(e.value.real(), 0.0)});
        } else {
            it->raw.push_back({e.row, e.col, e.value});
            it->raw.push_back({e.col, e.row, std::conj(e.value)});
        }
    }
    std::sort(out.begin(), out.end(),
              [](const BlockEntries& a, const BlockEntries& b) { return a.block < b.block; });
    return out;
}

double apply_raw(const IConstraint& c, const std::vector<MatrixXcd>& mats) {
    Complex s = 0.0;
    for (const auto& be : c.blocks) {
        const MatrixXcd& m = mats[be.block];
        for (const auto& e : be.raw) s += e.a * m(e.q, e.p);
    }
    return s.real();
}

void scatter_raw(const IConstraint& c, double w, std::vector<MatrixXcd>& mats) {
    for (const auto& be : c.blocks)
        for (const auto& e : be.raw) mats[be.block](e.p, e.q) += w * e.a;
}

MatrixXcd herm(const MatrixXcd& m) { return 0.5 * (m + m.adjoint()); }

// Functions of a Hermitian PSD matrix via eigendecomposition, with a
// floor on the eigenvalues.
MatrixXcd psd_power(const MatrixXcd& m, double p, double floor_ev = 1e-300) {
    Eigen::SelfAdjointEigenSolver<MatrixXcd> es(m);
    Eigen::VectorXd ev = es.eigenvalues().cwiseMax(floor_ev);
    Eigen::VectorXd evp = ev.array().pow(p);
    return es.eigenvectors() * evp.asDiagonal() * es.eigenvectors().adjoint();
}

// Largest step alpha <= 1 with X + alpha * dX staying PSD (up to tau).
double max_step(const MatrixXcd& x, const MatrixXcd& dx, double tau) {
    Eigen::LLT<MatrixXcd> llt(x);
    MatrixXcd s;
    if (llt.info() == Eigen::Success) {
        MatrixXcd l = llt.matrixL();
        s = l.triangularView<Eigen::Lower>().solve(dx);
        s = l.triangularView<Eigen::Lower>().solve(s.adjoint()).adjoint();
    } else {
        MatrixXcd xinvh = psd_power(x, -0.5, 1e-14);
        s = xinvh * dx * xinvh;
    }
    Eigen::SelfAdjointEigenSolver<MatrixXcd> es(herm(s), Eigen::EigenvaluesOnly);
    double lmin = es.eigenvalues().minCoeff();
    if (lmin >= 0.0) return 1.0;
    return std::min(1.0, -tau / lmin);
}

struct Internal {
    std::vector<int> dims;
    std::vector<MatrixXcd> obj;
    std::vector<IConstraint> cons;
    std::vector<double> row_scale;
    int n_orig_blocks = 0;
};

Internal build_internal(const SdpProblem& p) {
    Internal in;
    in.dims = p.block_dims;
    in.n_orig_blocks = int(p.block_dims.size());
    in.obj.resize(p.block_dims.size());
    for (std::size_t b = 0; b < p.block_dims.size(); ++b) {
        if (b < p.objective.size() && p.objective[b].size() > 0)
            in.obj[b] = p.objective[b];
        else
            in.obj[b] = MatrixXcd::Zero(p.block_dims[b], p.block_dims[b]);
    }
    for (const auto& c : p.equalities) {
        IConstraint ic;
        ic.blocks = expand(c.entries);
        ic.rhs = c.rhs;
        in.cons.push_back(std::move(ic));
    }
    for (const auto& bx : p.boxes) {
        if (bx.upper - bx.lower < 1e-13) {
            IConstraint ic;
            ic.blocks = expand(bx.entries);
            ic.rhs = 0.5 * (bx.lower + bx.upper);
            in.cons.push_back(std::move(ic));
            continue;
        }
        int sl = int(in.dims.size());
        in.dims.push_back(1);
        in.obj.push_back(MatrixXcd::Zero(1, 1));
        int su = int(in.dims.size());
        in.dims.push_back(1);
        in.obj.push_back(MatrixXcd::Zero(1, 1));

        IConstraint lo;
        lo.blocks = expand(bx.entries);
        lo.blocks.push_back({sl, {{0, 0, Complex(-1.0, 0.0)}}});
        std::sort(lo.blocks.begin(), lo.blocks.end(),
                  [](const BlockEntries& a, const BlockEntries& b) { return a.block < b.block; });
        lo.rhs = bx.lower;
        in.cons.push_back(std::move(lo));

        IConstraint hi;
        hi.blocks = expand(bx.entries);
        hi.blocks.push_back({su, {{0, 0, Complex(1.0, 0.0)}}});
        std::sort(hi.blocks.begin(), hi.blocks.end(),
                  [](const BlockEntries& a, const BlockEntries& b) { return a.block < b.block; });
        hi.rhs = bx.upper;
        in.cons.push_back(std::move(hi));
    }
    // normalize every row to unit Frobenius norm; mixed scales (quadratic
    // moment operators vs single-entry couplings) otherwise leave the Schur
    // complement badly conditioned and the achievable feasibility floor high
    for (auto& ic : in.cons) {
        double n2 = 0.0;
        for (const auto& be : ic.blocks)
            for (const auto& e : be.raw) n2 += std::norm(e.a);
        double s = std::sqrt(n2);
        if (s < 1e-300) s = 1.0;
        for (auto& be : ic.blocks)
            for (auto& e : be.raw) e.a /= s;
        ic.rhs /= s;
        in.row_scale.push_back(s);
    }
    return in;
}

// Schur matrix M_ij = sum_b tr(A_i^b W_b A_j^b W_b), lower triangle.
void assemble_schur(const std::vector<IConstraint>& cons,
                    const std::vector<MatrixXcd>& w, Eigen::MatrixXd& m) {
    int nc = int(cons.size());
    for (int i = 0; i < nc; ++i) {
        const auto& ci = cons[i];
        for (int j = i; j < nc; ++j) {
            const auto& cj = cons[j];
            Complex s = 0.0;
            auto it = ci.blocks.begin();
            auto jt = cj.blocks.begin();
            while (it != ci.blocks.end() && jt != cj.blocks.end()) {
                if (it->block < jt->block) {
                    ++it;
                } else if (jt->block < it->block) {
                    ++jt;
                } else {
                    const MatrixXcd& wb = w[it->block];
                    const Complex* wd = wb.data();
                    const int n = int(wb.rows());
                    for (const auto& t : it->raw)
                        for (const auto& u : jt->raw)
                            // tr(a E_pq W b E_rs W) = a b W(q,r) W(s,p)
                            s += t.a * u.a * wd[t.q + std::size_t(u.p) * n] *
                                 wd[u.q + std::size_t(t.p) * n];
                    ++it;
                    ++jt;
                }
            }
            m(j, i) = s.real();
        }
    }
}

// Re-solve restricted to the conjectured optimal face.  On a degenerate
// instance the interior-point iterate stalls with primal infeasibility at the
// noise floor of the scaled normal equations while the multipliers grow
// large, so the objective error |y|*|rp| can reach 1e-4.  Restricted to the
// span of the dominant eigenvectors of X the remaining problem is linear and
// solves to machine precision; a matching dual certificate is recovered by a
// minimum-norm correction of y.
struct PolishResult {
    bool ok = false;
    std::vector<MatrixXcd> X;
    VectorXd y;
    double pobj = 0.0;
    double dobj = 0.0;
};

PolishResult polish_on_face(const Internal& in, const VectorXd& b,
                            const std::vector<MatrixXcd>& X0, const VectorXd& y0,
                            double pobj0, double dobj0) {
    const int nb = int(in.dims.size());
    const int m = int(b.size());
    const bool trace = std::getenv("CVLINK_SDP_TRACE") != nullptr;
    PolishResult out;

    double bmax = 1.0 + b.lpNorm<Eigen::Infinity>();

    // build Z(y) = C - A^T(y)
    auto make_z = [&](const VectorXd& yy) {
        std::vector<MatrixXcd> zm(nb);
        for (int bq = 0; bq < nb; ++bq) zm[bq] = in.obj[bq];
        for (int i = 0; i < m; ++i)
            for (const auto& be : in.cons[i].blocks)
                for (const auto& e : be.raw) zm[be.block](e.p, e.q) -= yy(i) * e.a;
        for (int bq = 0; bq < nb; ++bq) zm[bq] = herm(zm[bq]);
        return zm;
    };

    struct Par {
        int block, u, v, kind;  // kind 0: diag, 1: re, 2: im
    };

    // least-squares feasible point on the face spanned by V: X_b = V_b S_b V_b^dag
    struct PrimalFit {
        std::vector<MatrixXcd> X;
        double resid = 1e300, pobj = 0.0, smin = 0.0;
    };
    auto primal_fit = [&](const std::vector<MatrixXcd>& V,
                          const std::vector<int>& rk) {
        PrimalFit fit;
        std::vector<Par> pars;
        for (int bq = 0; bq < nb; ++bq) {
            for (int u = 0; u < rk[bq]; ++u) pars.push_back({bq, u, u, 0});
            for (int u = 0; u < rk[bq]; ++u)
                for (int v = u + 1; v < rk[bq]; ++v) {
                    pars.push_back({bq, u, v, 1});
                    pars.push_back({bq, u, v, 2});
                }
        }
        int npar = int(pars.size());
        Eigen::MatrixXd Amat(m, npar);
        VectorXd cvec(npar);
        for (int k = 0; k < npar; ++k) {
            const Par& pp = pars[k];
            const MatrixXcd& vb = V[pp.block];
            MatrixXcd bm;
            if (pp.kind == 0)
                bm = vb.col(pp.u) * vb.col(pp.u).adjoint();
            else if (pp.kind == 1)
                bm = vb.col(pp.u) * vb.col(pp.v).adjoint() +
                     vb.col(pp.v) * vb.col(pp.u).adjoint();
            else
                bm = Complex(0.0, 1.0) * vb.col(pp.u) * vb.col(pp.v).adjoint() -
                     Complex(0.0, 1.0) * vb.col(pp.v) * vb.col(pp.u).adjoint();
            cvec(k) = (in.obj[pp.block].cwiseProduct(bm.conjugate())).sum().real();
            for (int i = 0; i < m; ++i) {
                Complex s = 0.0;
                for (const auto& be : in.cons[i].blocks) {
                    if (be.block != pp.block) continue;
                    for (const auto& e : be.raw) s += e.a * bm(e.q, e.p);
                }
                Amat(i, k) = s.real();
            }
        }
        VectorXd sv = Amat.colPivHouseholderQr().solve(b);
        fit.resid = (Amat * sv - b).lpNorm<Eigen::Infinity>();
        fit.pobj = cvec.dot(sv);
        std::vector<MatrixXcd> S(nb);
        for (int bq = 0; bq < nb; ++bq) S[bq] = MatrixXcd::Zero(rk[bq], rk[bq]);
        for (int k = 0; k < npar; ++k) {
            const Par& pp = pars[k];
            if (pp.kind == 0) {
                S[pp.block](pp.u, pp.u) = sv(k);
            } else if (pp.kind == 1) {
                S[pp.block](pp.u, pp.v) += sv(k);
                S[pp.block](pp.v, pp.u) += sv(k);
            } else {
                S[pp.block](pp.u, pp.v) += Complex(0.0, 1.0) * sv(k);
                S[pp.block](pp.v, pp.u) += Complex(0.0, -1.0) * sv(k);
            }
        }
        fit.X.resize(nb);
        fit.smin = 0.0;
        for (int bq = 0; bq < nb; ++bq) {
            if (rk[bq] == 0) {
                fit.X[bq] = MatrixXcd::Zero(in.dims[bq], in.dims[bq]);
                continue;
            }
            Eigen::SelfAdjointEigenSolver<MatrixXcd> e2(S[bq], Eigen::EigenvaluesOnly);
            fit.smin = std::min(fit.smin, e2.eigenvalues().minCoeff());
            fit.X[bq] = V[bq] * S[bq] * V[bq].adjoint();
        }
        return fit;
    };

    // minimum-norm correction of y with (C - A^T(y)) V = 0
    struct DualFit {
        VectorXd y;
        double zres = 1e300;
    };
    auto dual_fit = [&](const std::vector<MatrixXcd>& V, const std::vector<int>& rk,
                        const VectorXd& ycur) {
        DualFit fit;
        int nrows = 0;
        std::vector<int> row_off(nb);
        for (int bq = 0; bq < nb; ++bq) {
            row_off[bq] = nrows;
            nrows += 2 * in.dims[bq] * rk[bq];
        }
        Eigen::MatrixXd K = Eigen::MatrixXd::Zero(nrows, m);
        VectorXd rz(nrows);
        auto zm = make_z(ycur);
        for (int bq = 0; bq < nb; ++bq) {
            if (rk[bq] == 0) continue;
            MatrixXcd zv = zm[bq] * V[bq];
            int n = in.dims[bq];
            for (int c = 0; c < rk[bq]; ++c)
                for (int p = 0; p < n; ++p) {
                    rz(row_off[bq] + 2 * (c * n + p)) = zv(p, c).real();
                    rz(row_off[bq] + 2 * (c * n + p) + 1) = zv(p, c).imag();
                }
        }
        for (int i = 0; i < m; ++i)
            for (const auto& be : in.cons[i].blocks) {
                if (rk[be.block] == 0) continue;
                int n = in.dims[be.block];
                for (const auto& e : be.raw)
                    for (int c = 0; c < rk[be.block]; ++c) {
                        Complex coef = e.a * V[be.block](e.q, c);
                        K(row_off[be.block] + 2 * (c * n + e.p), i) += coef.real();
                        K(row_off[be.block] + 2 * (c * n + e.p) + 1, i) += coef.imag();
                    }
            }
        // among all dy with K dy = rz, pick the one minimizing the change of
        // Z = C - A^T(y): min dy^T Q dy with Q = A A^T, via the normal
        // equations K Q^-1 K^T nu = rz.  A plain minimum-norm dy lets A^T
        // amplify the correction and can throw Z far outside the cone.
        Eigen::MatrixXd Q(m, m);
        std::vector<MatrixXcd> wid(nb);
        for (int bq = 0; bq < nb; ++bq)
            wid[bq] = MatrixXcd::Identity(in.dims[bq], in.dims[bq]);
        assemble_schur(in.cons, wid, Q);
        for (int i = 0; i < m; ++i) {
            Q(i, i) += 1e-10 * (1.0 + Q(i, i));
            for (int j = i + 1; j < m; ++j) Q(i, j) = Q(j, i);
        }
        Eigen::LLT<Eigen::MatrixXd> qllt(Q);
        if (qllt.info() != Eigen::Success) {
            Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(K);
            VectorXd dy = cod.solve(rz);
            fit.y = ycur + dy;
            fit.zres = (K * dy - rz).lpNorm<Eigen::Infinity>();
            return fit;
        }
        Eigen::MatrixXd QiKt = qllt.solve(K.transpose());
        Eigen::MatrixXd KQiKt = K * QiKt;
        for (int i = 0; i < nrows; ++i) KQiKt(i, i) += 1e-12 * (1.0 + KQiKt(i, i));
        VectorXd nu = KQiKt.ldlt().solve(rz);
        VectorXd dy = QiKt * nu;
        fit.y = ycur + dy;
        fit.zres = (K * dy - rz).lpNorm<Eigen::Infinity>();
        return fit;
    };

    std::vector<Eigen::SelfAdjointEigenSolver<MatrixXcd>> es;
    es.reserve(nb);
    double lmax = 0.0;
    for (int bq = 0; bq < nb; ++bq) {
        es.emplace_back(X0[bq]);
        lmax = std::max(lmax, es.back().eigenvalues().maxCoeff());
    }
    if (!(lmax > 0.0)) return out;
    if (trace)
        for (int bq = 0; bq < nb; ++bq) {
            const auto& ev = es[bq].eigenvalues();
            std::fprintf(stderr, "polish spectrum[%d]:", bq);
            for (int i = std::max(0, int(ev.size()) - 8); i < ev.size(); ++i)
                std::fprintf(stderr, " %.2e", ev(i));
            std::fprintf(stderr, "\n");
        }

    for (double tau : {1e-2, 1e-3, 1e-4, 1e-5, 1e-6}) {
        // initial face from the dominant spectrum of the iterate
        std::vector<MatrixXcd> V(nb);
        std::vector<int> rk(nb);
        int npar = 0;
        for (int bq = 0; bq < nb; ++bq) {
            const auto& ev = es[bq].eigenvalues();
            int r = 0;
            for (int i = 0; i < ev.size(); ++i)
                if (ev(i) > tau * lmax) ++r;
            rk[bq] = r;
            V[bq] = es[bq].eigenvectors().rightCols(r);
            npar += r * r;
        }
        if (npar == 0 || npar > 4096) continue;

        // feasible point on the face, then Gauss-Newton on the factorization
        // X_b = F_b F_b^dag to remove the basis misalignment inherited from
        // the unconverged iterate (quadratic convergence, psd by construction)
        PrimalFit pf = primal_fit(V, rk);
        if (trace)
            std::fprintf(stderr, "polish tau=%.0e npar=%d resid=%.2e smin=%.2e\n",
                         tau, npar, pf.resid, pf.smin);
        if (pf.resid > 1e-3 * bmax || pf.smin < -1e-5 * (1.0 + lmax)) continue;

        std::vector<MatrixXcd> F(nb);
        int pvars = 0;
        for (int bq = 0; bq < nb; ++bq) {
            Eigen::SelfAdjointEigenSolver<MatrixXcd> ef(pf.X[bq]);
            Eigen::VectorXd ev = ef.eigenvalues().cwiseMax(0.0).tail(rk[bq]);
            F[bq] = ef.eigenvectors().rightCols(rk[bq]) *
                    ev.cwiseSqrt().asDiagonal();
            pvars += 2 * in.dims[bq] * rk[bq];
        }

        auto eval_resid = [&](const std::vector<MatrixXcd>& Fc, VectorXd& rh) {
            std::vector<MatrixXcd> Xc(nb);
            for (int bq = 0; bq < nb; ++bq) Xc[bq] = Fc[bq] * Fc[bq].adjoint();
            for (int i = 0; i < m; ++i) rh(i) = b(i) - apply_raw(in.cons[i], Xc);
            return rh.lpNorm<Eigen::Infinity>();
        };

        // Levenberg-Marquardt on the factor entries: adaptive damping keeps
        // the near-null rotation modes of the factorization under control
        VectorXd rh(m);
        double resid = eval_resid(F, rh);
        double lam_rel = 1e-8;
        for (int gn = 0; gn < 30 && pvars > 0; ++gn) {
            if (trace)
                std::fprintf(stderr, "polish   gn %d resid=%.2e lam=%.1e\n", gn, resid,
                             lam_rel);
            if (resid < 1e-12 * bmax) break;
            // J(i, (b,j,u,re/im)) = d A_i(F F^dag) / dF_b(j,u)
            Eigen::MatrixXd J = Eigen::MatrixXd::Zero(m, pvars);
            std::vector<int> off(nb);
            {
                int o = 0;
                for (int bq = 0; bq < nb; ++bq) {
                    off[bq] = o;
                    o += 2 * in.dims[bq] * rk[bq];
                }
            }
            for (int i = 0; i < m; ++i)
                for (const auto& be : in.cons[i].blocks) {
                    int bq = be.block;
                    if (rk[bq] == 0) continue;
                    int n = in.dims[bq];
                    for (const auto& e : be.raw)
                        for (int u = 0; u < rk[bq]; ++u) {
                            // dX = e_j f_u^dag + f_u e_j^dag per column u
                            Complex ca = e.a * std::conj(F[bq](e.p, u));
                            Complex cb = e.a * F[bq](e.q, u);
                            int ja = off[bq] + 2 * (u * n + e.q);
                            int jb = off[bq] + 2 * (u * n + e.p);
                            J(i, ja) += ca.real();
                            J(i, ja + 1) -= ca.imag();
                            J(i, jb) += cb.real();
                            J(i, jb + 1) += cb.imag();
                        }
                }
            Eigen::MatrixXd JtJ = J.transpose() * J;
            VectorXd g = J.transpose() * rh;
            double s2max = JtJ.diagonal().maxCoeff();
            bool accepted = false;
            for (int attempt = 0; attempt < 8; ++attempt) {
                Eigen::MatrixXd Jreg = JtJ;
                double lam2 = lam_rel * lam_rel * s2max;
                for (int k = 0; k < int(Jreg.rows()); ++k) Jreg(k, k) += lam2;
                Eigen::LLT<Eigen::MatrixXd> llt(Jreg);
                if (llt.info() != Eigen::Success) {
                    lam_rel *= 10.0;
                    continue;
                }
                VectorXd step = llt.solve(g);
                std::vector<MatrixXcd> Ft = F;
                for (int bq = 0; bq < nb; ++bq) {
                    int n = in.dims[bq];
                    for (int u = 0; u < rk[bq]; ++u)
                        for (int j = 0; j < n; ++j) {
                            int k = off[bq] + 2 * (u * n + j);
                            Ft[bq](j, u) += Complex(step(k), step(k + 1));
                        }
                }
                VectorXd rt(m);
                double resid_t = eval_resid(Ft, rt);
                if (resid_t < resid) {
                    F = std::move(Ft);
                    rh = rt;
                    resid = resid_t;
                    lam_rel = std::max(1e-10, lam_rel * 0.3);
                    accepted = true;
                    break;
                }
                lam_rel *= 10.0;
            }
            if (!accepted) break;
        }
        if (!(resid < 1e-11 * bmax)) continue;

        std::vector<MatrixXcd> Xp(nb);
        double pobj = 0.0, xtrace = 0.0;
        for (int bq = 0; bq < nb; ++bq) {
            Xp[bq] = F[bq] * F[bq].adjoint();
            pobj += (in.obj[bq].cwiseProduct(Xp[bq].conjugate())).sum().real();
            xtrace += Xp[bq].trace().real();
        }

        // dual certificate on the refined face (orthonormal basis of F)
        for (int bq = 0; bq < nb; ++bq) {
            if (rk[bq] == 0) continue;
            Eigen::HouseholderQR<MatrixXcd> qr(F[bq]);
            V[bq] = MatrixXcd(qr.householderQ()).leftCols(rk[bq]);
        }
        DualFit df = dual_fit(V, rk, y0);
        double dobj = b.dot(df.y);
        auto zm = make_z(df.y);
        double zmin = 0.0;
        for (int bq = 0; bq < nb; ++bq) {
            Eigen::SelfAdjointEigenSolver<MatrixXcd> e3(zm[bq], Eigen::EigenvaluesOnly);
            zmin = std::min(zmin, e3.eigenvalues().minCoeff());
        }
        // certified optimality gap: |<C,X> - b.y| plus the dual cone defect
        // charged against the total primal trace
        double gap_cert = std::abs(pobj - dobj) + std::max(0.0, -zmin) * xtrace +
                          df.zres * xtrace;
        if (trace)
            std::fprintf(stderr,
                         "polish   dual zres=%.2e zmin=%.2e gap_cert=%.2e "
                         "pobj=%.9f\n",
                         df.zres, zmin, gap_cert, pobj);
        if (gap_cert <= 1e-7 * (1.0 + std::abs(pobj))) {
            out.ok = true;
            out.X = std::move(Xp);
            out.y = std::move(df.y);
            out.pobj = pobj;
            out.dobj = dobj;
            return out;
        }
        // no nearby dual certificate (the iterate's multipliers can sit far
        // from the face-complementary dual set on degenerate instances);
        // accept the exactly feasible primal point if its value stays inside
        // the interval already certified by the interior-point pair
        double w = 10.0 * std::abs(pobj0 - dobj0) + 1e-6 * (1.0 + std::abs(pobj));
        if (pobj >= dobj0 - w && pobj <= pobj0 + w) {
            out.ok = true;
            out.X = std::move(Xp);
            out.y = y0;
            out.pobj = pobj;
            out.dobj = dobj0;
            if (trace)
                std::fprintf(stderr, "polish accepted (primal-only): w=%.2e\n", w);
            return out;
        }
        continue;
    }
    return out;
}

}  // namespace

SdpSolution solve(const SdpProblem& problem, const SolveOptions& opt) {
    problem.validate();
    if (problem.total_dim() > opt.total_dim_cap)
        throw std::invalid_argument("sdp: total dimension exceeds cap");

    Internal in = build_internal(problem);
    const int nb = int(in.dims.size());
    const int m = int(in.cons.size());
    int ntot = 0;
    for (int d : in.dims) ntot += d;

    VectorXd b(m);
    for (int i = 0; i < m; ++i) b(i) = in.cons[i].rhs;

    // Starting point scaled to the data (SDPT3-flavored).
    double bscale = 1.0, cscale = 1.0;
    for (int i = 0; i < m; ++i) {
        double anorm = 1.0;
        for (const auto& be : in.cons[i].blocks)
            for (const auto& e : be.raw) anorm += std::norm(e.a);
        bscale = std::max(bscale, std::abs(b(i)) / std::sqrt(anorm));
    }
    for (const auto& c : in.obj) cscale = std::max(cscale, c.norm());

    std::vector<MatrixXcd> X(nb), Z(nb);
    for (int bq = 0; bq < nb; ++bq) {
        X[bq] = bscale * MatrixXcd::Identity(in.dims[bq], in.dims[bq]);
        Z[bq] = std::max(1.0, cscale) * MatrixXcd::Identity(in.dims[bq], in.dims[bq]);
    }
    VectorXd y = VectorXd::Zero(m);

    SdpSolution sol;
    sol.y = y;

    Eigen::MatrixXd M(m, m);
    VectorXd rp(m);
    std::vector<MatrixXcd> Rd(nb), W(nb), Zinv(nb), dX(nb), dZ(nb), dXa(nb), dZa(nb), R(nb);

    double bnorm = 1.0 + b.lpNorm<Eigen::Infinity>();
    double cnorm = 1.0 + cscale;
    double reg = opt.regularization;

    auto finish = [&](SdpStatus st) {
        if (st == SdpStatus::optimal || st == SdpStatus::iteration_limit) {
            PolishResult pr = polish_on_face(in, b, X, y, sol.objective_value,
                                             sol.dual_objective);
            if (pr.ok) {
                st = SdpStatus::optimal;
                X = std::move(pr.X);
                y = std::move(pr.y);
                sol.objective_value = pr.pobj;
                sol.dual_objective = pr.dobj;
                sol.duality_gap = std::abs(pr.pobj - pr.dobj);
                double rpn = 0.0;
                for (int i = 0; i < m; ++i)
                    rpn = std::max(rpn, std::abs(b(i) - apply_raw(in.cons[i], X)));
                sol.primal_residual = rpn;
                sol.dual_residual = 0.0;  // Z is taken as C - A^T(y) exactly
            }
        }
        sol.status = st;
        sol.block_values.assign(X.begin(), X.begin() + in.n_orig_blocks);
        sol.y = y;
        for (int i = 0; i < m; ++i) sol.y(i) /= in.row_scale[i];
        sol.box_values.clear();
        for (const auto& bx : problem.boxes) {
            auto be = expand(bx.entries);
            IConstraint ic;
            ic.blocks = be;
            sol.box_values.push_back(apply_raw(ic, X));
        }
        return sol;
    };

    for (int iter = 0; iter < opt.max_iter; ++iter) {
        // residuals
        double pobj = 0.0, dobj = b.dot(y);
        for (int bq = 0; bq < nb; ++bq)
            pobj += (in.obj[bq].cwiseProduct(X[bq].conjugate())).sum().real();
        for (int i = 0; i < m; ++i) rp(i) = b(i) - apply_raw(in.cons[i], X);
        for (int bq = 0; bq < nb; ++bq) Rd[bq] = in.obj[bq] - Z[bq];
        for (int i = 0; i < m; ++i) {
            for (const auto& be : in.cons[i].blocks)
                for (const auto& e : be.raw) Rd[be.block](e.p, e.q) -= y(i) * e.a;
        }
        double gap = 0.0;
        for (int bq = 0; bq < nb; ++bq)
            gap += (X[bq].cwiseProduct(Z[bq].conjugate())).sum().real();
        double mu = gap / ntot;
        double rp_norm = rp.lpNorm<Eigen::Infinity>();
        double rd_norm = 0.0;
        for (int bq = 0; bq < nb; ++bq)
            rd_norm = std::max(rd_norm, Rd[bq].cwiseAbs().maxCoeff());
        double relgap = gap / (1.0 + std::abs(pobj) + std::abs(dobj));

        sol.objective_value = pobj;
        sol.dual_objective = dobj;
        sol.duality_gap = std::abs(pobj - dobj);
        sol.primal_residual = rp_norm;
        sol.dual_residual = rd_norm;
        sol.iterations = iter;

        if (std::getenv("CVLINK_SDP_TRACE3")) {
            int imax = 0;
            for (int i = 0; i < m; ++i)
                if (std::abs(rp(i)) > std::abs(rp(imax))) imax = i;
            std::fprintf(stderr, "it %3d rp_max=%.3e at row %d of %d\n", iter, rp(imax),
                         imax, m);
        }
        if (std::getenv("CVLINK_SDP_TRACE")) {
            double lx = 1e300, lz = 1e300;
            for (int bq = 0; bq < nb; ++bq) {
                Eigen::SelfAdjointEigenSolver<MatrixXcd> ex(X[bq], Eigen::EigenvaluesOnly);
                Eigen::SelfAdjointEigenSolver<MatrixXcd> ez(Z[bq], Eigen::EigenvaluesOnly);
                lx = std::min(lx, ex.eigenvalues().minCoeff());
                lz = std::min(lz, ez.eigenvalues().minCoeff());
            }
            std::fprintf(stderr,
                         "it %3d mu=%.3e gap=%.3e rp=%.3e rd=%.3e lx=%.2e lz=%.2e "
                         "pd=%.3e ynorm=%.3e\n",
                         iter, mu, gap, rp_norm, rd_norm, lx, lz,
                         std::abs(pobj - dobj), y.lpNorm<Eigen::Infinity>());
        }

        if (relgap < opt.tol && rp_norm / bnorm < opt.tol && rd_norm / cnorm < opt.tol)
            return finish(SdpStatus::optimal);

        // primal infeasibility certificate: A^T(y) <= 0 with b.y > 0
        double ynorm = y.lpNorm<Eigen::Infinity>();
        if (ynorm > 1e8 * bnorm && dobj > 0.0) {
            double viol = 0.0;
            for (int bq = 0; bq < nb; ++bq) {
                MatrixXcd aty = in.obj[bq] - Z[bq] - Rd[bq];  // = A^T(y) on this block
                Eigen::SelfAdjointEigenSolver<MatrixXcd> es(herm(aty),
                                                            Eigen::EigenvaluesOnly);
                viol = std::max(viol, es.eigenvalues().maxCoeff());
            }
            if (viol < 1e-6 * ynorm) {
                sol.certificate_norm = dobj / ynorm;
                return finish(SdpStatus::infeasible);
            }
        }

        // NT scaling W = X^1/2 (X^1/2 Z X^1/2)^-1/2 X^1/2
        bool bad = false;
        for (int bq = 0; bq < nb; ++bq) {
            MatrixXcd xh = psd_power(X[bq], 0.5, 1e-300);
            MatrixXcd mid = herm(xh * Z[bq] * xh);
            MatrixXcd mih = psd_power(mid, -0.5, 1e-30);
            W[bq] = herm(xh * mih * xh);
            Zinv[bq] = psd_power(Z[bq], -1.0, 1e-30);
            if (!W[bq].allFinite() || !Zinv[bq].allFinite()) bad = true;
        }
        if (bad) return finish(SdpStatus::numerical_failure);

        assemble_schur(in.cons, W, M);
        for (int i = 0; i < m; ++i) M(i, i) += reg * (1.0 + M(i, i));

        int info = LAPACKE_dpotrf(LAPACK_COL_MAJOR, 'L', m, M.data(), m);
        int boosts = 0;
        while (info != 0 && boosts < 4) {
            assemble_schur(in.cons, W, M);
            reg *= 1e3;
            for (int i = 0; i < m; ++i) M(i, i) += reg * (1.0 + M(i, i));
            info = LAPACKE_dpotrf(LAPACK_COL_MAJOR, 'L', m, M.data(), m);
            ++boosts;
        }
        if (info != 0) return finish(SdpStatus::numerical_failure);

        // True Schur operator v -> A(W A^T(v) W), free of the static
        // regularization baked into the factored M.
        auto apply_schur = [&](const VectorXd& v) {
            std::vector<MatrixXcd> s(nb);
            for (int bq = 0; bq < nb; ++bq)
                s[bq] = MatrixXcd::Zero(in.dims[bq], in.dims[bq]);
            for (int i = 0; i < m; ++i) scatter_raw(in.cons[i], v(i), s);
            for (int bq = 0; bq < nb; ++bq) s[bq] = W[bq] * s[bq] * W[bq];
            VectorXd out(m);
            for (int i = 0; i < m; ++i) out(i) = apply_raw(in.cons[i], s);
            return out;
        };

        auto solve_schur = [&](const VectorXd& rhs) {
            VectorXd v = rhs;
            LAPACKE_dpotrs(LAPACK_COL_MAJOR, 'L', m, 1, M.data(), m, v.data(), m);
            // iterative refinement against the unregularized operator
            for (int pass = 0; pass < 3; ++pass) {
                VectorXd res = rhs - apply_schur(v);
                if (std::getenv("CVLINK_SDP_TRACE2"))
                    std::fprintf(stderr, "  refine pass %d |res|=%.3e |rhs|=%.3e\n",
                                 pass, res.lpNorm<Eigen::Infinity>(),
                                 rhs.lpNorm<Eigen::Infinity>());
                if (res.lpNorm<Eigen::Infinity>() <
                    1e-13 * (1.0 + rhs.lpNorm<Eigen::Infinity>()))
                    break;
                LAPACKE_dpotrs(LAPACK_COL_MAJOR, 'L', m, 1, M.data(), m, res.data(), m);
                v += res;
            }
            return v;
        };

        auto direction = [&](const std::vector<MatrixXcd>& Rc, VectorXd& dy) {
            VectorXd rhs = rp;
            // dX temporarily holds R - W Rd W for the rhs pass
            for (int bq = 0; bq < nb; ++bq) dX[bq] = Rc[bq] - W[bq] * Rd[bq] * W[bq];
            for (int i = 0; i < m; ++i) rhs(i) -= apply_raw(in.cons[i], dX);
            dy = solve_schur(rhs);
            if (std::getenv("CVLINK_SDP_TRACE2")) {
                std::vector<MatrixXcd> tmp(nb);
                for (int bq = 0; bq < nb; ++bq) {
                    MatrixXcd dz = Rd[bq];
                    IConstraint dummy;
                    tmp[bq] = dz;
                }
                for (int i = 0; i < m; ++i)
                    for (const auto& be : in.cons[i].blocks)
                        for (const auto& e : be.raw) tmp[be.block](e.p, e.q) -= dy(i) * e.a;
                for (int bq = 0; bq < nb; ++bq)
                    tmp[bq] = herm(Rc[bq] - W[bq] * herm(tmp[bq]) * W[bq]);
                double err = 0.0;
                for (int i = 0; i < m; ++i)
                    err = std::max(err, std::abs(apply_raw(in.cons[i], tmp) - rp(i)));
                std::fprintf(stderr, "  |A(dX)-rp| = %.3e\n", err);
            }
            for (int bq = 0; bq < nb; ++bq) dZ[bq] = Rd[bq];
            for (int i = 0; i < m; ++i)
                for (const auto& be : in.cons[i].blocks)
                    for (const auto& e : be.raw) dZ[be.block](e.p, e.q) -= dy(i) * e.a;
            for (int bq = 0; bq < nb; ++bq) {
                dZ[bq] = herm(dZ[bq]);
                dX[bq] = herm(Rc[bq] - W[bq] * dZ[bq] * W[bq]);
            }
        };

        // predictor
        for (int bq = 0; bq < nb; ++bq) R[bq] = -X[bq];
        VectorXd dy_a;
        direction(R, dy_a);
        for (int bq = 0; bq < nb; ++bq) {
            dXa[bq] = dX[bq];
            dZa[bq] = dZ[bq];
        }
        double tau = 0.98;
        double ap = 1.0, ad = 1.0;
        for (int bq = 0; bq < nb; ++bq) {
            ap = std::min(ap, max_step(X[bq], dXa[bq], tau));
            ad = std::min(ad, max_step(Z[bq], dZa[bq], tau));
        }
        double gap_aff = 0.0;
        for (int bq = 0; bq < nb; ++bq)
            gap_aff += ((X[bq] + ap * dXa[bq]).cwiseProduct((Z[bq] + ad * dZa[bq]).conjugate()))
                           .sum()
                           .real();
        double sigma = std::clamp(std::pow(std::max(gap_aff, 0.0) / gap, 3.0), 1e-8, 1.0);

        // keep complementarity from outrunning primal feasibility: once mu is
        // driven far below the remaining infeasibility, X hits the cone
        // boundary and the scaled normal equations lose exactly the directions
        // needed to remove it.  Floor the centering target at a fixed multiple
        // of the primal residual so both shrink together.
        if (rp_norm / bnorm > 0.5 * opt.tol) {
            double mu_floor = 0.003 * rp_norm / std::max(bnorm, 1.0);
            if (mu > 0.0 && mu_floor > 0.0)
                sigma = std::max(sigma, std::min(1.0, mu_floor / mu));
        }

        // corrector; if the second-order term chokes the step, fall back to
        // progressively stronger pure centering (factorization is reused)
        VectorXd dy;
        std::vector<MatrixXcd> dX_best, dZ_best;
        VectorXd dy_best;
        double ap_best = 0.0, ad_best = 0.0, best = -1.0;
        for (int attempt = 0; attempt < 3; ++attempt) {
            double sg = attempt == 0 ? sigma : (attempt == 1 ? std::max(sigma, 0.5) : 1.0);
            for (int bq = 0; bq < nb; ++bq) {
                R[bq] = sg * mu * Zinv[bq] - X[bq];
                if (attempt == 0) R[bq] -= dXa[bq] * dZa[bq] * Zinv[bq];
                R[bq] = herm(R[bq]);
            }
            direction(R, dy);
            ap = 1.0;
            ad = 1.0;
            for (int bq = 0; bq < nb; ++bq) {
                ap = std::min(ap, max_step(X[bq], dX[bq], tau));
                ad = std::min(ad, max_step(Z[bq], dZ[bq], tau));
            }
            if (!std::isfinite(ap) || !std::isfinite(ad))
                return finish(SdpStatus::numerical_failure);
            if (std::min(ap, ad) > best) {
                best = std::min(ap, ad);
                dX_best = dX;
                dZ_best = dZ;
                dy_best = dy;
                ap_best = ap;
                ad_best = ad;
            }
            if (best >= 0.1) break;
        }
        dX = dX_best;
        dZ = dZ_best;
        dy = dy_best;
        ap = ad = std::min(ap_best, ad_best);

        // Neighborhood safeguard: backtrack until min eig(X'Z') >= gamma mu'.
        // Letting eigenpairs of XZ collapse far below mu makes the scaled
        // Schur operator singular in exactly the directions still needed to
        // remove primal infeasibility.
        const double gamma = 1e-3;
        for (int bt = 0; bt < 30; ++bt) {
            double lmin = 1e300, trace_xz = 0.0;
            bool ok = true;
            for (int bq = 0; bq < nb && ok; ++bq) {
                MatrixXcd xp = herm(X[bq] + ap * dX[bq]);
                MatrixXcd zp = herm(Z[bq] + ap * dZ[bq]);
                Eigen::LLT<MatrixXcd> llt(xp);
                if (llt.info() != Eigen::Success) {
                    ok = false;
                    break;
                }
                MatrixXcd l = llt.matrixL();
                Eigen::SelfAdjointEigenSolver<MatrixXcd> es(herm(l.adjoint() * zp * l),
                                                            Eigen::EigenvaluesOnly);
                lmin = std::min(lmin, es.eigenvalues().minCoeff());
                trace_xz += (xp.cwiseProduct(zp.conjugate())).sum().real();
            }
            if (ok && lmin >= gamma * trace_xz / ntot) break;
            ap *= 0.7;
            ad = ap;
            if (ap < 1e-10) break;
        }

        if (std::getenv("CVLINK_SDP_TRACE"))
            std::fprintf(stderr, "      sigma=%.3e ap=%.3e ad=%.3e\n", sigma, ap, ad);

        for (int bq = 0; bq < nb; ++bq) {
            X[bq] = herm(X[bq] + ap * dX[bq]);
            Z[bq] = herm(Z[bq] + ad * dZ[bq]);
        }
        y += ad * dy;
    }
    return finish(SdpStatus::iteration_limit);
}

void dump_problem(std::ostream& out, const SdpProblem& p) {
    out << "blocks " << p.block_dims.size() << "\n";
    for (int d : p.block_dims) out << d << " ";
    out << "\n";
    auto dump_entries = [&](const std::vector<Triplet>& es) {
        out << es.size() << "\n";
        for (const auto& e : es)
            out << e.block << " " << e.row << " " << e.col << " " << e.value.real()
                << " " << e.value.imag() << "\n";
    };
    out << "objective\n";
    for (std::size_t bq = 0; bq < p.block_dims.size(); ++bq) {
        std::vector<Triplet> es;
        if (bq < p.objective.size() && p.objective[bq].size() > 0) {
            const auto& c = p.objective[bq];
            for (int i = 0; i < c.rows(); ++i)
                for (int j = i; j < c.cols(); ++j)
                    if (std::abs(c(i, j)) > 0.0)
                        es.push_back({int(bq), i, j, c(i, j)});
        }
        dump_entries(es);
    }
    out << "equalities " << p.equalities.size() << "\n";
    for (const auto& c : p.equalities) {
        out << "rhs " << c.rhs << "\n";
        dump_entries(c.entries);
    }
    out << "boxes " << p.boxes.size() << "\n";
    for (const auto& bx : p.boxes) {
        out << "range " << bx.lower << " " << bx.upper << "\n";
        dump_entries(bx.entries);
    }
}

}  // namespace cvlink::sdp
