#ifndef CVLINK_CERTIFY_HPP
#define CVLINK_CERTIFY_HPP

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cvlink/alphabet.hpp"
#include "cvlink/detection.hpp"
#include "cvlink/sdp.hpp"

namespace cvlink::certify {

enum class LogBase { two, e };

/// Per-state measured moment targets for the constraint set.
struct MomentTargets {
    double mean_x = 0.0;
    double mean_p = 0.0;
    double var_x = 0.0;
    double var_p = 0.0;
    double se_mean = 0.0;
    double se_var = 0.0;
};

struct CertificationProblem {
    alphabet::SourceModel source;
    std::vector<MomentTargets> moments;  // one per alphabet state
    double sigma_level = 0.0;            // constraint half-width in stderr units
    double tol = 1e-7;
    int max_iter = 200;
};

struct BindingConstraint {
    std::string name;
    double slack = 0.0;
};

struct CertificationResult {
    double negativity = 0.0;
    double log_negativity = 0.0;
    sdp::SdpStatus status = sdp::SdpStatus::numerical_failure;
    double duality_gap = 0.0;
    double constraint_violation = 0.0;  // independent recheck of the returned state
    std::vector<BindingConstraint> binding;
};

double log_negativity(double negativity, LogBase base = LogBase::two);

sdp::SdpProblem build_sdp(const CertificationProblem& p);

CertificationResult certify_bin(const CertificationProblem& p,
                                LogBase base = LogBase::two);

/// Ideal-moment targets: means attenuated by sqrt(t_eff), all variances
/// 1 + epsilon. t_eff is the effective transmission including any
/// untrusted detector loss.
std::vector<MomentTargets> ideal_moments(const alphabet::Alphabet& a, double t_eff,
                                         double epsilon);

struct CurveOptions {
    int cutoff = 0;  // 0 = default cutoff rule on the post-channel amplitude
    double tol = 1e-7;
    LogBase base = LogBase::two;
};

enum class AlphabetKind { two_state, four_state };

std::vector<double> theoretical_curve(AlphabetKind kind, double t_eff, double epsilon,
                                      const std::vector<double>& amplitude_grid,
                                      const CurveOptions& opt = {});

struct ComparisonRow {
    double epsilon = 0.0;
    double two_state_max = 0.0;
    double four_state_max = 0.0;
    double two_state_argmax = 0.0;
    double four_state_argmax = 0.0;
};

struct ComparisonTable {
    std::vector<ComparisonRow> rows;
    /// Smallest grid epsilon with vanishing max negativity (nullopt if
    /// never reached on the grid).
    std::optional<double> two_state_zero_epsilon;
    std::optional<double> four_state_zero_epsilon;
};

ComparisonTable compare_alphabets(double t_eff, const std::vector<double>& epsilon_grid,
                                  const std::vector<double>& amplitude_grid,
                                  const CurveOptions& opt = {});

struct BinResult {
    int bin = 0;
    double bin_lo = 0.0, bin_hi = 0.0, prob = 0.0;
    double sigma = 0.0;
    CertificationResult result;
};

/// Certify every retained bin at every sigma level. Independent solves are
/// dispatched to a bounded worker pool; output order is by (bin, sigma).
std::vector<BinResult> certify_all(const detection::BinnedMoments& binned,
                                   const alphabet::SourceModel& source,
                                   const std::vector<double>& sigma_levels,
                                   int workers = 1, LogBase base = LogBase::two,
                                   double tol = 1e-7);

void write_results_csv(std::ostream& out, const std::vector<BinResult>& results,
                       const std::string& header_comment = "");
std::vector<BinResult> read_results_csv(std::istream& in);
std::vector<BinResult> read_results_file(const std::string& path);

}  // namespace cvlink::certify

#endif
