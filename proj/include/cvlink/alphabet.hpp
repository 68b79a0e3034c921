#ifndef CVLINK_ALPHABET_HPP
#define CVLINK_ALPHABET_HPP

#include <vector>

#include "cvlink/fock.hpp"

namespace cvlink::alphabet {

using fock::Complex;
using fock::MatrixXcd;
using fock::VectorXcd;

/// Coherent-state signal alphabet with prior probabilities.
struct Alphabet {
    std::vector<Complex> amplitudes;
    std::vector<double> priors;

    int size() const { return int(amplitudes.size()); }
    double max_abs_amplitude() const;
};

/// Alice-side model: Gram matrix G_jk = sqrt(p_j p_k) <a_k|a_j> and the
/// entangled purification sum_k sqrt(p_k) |k>_A |a_k>_B.
struct SourceModel {
    Alphabet alphabet;
    int cutoff = 0;
    MatrixXcd gram;            // K x K, Hermitian PSD, trace 1
    VectorXcd purification;    // dim K * cutoff
    fock::DensityOperator purification_density() const;
};

Alphabet two_state(double alpha);
Alphabet four_state(double alpha);
Alphabet calibrated(std::vector<Complex> amplitudes, std::vector<double> priors);

/// Gram matrix from the analytic coherent overlaps.
MatrixXcd gram_matrix(const Alphabet& a);

SourceModel source_model(const Alphabet& a, int cutoff);

}  // namespace cvlink::alphabet

#endif
