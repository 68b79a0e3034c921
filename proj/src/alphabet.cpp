#include "cvlink/alphabet.hpp"

#include <cmath>
#include <stdexcept>

namespace cvlink::alphabet {

double Alphabet::max_abs_amplitude() const {
    double m = 0.0;
    for (const auto& a : amplitudes) m = std::max(m, std::abs(a));
    return m;
}

Alphabet two_state(double alpha) {
    if (alpha < 0.0) throw std::invalid_argument("two_state: alpha must be >= 0");
    return Alphabet{{Complex(alpha, 0.0), Complex(-alpha, 0.0)}, {0.5, 0.5}};
}

Alphabet four_state(double alpha) {
    if (alpha < 0.0) throw std::invalid_argument("four_state: alpha must be >= 0");
    return Alphabet{{Complex(alpha, 0.0), Complex(0.0, alpha), Complex(-alpha, 0.0),
                     Complex(0.0, -alpha)},
                    {0.25, 0.25, 0.25, 0.25}};
}

Alphabet calibrated(std::vector<Complex> amplitudes, std::vector<double> priors) {
    if (amplitudes.size() != priors.size())
        throw std::invalid_argument("calibrated: amplitude/prior length mismatch");
    if (amplitudes.empty()) throw std::invalid_argument("calibrated: empty alphabet");
    double sum = 0.0;
    for (double p : priors) {
        if (p < 0.0) throw std::invalid_argument("calibrated: negative prior");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-12)
        throw std::invalid_argument("calibrated: priors must sum to 1");
    return Alphabet{std::move(amplitudes), std::move(priors)};
}

MatrixXcd gram_matrix(const Alphabet& a) {
    int k = a.size();
    MatrixXcd g(k, k);
    for (int j = 0; j < k; ++j)
        for (int l = 0; l < k; ++l)
            g(j, l) = std::sqrt(a.priors[j] * a.priors[l]) *
                      fock::coherent_overlap(a.amplitudes[l], a.amplitudes[j]);
    return g;
}

SourceModel source_model(const Alphabet& a, int cutoff) {
    SourceModel m;
    m.alphabet = a;
    m.cutoff = cutoff;
    m.gram = gram_matrix(a);
    int k = a.size();
    m.purification.resize(k * cutoff);
    for (int j = 0; j < k; ++j) {
        fock::FockVector psi = fock::coherent_state(a.amplitudes[j], cutoff);
        m.purification.segment(j * cutoff, cutoff) =
            std::sqrt(a.priors[j]) * psi.amplitudes;
    }
    return m;
}

fock::DensityOperator SourceModel::purification_density() const {
    return fock::pure_density(purification, {alphabet.size(), cutoff});
}

}  // namespace cvlink::alphabet
