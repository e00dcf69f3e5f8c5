#ifndef STREAMGDA_TESTS_SUPPORT_HPP
#define STREAMGDA_TESTS_SUPPORT_HPP

// Helpers and independent oracles shared by the unit tests and the
// acceptance runner. The oracles deliberately avoid the library's own
// Cholesky path: they go through dense LU, explicit inverses and
// determinants instead.

#include "streamgda/harness.hpp"

#include <Eigen/LU>

#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

namespace streamgda::testing {

// A A^T + shift I with Gaussian A; well conditioned for shift ~ 0.5.
inline Matrix random_spd(NormalSource& rng, Index d, double shift = 0.5) {
    Matrix a(d, d);
    for (Index i = 0; i < d; ++i)
        for (Index j = 0; j < d; ++j) a(i, j) = rng.normal();
    Matrix s = a * a.transpose() / static_cast<double>(d);
    s.diagonal().array() += shift;
    return 0.5 * (s + s.transpose());
}

inline Vector random_vector(NormalSource& rng, Index d, double scale = 1.0) {
    Vector v(d);
    for (Index i = 0; i < d; ++i) v[i] = scale * rng.normal();
    return v;
}

inline Vector random_unit(NormalSource& rng, Index d) { return unit_normalized(random_vector(rng, d)); }

inline ClassTextEmbeddings text_from(const Matrix& rows) {
    ClassTextEmbeddings t;
    t.embeddings = rows;
    for (Index y = 0; y < rows.rows(); ++y) t.class_names.push_back("c" + std::to_string(y));
    return t;
}

inline ClassTextEmbeddings random_text(NormalSource& rng, Index k, Index d) {
    Matrix rows(k, d);
    for (Index y = 0; y < k; ++y) rows.row(y) = random_unit(rng, d).transpose();
    return text_from(rows);
}

// A state with arbitrary parameters, factored under the default policy.
inline MixtureState state_with(const Matrix& means, const Matrix& covariance, const Vector& priors,
                               double epsilon = 1e-4) {
    AdaptConfig c;
    c.normalize_features = false;
    c.regularization_epsilon = epsilon;
    MixtureState s = init_state(text_from(means), c);
    s.covariance = covariance;
    s.priors = priors;
    s.soft_counts = priors;
    s.refactor();
    return s;
}

inline Matrix regularized(const Matrix& cov, double epsilon) {
    Matrix r = cov;
    r.diagonal().array() += epsilon * cov.trace() / static_cast<double>(cov.rows());
    return r;
}

// (Sigma + eps tr/d I)^-1 v via full-pivot LU.
inline Vector dense_solve(const Matrix& cov, double epsilon, const Vector& v) {
    return Eigen::FullPivLU<Matrix>(regularized(cov, epsilon)).solve(v);
}

// Posterior from the literal Gaussian density, normalization constants and
// all: pi_y N(x | mu_y, Sigma_reg) / sum_j pi_j N(x | mu_j, Sigma_reg).
// Uses an explicit inverse and determinant.
inline Vector density_ratio_posterior(const Matrix& means, const Matrix& cov, const Vector& priors, double epsilon,
                                      const Vector& x) {
    const Matrix sreg = regularized(cov, epsilon);
    Eigen::FullPivLU<Matrix> lu(sreg);
    const Matrix inv = lu.inverse();
    const double det = lu.determinant();
    const double d = static_cast<double>(x.size());
    const double norm = 1.0 / (std::pow(2.0 * std::numbers::pi, d / 2.0) * std::sqrt(det));
    Vector joint(means.rows());
    for (Index y = 0; y < means.rows(); ++y) {
        const Vector r = x - means.row(y).transpose();
        const double quad = r.dot(inv * r);
        joint[y] = priors[y] * norm * std::exp(-0.5 * quad);
    }
    return joint / joint.sum();
}

inline double max_relative_error(const Vector& got, const Vector& want) {
    double worst = 0.0;
    for (Index i = 0; i < got.size(); ++i) {
        const double scale = std::abs(want[i]);
        const double err = std::abs(got[i] - want[i]);
        worst = std::max(worst, scale > 0.0 ? err / scale : err);
    }
    return worst;
}

inline bool bit_equal(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
    for (Index i = 0; i < a.size(); ++i) {
        if (std::bit_cast<std::uint64_t>(a.data()[i]) != std::bit_cast<std::uint64_t>(b.data()[i])) return false;
    }
    return true;
}

inline bool states_bit_equal(const MixtureState& a, const MixtureState& b) {
    return bit_equal(a.means, b.means) && bit_equal(a.soft_counts, b.soft_counts) && bit_equal(a.priors, b.priors) &&
           bit_equal(a.covariance, b.covariance) &&
           std::bit_cast<std::uint64_t>(a.weighted_total) == std::bit_cast<std::uint64_t>(b.weighted_total) &&
           a.updates_since_refactor == b.updates_since_refactor;
}

// Shift scenario used for the adaptation-benefit and ablation checks. The
// engine sees raw Gaussian features, so normalization is off, and the
// zero-shot temperature is matched to their norm (about 4.7).
inline SyntheticSpec shift_scenario(std::uint64_t seed) { return make_shift_scenario(8, 64, 2.0, 0.3, 0.5, 5000, seed); }

inline AdaptConfig shift_config() {
    AdaptConfig c;
    c.normalize_features = false;
    c.zero_shot_temperature = 10.0;
    return c;
}

// Nearest-true-mean accuracy: the Bayes rule for equal priors and isotropic
// shared covariance.
inline double bayes_accuracy(const SyntheticSpec& spec, const SyntheticData& data) {
    std::size_t correct = 0;
    for (const EmbeddingRecord& r : data.records) {
        const Vector dist = (spec.class_means.rowwise() - r.feature.transpose()).rowwise().squaredNorm();
        Index best = 0;
        dist.minCoeff(&best);
        if (best == *r.label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.records.size());
}

// Two-class d=2 mixture for the online/batch agreement check. The initial
// means are deliberately off the true ones.
inline SyntheticData two_class_stream(std::uint64_t seed, std::uint64_t n = 2000) {
    SyntheticSpec s;
    s.class_means.resize(2, 2);
    s.class_means << 2.0, 0.5, -2.0, -0.5;
    s.shared_covariance.resize(2, 2);
    s.shared_covariance << 1.0, 0.3, 0.3, 0.5;
    s.class_proportions = Vector(2);
    s.class_proportions << 0.6, 0.4;
    s.num_samples = n;
    s.seed = seed;
    SyntheticData data = generate_synthetic(s);
    data.text.embeddings << 1.5, 0.0, -1.5, 0.0;
    return data;
}

inline AdaptConfig two_class_config() {
    AdaptConfig c;
    c.beta = 0.0;
    c.normalize_features = false;
    return c;
}

inline std::string bytes_of(const std::vector<char>& v) { return std::string(v.begin(), v.end()); }

}  // namespace streamgda::testing

#endif  // STREAMGDA_TESTS_SUPPORT_HPP
