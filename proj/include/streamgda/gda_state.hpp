#ifndef STREAMGDA_GDA_STATE_HPP
#define STREAMGDA_GDA_STATE_HPP

#include "streamgda/types.hpp"

#include <cstdint>
#include <memory>
#include <optional>

namespace streamgda {

// Lower Cholesky factor L of the regularized covariance
//   Sigma_reg = Sigma + epsilon * (trace(Sigma) / d) * I = L * L^T.
// Immutable once built; states share it by pointer.
class CovarianceFactor {
public:
    // Throws NumericalBreakdown when Sigma_reg is not positive definite.
    static CovarianceFactor build(const Matrix& covariance, double epsilon);

    // Rebuilds a factor from stored parts (checkpoint restore). No validation
    // beyond shape and a positive diagonal.
    static CovarianceFactor from_parts(Matrix lower, double ridge);

    // Solves Sigma_reg * u = rhs.
    Vector solve(const Eigen::Ref<const Vector>& rhs) const;
    Matrix solve(const Eigen::Ref<const Matrix>& rhs) const;

    // L^{-1} * rhs, so that |L^{-1} v|^2 = v^T Sigma_reg^{-1} v.
    Matrix whiten(const Eigen::Ref<const Matrix>& rhs) const;

    const Matrix& lower() const { return lower_; }
    // Absolute ridge added to the diagonal: epsilon * trace / d.
    double ridge() const { return ridge_; }
    Index dim() const { return lower_.rows(); }

private:
    CovarianceFactor(Matrix lower, double ridge) : lower_(std::move(lower)), ridge_(ridge) {}

    Matrix lower_;
    double ridge_ = 0.0;
};

struct FactorPolicy {
    double epsilon = 1e-4;
    int refactor_interval = 64;
    bool reuse_stale = false;
};

// Gaussian discriminant state with a shared covariance.
//
// means is K x d (row y is mu_y). soft_counts holds the per-class sample mass
// N_y, priors the renormalized class probabilities. weighted_total is the
// cumulative sample mass n' including confidence weights;
// covariance_prior_weight is the extra mass nu0 the initial identity carries
// in the covariance recursion.
//
// The factorization is refreshed lazily: any covariance change must be
// followed by note_covariance_update(), and solves go through solver().
struct MixtureState {
    Matrix means;
    Vector soft_counts;
    Vector priors;
    Matrix covariance;
    double weighted_total = 1.0;
    double covariance_prior_weight = 1.0;
    std::uint64_t updates_since_refactor = 0;
    FactorPolicy policy;
    std::shared_ptr<const CovarianceFactor> factor;

    Index num_classes() const { return means.rows(); }
    Index dim() const { return means.cols(); }

    // True when the cached factor may be used under the policy.
    bool factor_usable() const;

    // Recomputes the factorization from the current covariance and resets
    // updates_since_refactor. Symmetrizes the covariance first.
    void refactor();

    // Refactors only if the cached factor is not usable.
    void refresh_factor();

    void note_covariance_update() { ++updates_since_refactor; }

    // The cached factor when usable; otherwise a fresh factor built into
    // scratch. Never modifies the state.
    const CovarianceFactor& solver(std::optional<CovarianceFactor>& scratch) const;
};

// mu_y = text row y (already normalized by the caller's config), Sigma = I,
// N_y = pi_y = 1/K, n' = 1, with a valid factorization.
MixtureState init_state(const ClassTextEmbeddings& text, const AdaptConfig& config);

// (Sigma + eps * trace(Sigma)/d * I)^{-1} v. Does not modify the state.
Vector regularized_inverse_apply(const MixtureState& state, const Eigen::Ref<const Vector>& v);

// Value form of MixtureState::refactor.
MixtureState refactor(MixtureState state);

}  // namespace streamgda

#endif  // STREAMGDA_GDA_STATE_HPP
