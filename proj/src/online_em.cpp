#include "streamgda/online_em.hpp"

#include "streamgda/errors.hpp"
#include "streamgda/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace streamgda {

namespace {
constexpr double kNegligibleMass = 1e-17;
}  // namespace

Posterior e_step(const MixtureState& state, const Eigen::Ref<const Vector>& feature) {
    std::optional<CovarianceFactor> scratch;
    return e_step(state, state.solver(scratch), feature);
}

Posterior e_step(const MixtureState& state, const CovarianceFactor& factor,
                 const Eigen::Ref<const Vector>& feature) {
    if (feature.size() != state.dim()) throw InvalidInput("feature dimension does not match the state");
    if (!feature.allFinite()) throw InvalidInput("feature contains non-finite values");

    // Columns are x - mu_y; the (2 pi)^{d/2} |Sigma|^{1/2} constant is shared
    // by all classes and cancels.
    const Matrix residuals = (-state.means.transpose()).colwise() + feature;
    const Matrix whitened = factor.whiten(residuals);
    const Vector log_joint =
        state.priors.array().log().matrix() - 0.5 * whitened.colwise().squaredNorm().transpose();
    return Posterior{softmax(log_joint)};
}

double confidence_weight(double entropy, double beta) { return std::exp(-beta * entropy); }

UpdateTrace weighted_m_step(MixtureState& state, const Eigen::Ref<const Vector>& feature,
                            const Posterior& gamma, double sample_weight, bool update_means,
                            bool update_covariance) {
    const Index k = state.num_classes();
    if (!(sample_weight > 0.0) || !(sample_weight <= 1.0)) {
        throw InvalidInput("sample weight must lie in (0, 1], got " + std::to_string(sample_weight));
    }
    if (feature.size() != state.dim() || !feature.allFinite()) {
        throw InvalidInput("feature must be finite with the state's dimension");
    }
    if (gamma.gamma.size() != k || !gamma.gamma.allFinite() || (gamma.gamma.array() < 0.0).any() ||
        std::abs(gamma.gamma.sum() - 1.0) > 1e-6) {
        throw InvalidInput("posterior must be a distribution over the state's classes");
    }

    UpdateTrace trace;
    trace.sample_weight = sample_weight;
    trace.gamma = gamma;
    trace.pre_total = state.weighted_total;

    const Vector mass = sample_weight * gamma.gamma;
    if (update_means) {
        for (Index y = 0; y < k; ++y) {
            if (!(mass[y] > 0.0)) continue;  // exactly unchanged, not just up to rounding
            const double n_y = state.soft_counts[y];
            state.means.row(y) = (n_y * state.means.row(y) + mass[y] * feature.transpose()) / (n_y + mass[y]);
        }
    }
    state.soft_counts += mass;

    if (update_covariance) {
        const double dof = state.weighted_total - 1.0 + state.covariance_prior_weight;
        const double denominator = std::max(dof + sample_weight, 1.0);
        // Columns sqrt(w g_y) (x - mu_y'), so that D D^T is the weighted scatter.
        // Classes with mass below 1e-17 w are left out: their share is under
        // double resolution, and the subnormal products they produce slow the
        // rank update down by more than 2x.
        std::vector<Index> kept;
        for (Index y = 0; y < k; ++y) {
            if (mass[y] > kNegligibleMass * sample_weight) kept.push_back(y);
        }
        Matrix scaled(state.dim(), static_cast<Index>(kept.size()));
        for (std::size_t c = 0; c < kept.size(); ++c) {
            const Index y = kept[c];
            scaled.col(static_cast<Index>(c)) = std::sqrt(mass[y]) * (feature - state.means.row(y).transpose());
        }

        // Only the lower triangle is updated, then mirrored. The upper write
        // reads the strict lower part only, so no temporary is needed.
        state.covariance.triangularView<Eigen::Lower>() *= dof / denominator;
        state.covariance.selfadjointView<Eigen::Lower>().rankUpdate(scaled, 1.0 / denominator);
        state.covariance.triangularView<Eigen::StrictlyUpper>() = state.covariance.transpose();
        state.note_covariance_update();
    }

    state.weighted_total += sample_weight;
    state.priors = state.soft_counts / state.soft_counts.sum();
    trace.post_total = state.weighted_total;
    return trace;
}

AdaptResult adapt_step(MixtureState& state, const Eigen::Ref<const Vector>& feature,
                       const Eigen::Ref<const Vector>& zero_shot_probs, const AdaptConfig& config) {
    if (zero_shot_probs.size() != state.num_classes() || !zero_shot_probs.allFinite() ||
        (zero_shot_probs.array() < 0.0).any() || std::abs(zero_shot_probs.sum() - 1.0) > 1e-6) {
        throw InvalidInput("zero-shot probabilities must be a distribution over the state's classes");
    }

    AdaptResult result;
    result.trace.pre_total = state.weighted_total;
    result.trace.post_total = state.weighted_total;
    if (!config.adaptation_enabled) {
        result.posterior = e_step(state, feature);
        result.trace.gamma = result.posterior;
        return result;
    }

    state.refresh_factor();
    result.posterior = e_step(state, *state.factor, feature);
    result.trace.gamma = result.posterior;

    const double weight = confidence_weight(self_entropy(zero_shot_probs), config.beta);
    // An underflowed weight contributes nothing; skip the update entirely.
    if (!(weight > 0.0)) return result;

    result.trace = weighted_m_step(state, feature, result.posterior, weight, config.update_means,
                                   config.update_covariance);
    return result;
}

}  // namespace streamgda
