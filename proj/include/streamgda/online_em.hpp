#ifndef STREAMGDA_ONLINE_EM_HPP
#define STREAMGDA_ONLINE_EM_HPP

#include "streamgda/gda_state.hpp"

namespace streamgda {

// Responsibilities gamma_y of one sample; sums to one.
struct Posterior {
    Vector gamma;
};

struct UpdateTrace {
    double sample_weight = 0.0;
    Posterior gamma;
    double pre_total = 0.0;
    double post_total = 0.0;
};

// gamma = softmax_y(log pi_y - 0.5 * (x - mu_y)^T Sigma_reg^{-1} (x - mu_y)).
Posterior e_step(const MixtureState& state, const Eigen::Ref<const Vector>& feature);

// Same, against an explicit factor (used when the caller already holds one).
Posterior e_step(const MixtureState& state, const CovarianceFactor& factor,
                 const Eigen::Ref<const Vector>& feature);

// Confidence weight w(H) = exp(-beta * H).
double confidence_weight(double entropy, double beta);

// One confidence-weighted M-step. For every class, with w the sample weight:
//   mu_y'  = (N_y mu_y + w g_y x) / (N_y + w g_y)
//   N_y'   = N_y + w g_y
//   Sigma' = ((n' - 1 + nu0) Sigma + w sum_y g_y (x - mu_y')(x - mu_y')^T)
//            / max(n' + w - 1 + nu0, 1)
//   n''    = n' + w
//   pi_y'  = N_y' / sum_j N_j'
// The update flags let ablations freeze means or covariance.
UpdateTrace weighted_m_step(MixtureState& state, const Eigen::Ref<const Vector>& feature,
                            const Posterior& gamma, double sample_weight,
                            bool update_means = true, bool update_covariance = true);

struct AdaptResult {
    Posterior posterior;
    UpdateTrace trace;
};

// E-step then weighted M-step with w = exp(-beta * H(zero_shot_probs)).
// With adaptation disabled the state is left untouched and the trace has
// zero weight.
AdaptResult adapt_step(MixtureState& state, const Eigen::Ref<const Vector>& feature,
                       const Eigen::Ref<const Vector>& zero_shot_probs, const AdaptConfig& config);

}  // namespace streamgda

#endif  // STREAMGDA_ONLINE_EM_HPP
