#ifndef STREAMGDA_PREDICTOR_HPP
#define STREAMGDA_PREDICTOR_HPP

#include "streamgda/online_em.hpp"

namespace streamgda {

struct PredictionOutcome {
    Vector zero_shot_probs;
    double self_entropy = 0.0;
    Posterior posterior;
    Vector fused_logits;
    Index predicted_class = 0;
    double sample_weight = 0.0;
};

// softmax(temperature * F T_y^T). F and the rows of T are expected to be unit
// vectors, which makes F T_y^T the cosine similarity.
Vector zero_shot_probs(const Eigen::Ref<const Vector>& feature, const ClassTextEmbeddings& text,
                       double temperature);

// -sum p ln p in nats, with 0 ln 0 = 0.
double self_entropy(const Eigen::Ref<const Vector>& probs);

// w_y^T F + b_y with w_y = Sigma_reg^{-1} mu_y, b_y = ln pi_y - 0.5 mu_y^T Sigma_reg^{-1} mu_y.
Vector generative_logits(const MixtureState& state, const Eigen::Ref<const Vector>& feature);

// logits_y = F T_y^T + alpha * (w_y^T F + b_y). The zero-shot term is the raw
// similarity; the temperature only enters zero_shot_probs, which feeds the
// entropy and sample weight. Never modifies the state.
PredictionOutcome fused_predict(const MixtureState& state, const Eigen::Ref<const Vector>& feature,
                                const ClassTextEmbeddings& text, const AdaptConfig& config);

// Index of the largest entry; ties go to the lowest index.
Index argmax_lowest(const Eigen::Ref<const Vector>& v);

// Numerically stable softmax.
Vector softmax(const Eigen::Ref<const Vector>& logits);

}  // namespace streamgda

#endif  // STREAMGDA_PREDICTOR_HPP
