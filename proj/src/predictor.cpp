#include "streamgda/predictor.hpp"

#include "streamgda/errors.hpp"

#include <cmath>

namespace streamgda {

namespace {

void check_feature(const Eigen::Ref<const Vector>& feature, Index dim) {
    if (feature.size() != dim) {
        throw InvalidInput("feature has dimension " + std::to_string(feature.size()) + ", expected " +
                           std::to_string(dim));
    }
    if (!feature.allFinite()) throw InvalidInput("feature contains non-finite values");
}

Vector generative_logits_with(const MixtureState& state, const CovarianceFactor& factor,
                              const Eigen::Ref<const Vector>& feature) {
    // With Sigma_reg = L L^T: w_y^T F = (L^-1 mu_y) . (L^-1 F) and
    // mu_y^T Sigma_reg^-1 mu_y = |L^-1 mu_y|^2.
    const Matrix whitened_means = factor.whiten(state.means.transpose());
    const Vector whitened_feature = factor.whiten(feature);
    Vector logits = whitened_means.transpose() * whitened_feature;
    logits -= 0.5 * whitened_means.colwise().squaredNorm().transpose();
    logits += state.priors.array().log().matrix();
    return logits;
}

}  // namespace

Vector softmax(const Eigen::Ref<const Vector>& logits) {
    const double top = logits.maxCoeff();
    Vector p = (logits.array() - top).exp().matrix();
    return p / p.sum();
}

Index argmax_lowest(const Eigen::Ref<const Vector>& v) {
    Index best = 0;
    for (Index i = 1; i < v.size(); ++i) {
        if (v[i] > v[best]) best = i;
    }
    return best;
}

Vector zero_shot_probs(const Eigen::Ref<const Vector>& feature, const ClassTextEmbeddings& text,
                       double temperature) {
    check_feature(feature, text.dim());
    if (!(temperature > 0.0)) throw InvalidInput("temperature must be > 0");
    const Vector similarity = text.embeddings * feature;
    return softmax(temperature * similarity);
}

double self_entropy(const Eigen::Ref<const Vector>& probs) {
    double h = 0.0;
    for (Index i = 0; i < probs.size(); ++i) {
        const double p = probs[i];
        if (p > 0.0) h -= p * std::log(p);
    }
    return h;
}

Vector generative_logits(const MixtureState& state, const Eigen::Ref<const Vector>& feature) {
    check_feature(feature, state.dim());
    std::optional<CovarianceFactor> scratch;
    return generative_logits_with(state, state.solver(scratch), feature);
}

PredictionOutcome fused_predict(const MixtureState& state, const Eigen::Ref<const Vector>& feature,
                                const ClassTextEmbeddings& text, const AdaptConfig& config) {
    if (text.num_classes() != state.num_classes() || text.dim() != state.dim()) {
        throw InvalidInput("text embeddings do not match the state dimensions");
    }
    check_feature(feature, state.dim());

    std::optional<CovarianceFactor> scratch;
    const CovarianceFactor& factor = state.solver(scratch);

    PredictionOutcome out;
    out.zero_shot_probs = zero_shot_probs(feature, text, config.zero_shot_temperature);
    out.self_entropy = self_entropy(out.zero_shot_probs);
    out.sample_weight = confidence_weight(out.self_entropy, config.beta);
    out.posterior = e_step(state, factor, feature);
    out.fused_logits = text.embeddings * feature + config.alpha * generative_logits_with(state, factor, feature);
    out.predicted_class = argmax_lowest(out.fused_logits);
    return out;
}

}  // namespace streamgda
