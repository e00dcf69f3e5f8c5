#include "streamgda/gda_state.hpp"

#include "streamgda/errors.hpp"

#include <cmath>
#include <string>

namespace streamgda {

void AdaptConfig::validate() const {
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw InvalidInput("alpha must be finite and >= 0");
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw InvalidInput("beta must be finite and >= 0");
    if (!(zero_shot_temperature > 0.0) || !std::isfinite(zero_shot_temperature))
        throw InvalidInput("zero-shot temperature must be finite and > 0");
    if (!(regularization_epsilon > 0.0) || !std::isfinite(regularization_epsilon))
        throw InvalidInput("regularization epsilon must be finite and > 0");
    if (refactor_interval < 1) throw InvalidInput("refactor interval must be >= 1");
    if (!(covariance_prior_weight >= 0.0) || !std::isfinite(covariance_prior_weight))
        throw InvalidInput("covariance prior weight must be finite and >= 0");
}

bool all_finite(const Eigen::Ref<const Vector>& v) { return v.allFinite(); }

Vector unit_normalized(const Eigen::Ref<const Vector>& v) {
    const double norm = v.norm();
    if (norm == 0.0) return v;
    return v / norm;
}

ClassTextEmbeddings prepare_text_embeddings(ClassTextEmbeddings text, const AdaptConfig& config) {
    if (config.normalize_features) {
        for (Index y = 0; y < text.embeddings.rows(); ++y) {
            const double norm = text.embeddings.row(y).norm();
            if (norm > 0.0) text.embeddings.row(y) /= norm;
        }
    }
    return text;
}

CovarianceFactor CovarianceFactor::build(const Matrix& covariance, double epsilon) {
    const Index d = covariance.rows();
    if (d == 0 || covariance.cols() != d) throw InvalidInput("covariance must be square and non-empty");
    if (!covariance.allFinite()) throw NumericalBreakdown("covariance has non-finite entries");

    const double scale = covariance.trace() / static_cast<double>(d);
    if (!(scale > 0.0)) {
        throw NumericalBreakdown("covariance trace is not positive (trace/d = " + std::to_string(scale) + ")");
    }
    const double ridge = epsilon * scale;

    Matrix regularized = 0.5 * (covariance + covariance.transpose());
    regularized.diagonal().array() += ridge;

    Eigen::LLT<Matrix> llt(regularized);
    if (llt.info() != Eigen::Success) {
        throw NumericalBreakdown("regularized covariance is not positive definite");
    }
    Matrix lower = llt.matrixL();
    if (!lower.allFinite() || !(lower.diagonal().array() > 0.0).all()) {
        throw NumericalBreakdown("Cholesky factor is degenerate");
    }
    return CovarianceFactor(std::move(lower), ridge);
}

CovarianceFactor CovarianceFactor::from_parts(Matrix lower, double ridge) {
    if (lower.rows() == 0 || lower.rows() != lower.cols()) throw InvalidInput("factor must be square");
    if (!lower.allFinite() || !(lower.diagonal().array() > 0.0).all()) {
        throw NumericalBreakdown("stored Cholesky factor is degenerate");
    }
    lower.triangularView<Eigen::StrictlyUpper>().setZero();
    return CovarianceFactor(std::move(lower), ridge);
}

Matrix CovarianceFactor::whiten(const Eigen::Ref<const Matrix>& rhs) const {
    return lower_.triangularView<Eigen::Lower>().solve(rhs);
}

Matrix CovarianceFactor::solve(const Eigen::Ref<const Matrix>& rhs) const {
    Matrix z = lower_.triangularView<Eigen::Lower>().solve(rhs);
    lower_.transpose().triangularView<Eigen::Upper>().solveInPlace(z);
    return z;
}

Vector CovarianceFactor::solve(const Eigen::Ref<const Vector>& rhs) const {
    Vector z = lower_.triangularView<Eigen::Lower>().solve(rhs);
    lower_.transpose().triangularView<Eigen::Upper>().solveInPlace(z);
    return z;
}

bool MixtureState::factor_usable() const {
    if (!factor || factor->dim() != dim()) return false;
    if (updates_since_refactor == 0) return true;
    return policy.reuse_stale && updates_since_refactor < static_cast<std::uint64_t>(policy.refactor_interval);
}

void MixtureState::refactor() {
    covariance = 0.5 * (covariance + covariance.transpose());
    factor = std::make_shared<const CovarianceFactor>(CovarianceFactor::build(covariance, policy.epsilon));
    updates_since_refactor = 0;
}

void MixtureState::refresh_factor() {
    if (!factor_usable()) refactor();
}

const CovarianceFactor& MixtureState::solver(std::optional<CovarianceFactor>& scratch) const {
    if (factor_usable()) return *factor;
    scratch.emplace(CovarianceFactor::build(covariance, policy.epsilon));
    return *scratch;
}

MixtureState init_state(const ClassTextEmbeddings& text, const AdaptConfig& config) {
    config.validate();
    const Index k = text.num_classes();
    const Index d = text.dim();
    if (k < 2) throw InvalidInput("at least two classes are required, got " + std::to_string(k));
    if (d < 1) throw InvalidInput("embedding dimension must be >= 1");
    if (!text.embeddings.allFinite()) throw InvalidInput("text embeddings contain non-finite values");

    MixtureState state;
    state.means = prepare_text_embeddings(text, config).embeddings;
    state.soft_counts = Vector::Constant(k, 1.0 / static_cast<double>(k));
    state.priors = Vector::Constant(k, 1.0 / static_cast<double>(k));
    state.covariance = Matrix::Identity(d, d);
    state.weighted_total = 1.0;
    state.covariance_prior_weight = config.covariance_prior_weight;
    state.updates_since_refactor = 0;
    state.policy = FactorPolicy{config.regularization_epsilon, config.refactor_interval, config.reuse_stale_factor};
    state.refactor();
    return state;
}

Vector regularized_inverse_apply(const MixtureState& state, const Eigen::Ref<const Vector>& v) {
    if (v.size() != state.dim()) throw InvalidInput("vector dimension does not match the state");
    std::optional<CovarianceFactor> scratch;
    return state.solver(scratch).solve(v);
}

MixtureState refactor(MixtureState state) {
    state.refactor();
    return state;
}

}  // namespace streamgda
