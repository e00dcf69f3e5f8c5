#ifndef STREAMGDA_TYPES_HPP
#define STREAMGDA_TYPES_HPP

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace streamgda {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

// Knobs of the adaptation engine. Defaults are the recommended settings.
struct AdaptConfig {
    double alpha = 0.2;                  // fusion weight of the generative logits
    double beta = 4.5;                   // sharpness of w(H) = exp(-beta * H)
    double zero_shot_temperature = 100.0;
    double regularization_epsilon = 1e-4;
    int refactor_interval = 64;
    // Sample mass credited to the identity covariance initialization in the
    // covariance recursion. 0 gives the bare unbiased recursion, where the
    // identity is discarded by the first update.
    double covariance_prior_weight = 1.0;
    bool normalize_features = true;
    bool adaptation_enabled = true;

    // Between refreshes, solve against the last factorization instead of
    // refactorizing whenever the covariance changed. A refresh still happens
    // every refactor_interval updates.
    bool reuse_stale_factor = false;

    // Ablation switches. With update_covariance off the covariance stays at
    // its initial identity value.
    bool update_means = true;
    bool update_covariance = true;

    // Throws InvalidInput when a field is out of range.
    void validate() const;
};

struct EmbeddingRecord {
    Vector feature;
    std::optional<int> label;  // evaluation only, never seen by adaptation
};

// One row per class; row y is the text embedding of class y.
struct ClassTextEmbeddings {
    Matrix embeddings;
    std::vector<std::string> class_names;

    Index num_classes() const { return embeddings.rows(); }
    Index dim() const { return embeddings.cols(); }
};

bool all_finite(const Eigen::Ref<const Vector>& v);

// Scales v to unit Euclidean norm. A zero vector is returned unchanged.
Vector unit_normalized(const Eigen::Ref<const Vector>& v);

// Applies the config's normalization switch to every row.
ClassTextEmbeddings prepare_text_embeddings(ClassTextEmbeddings text, const AdaptConfig& config);

}  // namespace streamgda

#endif  // STREAMGDA_TYPES_HPP
