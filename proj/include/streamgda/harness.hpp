#ifndef STREAMGDA_HARNESS_HPP
#define STREAMGDA_HARNESS_HPP

#include "streamgda/predictor.hpp"
#include "streamgda/stream_io.hpp"

#include <chrono>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace streamgda {

// Pulls the next record; nullopt ends the stream.
using RecordSource = std::function<std::optional<EmbeddingRecord>()>;

RecordSource vector_source(const std::vector<EmbeddingRecord>& records);

struct RunReport {
    std::uint64_t total = 0;  // records seen, including skipped ones
    std::uint64_t labeled = 0;
    std::uint64_t correct_fused = 0;
    std::uint64_t correct_zero_shot = 0;
    std::uint64_t skipped = 0;
    double top1_fused = 0.0;  // over labeled, non-skipped records
    double top1_zero_shot = 0.0;
    double mean_sample_weight = 0.0;
    std::chrono::duration<double> wall_time{0.0};
    AdaptConfig config_echo;
};

struct RunResult {
    RunReport report;
    MixtureState final_state;
};

// Batch size 1: for every record the current state predicts first, then the
// same record adapts the state. The prediction for record t never depends on
// record t. Non-finite features are counted as skipped and leave the state
// untouched. When csv_log is set, one line per record is written:
//   index,label,prediction,zero_shot_prediction,entropy,weight
RunResult run_stream(const ClassTextEmbeddings& text, const RecordSource& source, const AdaptConfig& config,
                     std::ostream* csv_log = nullptr);

// Same loop, starting from an existing state (e.g. a restored checkpoint).
RunResult run_stream_from(MixtureState state, const ClassTextEmbeddings& text, const RecordSource& source,
                          const AdaptConfig& config, std::ostream* csv_log = nullptr);

// Key=value report; deterministic (wall time is not included).
std::string format_report(const RunReport& report);

struct AblationRow {
    std::string name;
    double top1 = 0.0;
};

// Rows: zero-shot, full method, frozen means, frozen covariance (identity),
// no confidence weighting (beta = 0). open_source is called once per
// adapting row and must replay the same stream.
std::vector<AblationRow> run_ablation(const ClassTextEmbeddings& text, const std::function<RecordSource()>& open_source,
                                      const AdaptConfig& base);

std::string format_ablation(const std::vector<AblationRow>& rows);

struct BatchEmResult {
    Matrix means;
    Matrix covariance;
    Vector priors;
    double log_likelihood = 0.0;
    int iterations = 0;
    bool converged = false;
};

// Full-data EM on a shared-covariance mixture, initialized like init_state
// (means = text rows, Sigma = I, uniform priors). Stops when the change in
// total log-likelihood is at most tolerance * max(1, |LL|). Uses the same
// regularized covariance in the E-step as the online engine.
BatchEmResult batch_em(const ClassTextEmbeddings& text, const std::vector<Vector>& features,
                       const AdaptConfig& config, int max_iterations = 500, double tolerance = 1e-8);

struct OracleReport {
    BatchEmResult batch;
    MixtureState online;
    Vector mean_distances;  // per class, Euclidean
    double covariance_distance = 0.0;  // Frobenius
    double prior_distance = 0.0;  // max abs
};

// Runs the online engine with `config` and batch EM on the same (prepared,
// finite) features, then compares them.
OracleReport run_oracle(const ClassTextEmbeddings& text, const std::vector<EmbeddingRecord>& records,
                        const AdaptConfig& config);

std::string format_oracle(const OracleReport& report);

// Normalizes the feature when the config says so.
Vector prepare_feature(const Vector& feature, const AdaptConfig& config);

}  // namespace streamgda

#endif  // STREAMGDA_HARNESS_HPP
