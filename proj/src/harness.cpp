#include "streamgda/harness.hpp"

#include "streamgda/errors.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>
#include <sstream>

namespace streamgda {

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt_fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

double log_sum_exp(const Eigen::Ref<const Vector>& v) {
    const double top = v.maxCoeff();
    return top + std::log((v.array() - top).exp().sum());
}

}  // namespace

RecordSource vector_source(const std::vector<EmbeddingRecord>& records) {
    auto position = std::make_shared<std::size_t>(0);
    return [&records, position]() -> std::optional<EmbeddingRecord> {
        if (*position >= records.size()) return std::nullopt;
        return records[(*position)++];
    };
}

Vector prepare_feature(const Vector& feature, const AdaptConfig& config) {
    return config.normalize_features ? unit_normalized(feature) : feature;
}

RunResult run_stream(const ClassTextEmbeddings& text, const RecordSource& source, const AdaptConfig& config,
                     std::ostream* csv_log) {
    return run_stream_from(init_state(text, config), text, source, config, csv_log);
}

RunResult run_stream_from(MixtureState state, const ClassTextEmbeddings& text, const RecordSource& source,
                          const AdaptConfig& config, std::ostream* csv_log) {
    config.validate();
    const auto started = std::chrono::steady_clock::now();
    const ClassTextEmbeddings prepared = prepare_text_embeddings(text, config);
    if (prepared.num_classes() != state.num_classes() || prepared.dim() != state.dim()) {
        throw InvalidInput("text embeddings do not match the state dimensions");
    }

    RunReport report;
    report.config_echo = config;
    double weight_sum = 0.0;
    std::uint64_t processed = 0;
    std::uint64_t scored = 0;

    if (csv_log) *csv_log << "index,label,prediction,zero_shot_prediction,entropy,weight\n";

    while (std::optional<EmbeddingRecord> rec = source()) {
        const std::uint64_t index = report.total++;
        if (rec->feature.size() != state.dim()) {
            throw InvalidInput("record " + std::to_string(index) + " has dimension " +
                               std::to_string(rec->feature.size()) + ", expected " + std::to_string(state.dim()));
        }
        const std::string label_text = rec->label ? std::to_string(*rec->label) : std::string("-1");
        if (!rec->feature.allFinite()) {
            ++report.skipped;
            if (csv_log) *csv_log << index << ',' << label_text << ",skipped,skipped,nan,0\n";
            continue;
        }
        const Vector x = prepare_feature(rec->feature, config);

        // Predict with the state as it was before this record, then adapt.
        state.refresh_factor();
        const PredictionOutcome outcome = fused_predict(state, x, prepared, config);
        const Index zero_shot_pred = argmax_lowest(prepared.embeddings * x);
        adapt_step(state, x, outcome.zero_shot_probs, config);

        ++processed;
        weight_sum += outcome.sample_weight;
        if (rec->label) {
            ++report.labeled;
            ++scored;
            if (outcome.predicted_class == *rec->label) ++report.correct_fused;
            if (zero_shot_pred == *rec->label) ++report.correct_zero_shot;
        }
        if (csv_log) {
            *csv_log << index << ',' << label_text << ',' << outcome.predicted_class << ',' << zero_shot_pred << ','
                     << fmt_double(outcome.self_entropy) << ',' << fmt_double(outcome.sample_weight) << '\n';
        }
    }

    if (scored > 0) {
        report.top1_fused = static_cast<double>(report.correct_fused) / static_cast<double>(scored);
        report.top1_zero_shot = static_cast<double>(report.correct_zero_shot) / static_cast<double>(scored);
    }
    if (processed > 0) report.mean_sample_weight = weight_sum / static_cast<double>(processed);
    report.wall_time = std::chrono::steady_clock::now() - started;
    return RunResult{report, std::move(state)};
}

std::string format_report(const RunReport& r) {
    std::ostringstream out;
    out << "total=" << r.total << '\n'
        << "labeled=" << r.labeled << '\n'
        << "skipped=" << r.skipped << '\n'
        << "correct_fused=" << r.correct_fused << '\n'
        << "correct_zero_shot=" << r.correct_zero_shot << '\n'
        << "top1_fused=" << fmt_fixed(r.top1_fused, 6) << '\n'
        << "top1_zero_shot=" << fmt_fixed(r.top1_zero_shot, 6) << '\n'
        << "mean_sample_weight=" << fmt_double(r.mean_sample_weight) << '\n';
    const AdaptConfig& c = r.config_echo;
    out << "config.alpha=" << fmt_double(c.alpha) << '\n'
        << "config.beta=" << fmt_double(c.beta) << '\n'
        << "config.temperature=" << fmt_double(c.zero_shot_temperature) << '\n'
        << "config.epsilon=" << fmt_double(c.regularization_epsilon) << '\n'
        << "config.refactor_interval=" << c.refactor_interval << '\n'
        << "config.covariance_prior_weight=" << fmt_double(c.covariance_prior_weight) << '\n'
        << "config.normalize=" << (c.normalize_features ? "true" : "false") << '\n'
        << "config.adapt=" << (c.adaptation_enabled ? "true" : "false") << '\n'
        << "config.update_means=" << (c.update_means ? "true" : "false") << '\n'
        << "config.update_covariance=" << (c.update_covariance ? "true" : "false") << '\n';
    return out.str();
}

std::vector<AblationRow> run_ablation(const ClassTextEmbeddings& text, const std::function<RecordSource()>& open_source,
                                      const AdaptConfig& base) {
    struct Variant {
        const char* name;
        AdaptConfig config;
    };
    std::vector<Variant> variants;
    variants.push_back({"full", base});
    AdaptConfig frozen_means = base;
    frozen_means.update_means = false;
    variants.push_back({"frozen_means", frozen_means});
    AdaptConfig frozen_cov = base;
    frozen_cov.update_covariance = false;
    variants.push_back({"frozen_covariance", frozen_cov});
    AdaptConfig no_weighting = base;
    no_weighting.beta = 0.0;
    variants.push_back({"no_confidence_weighting", no_weighting});

    std::vector<AblationRow> rows;
    rows.push_back({"zero_shot", 0.0});
    for (const Variant& v : variants) {
        const RunResult result = run_stream(text, open_source(), v.config);
        if (rows.size() == 1) rows.front().top1 = result.report.top1_zero_shot;
        rows.push_back({v.name, result.report.top1_fused});
    }
    return rows;
}

std::string format_ablation(const std::vector<AblationRow>& rows) {
    std::ostringstream out;
    out << "row,configuration,top1\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out << i + 1 << ',' << rows[i].name << ',' << fmt_fixed(rows[i].top1, 6) << '\n';
    }
    return out.str();
}

BatchEmResult batch_em(const ClassTextEmbeddings& text, const std::vector<Vector>& features, const AdaptConfig& config,
                       int max_iterations, double tolerance) {
    config.validate();
    const MixtureState init = init_state(text, config);
    const Index k = init.num_classes();
    const Index d = init.dim();
    const Index n = static_cast<Index>(features.size());

    BatchEmResult out;
    out.means = init.means;
    out.covariance = init.covariance;
    out.priors = init.priors;
    if (n == 0) {
        out.converged = true;
        return out;
    }

    Matrix data(d, n);
    for (Index t = 0; t < n; ++t) {
        if (features[static_cast<std::size_t>(t)].size() != d) throw InvalidInput("feature dimension mismatch");
        data.col(t) = features[static_cast<std::size_t>(t)];
    }

    const double log_two_pi = std::log(2.0 * std::numbers::pi);
    Matrix log_joint(k, n);
    Matrix gamma(k, n);
    double previous = -std::numeric_limits<double>::infinity();

    for (int iter = 1; iter <= max_iterations; ++iter) {
        const CovarianceFactor factor = CovarianceFactor::build(out.covariance, config.regularization_epsilon);
        const double log_det = 2.0 * factor.lower().diagonal().array().log().sum();
        for (Index y = 0; y < k; ++y) {
            const Matrix residuals = data.colwise() - out.means.row(y).transpose();
            const Vector sq = factor.whiten(residuals).colwise().squaredNorm().transpose();
            log_joint.row(y) = (std::log(out.priors[y]) - 0.5 * (static_cast<double>(d) * log_two_pi + log_det) -
                                0.5 * sq.array())
                                   .matrix()
                                   .transpose();
        }
        double ll = 0.0;
        for (Index t = 0; t < n; ++t) {
            const double lse = log_sum_exp(log_joint.col(t));
            ll += lse;
            gamma.col(t) = (log_joint.col(t).array() - lse).exp().matrix();
        }
        out.log_likelihood = ll;
        out.iterations = iter;
        if (std::abs(ll - previous) <= tolerance * std::max(1.0, std::abs(ll))) {
            out.converged = true;
            break;
        }
        previous = ll;

        const Vector counts = gamma.rowwise().sum();
        Matrix scatter = Matrix::Zero(d, d);
        for (Index y = 0; y < k; ++y) {
            if (counts[y] > 0.0) out.means.row(y) = (data * gamma.row(y).transpose()).transpose() / counts[y];
            Matrix residuals = data.colwise() - out.means.row(y).transpose();
            residuals *= gamma.row(y).cwiseSqrt().asDiagonal();
            scatter.selfadjointView<Eigen::Lower>().rankUpdate(residuals);
        }
        scatter.triangularView<Eigen::StrictlyUpper>() = scatter.transpose().eval();
        out.covariance = scatter / static_cast<double>(n);
        out.priors = counts / static_cast<double>(n);
        // A class that lost all mass would give log(0) priors.
        out.priors = out.priors.cwiseMax(std::numeric_limits<double>::min());
    }
    return out;
}

OracleReport run_oracle(const ClassTextEmbeddings& text, const std::vector<EmbeddingRecord>& records,
                        const AdaptConfig& config) {
    std::vector<Vector> features;
    features.reserve(records.size());
    for (const EmbeddingRecord& rec : records) {
        if (rec.feature.allFinite()) features.push_back(prepare_feature(rec.feature, config));
    }

    OracleReport report;
    report.batch = batch_em(text, features, config);
    report.online = run_stream(text, vector_source(records), config).final_state;

    const Index k = report.online.num_classes();
    report.mean_distances.resize(k);
    for (Index y = 0; y < k; ++y) {
        report.mean_distances[y] = (report.online.means.row(y) - report.batch.means.row(y)).norm();
    }
    report.covariance_distance = (report.online.covariance - report.batch.covariance).norm();
    report.prior_distance = (report.online.priors - report.batch.priors).cwiseAbs().maxCoeff();
    return report;
}

std::string format_oracle(const OracleReport& r) {
    std::ostringstream out;
    out << "batch.converged=" << (r.batch.converged ? "true" : "false") << '\n'
        << "batch.iterations=" << r.batch.iterations << '\n'
        << "batch.log_likelihood=" << fmt_double(r.batch.log_likelihood) << '\n';
    const Index k = r.batch.means.rows();
    const Index d = r.batch.means.cols();
    for (Index y = 0; y < k; ++y) {
        out << "batch.prior[" << y << "]=" << fmt_double(r.batch.priors[y]) << '\n';
        out << "batch.mean[" << y << "]=";
        for (Index j = 0; j < d; ++j) out << (j ? " " : "") << fmt_double(r.batch.means(y, j));
        out << '\n';
    }
    for (Index i = 0; i < d; ++i) {
        out << "batch.covariance[" << i << "]=";
        for (Index j = 0; j < d; ++j) out << (j ? " " : "") << fmt_double(r.batch.covariance(i, j));
        out << '\n';
    }
    for (Index y = 0; y < k; ++y) out << "distance.mean[" << y << "]=" << fmt_double(r.mean_distances[y]) << '\n';
    out << "distance.covariance_frobenius=" << fmt_double(r.covariance_distance) << '\n'
        << "distance.prior_max_abs=" << fmt_double(r.prior_distance) << '\n';
    return out.str();
}

}  // namespace streamgda
