#include "streamgda/errors.hpp"
#include "streamgda/predictor.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace streamgda;
using namespace streamgda::testing;

namespace {

// Rows with prescribed cosines against e1.
ClassTextEmbeddings rows_with_cosines(const std::vector<double>& cosines) {
    Matrix rows = Matrix::Zero(static_cast<Index>(cosines.size()), 3);
    for (std::size_t i = 0; i < cosines.size(); ++i) {
        rows(static_cast<Index>(i), 0) = cosines[i];
        rows(static_cast<Index>(i), 1 + static_cast<Index>(i % 2)) = std::sqrt(1.0 - cosines[i] * cosines[i]);
    }
    return text_from(rows);
}

Vector long_double_softmax(const Vector& z) {
    const long double top = z.maxCoeff();
    std::vector<long double> e(static_cast<std::size_t>(z.size()));
    long double sum = 0.0L;
    for (Index i = 0; i < z.size(); ++i) {
        e[static_cast<std::size_t>(i)] = std::exp(static_cast<long double>(z[i]) - top);
        sum += e[static_cast<std::size_t>(i)];
    }
    Vector p(z.size());
    for (Index i = 0; i < z.size(); ++i) p[i] = static_cast<double>(e[static_cast<std::size_t>(i)] / sum);
    return p;
}

}  // namespace

TEST_CASE("zero-shot softmax on the axes") {
    const ClassTextEmbeddings text = text_from(Matrix::Identity(2, 2));
    Vector x(2);
    x << 1.0, 0.0;
    const Vector p = zero_shot_probs(x, text, 1.0);
    CHECK(p[0] == doctest::Approx(0.7311).epsilon(1e-4));
    CHECK(p[1] == doctest::Approx(0.2689).epsilon(1e-4));
}

TEST_CASE("feature orthogonal to every class gives the uniform distribution") {
    Matrix rows = Matrix::Zero(2, 3);
    rows(0, 0) = rows(1, 1) = 1.0;
    Vector x = Vector::Zero(3);
    x[2] = 1.0;
    const Vector p = zero_shot_probs(x, text_from(rows), 100.0);
    CHECK(p[0] == 0.5);
    CHECK(p[1] == 0.5);
}

TEST_CASE("temperature 100 against a high-precision softmax") {
    const ClassTextEmbeddings text = rows_with_cosines({0.30, 0.28, 0.10});
    Vector x = Vector::Zero(3);
    x[0] = 1.0;
    const Vector p = zero_shot_probs(x, text, 100.0);
    // softmax(30, 28, 10) evaluated with 40-digit arithmetic.
    const double frozen[3] = {0.880797076378832267942578, 0.1192029218057096474459008, 1.81545808461152122589577e-9};
    const Vector runtime = long_double_softmax(100.0 * (text.embeddings * x));
    for (Index i = 0; i < 3; ++i) {
        CHECK(std::abs(p[i] - frozen[i]) <= 1e-8 * frozen[i]);
        CHECK(std::abs(p[i] - runtime[i]) <= 1e-8 * runtime[i]);
    }
    CHECK(std::abs(p.sum() - 1.0) <= 1e-9);
}

TEST_CASE("self-entropy values and bounds") {
    Vector onehot = Vector::Zero(4);
    onehot[2] = 1.0;
    CHECK(self_entropy(onehot) == 0.0);
    CHECK(self_entropy(Vector::Constant(7, 1.0 / 7)) == doctest::Approx(std::log(7.0)).epsilon(1e-14));
    Vector p(3);
    p << 0.5, 0.25, 0.25;
    CHECK(self_entropy(p) == doctest::Approx(1.0397).epsilon(1e-4));
    CHECK(self_entropy(p) == doctest::Approx(1.0397207708399179641).epsilon(1e-14));

    NormalSource rng(4);
    for (int t = 0; t < 200; ++t) {
        const Index k = 2 + t % 9;
        const Vector q = softmax(random_vector(rng, k, 1.0 + t % 5));
        const double h = self_entropy(q);
        CHECK(h >= 0.0);
        CHECK(h <= std::log(static_cast<double>(k)) + 1e-12);
    }
}

TEST_CASE("generative logits with identity covariance reduce to nearest mean") {
    AdaptConfig c;
    c.regularization_epsilon = 1e-12;  // negligible ridge
    const MixtureState s = init_state(text_from(Matrix::Identity(2, 2)), c);
    Vector x(2);
    x << 1.0, 0.0;
    const Vector g = generative_logits(s, x);
    CHECK(g[0] - g[1] == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(argmax_lowest(g) == 0);
}

TEST_CASE("generative logits agree with the E-step") {
    NormalSource rng(12);
    for (int trial = 0; trial < 100; ++trial) {
        const Index d = 6;
        const Index k = 3;
        Matrix means(k, d);
        for (Index y = 0; y < k; ++y) means.row(y) = random_vector(rng, d).transpose();
        Vector priors(k);
        for (Index y = 0; y < k; ++y) priors[y] = 0.1 + rng.uniform();
        priors /= priors.sum();
        const MixtureState s = state_with(means, random_spd(rng, d), priors);
        const Vector x = random_vector(rng, d, 1.5);
        const Vector g = generative_logits(s, x);
        const Posterior p = e_step(s, x);
        CHECK(argmax_lowest(g) == argmax_lowest(p.gamma));
        CHECK(max_relative_error(softmax(g), p.gamma) <= 1e-8);
    }
}

TEST_CASE("alpha=0 predicts the zero-shot class") {
    NormalSource rng(13);
    const ClassTextEmbeddings text = random_text(rng, 5, 8);
    AdaptConfig c;
    c.alpha = 0.0;
    MixtureState s = init_state(text, c);
    // Move the state away from its fresh value so the generative branch disagrees.
    for (int t = 0; t < 50; ++t) {
        const Vector x = random_unit(rng, 8);
        adapt_step(s, x, zero_shot_probs(x, text, 100.0), c);
    }
    for (int t = 0; t < 500; ++t) {
        const Vector x = random_unit(rng, 8);
        CHECK(fused_predict(s, x, text, c).predicted_class == argmax_lowest(text.embeddings * x));
    }
}

TEST_CASE("fresh state: fusion never changes the zero-shot decision") {
    NormalSource rng(14);
    for (double alpha : {0.2, 1.0, 5.0}) {
        const ClassTextEmbeddings text = random_text(rng, 6, 10);
        AdaptConfig c;
        c.alpha = alpha;
        const MixtureState s = init_state(text, c);
        for (int t = 0; t < 1000; ++t) {
            const Vector x = random_unit(rng, 10);
            CHECK(fused_predict(s, x, text, c).predicted_class == argmax_lowest(text.embeddings * x));
        }
    }
}

TEST_CASE("ties go to the lowest index") {
    Vector v(4);
    v << 0.1, 0.7, 0.7, 0.7;
    CHECK(argmax_lowest(v) == 1);
    CHECK(argmax_lowest(Vector::Constant(3, 2.0)) == 0);

    // Two identical classes produce identical fused logits.
    Matrix rows(3, 2);
    rows << 0.0, 1.0, 1.0, 0.0, 1.0, 0.0;
    const ClassTextEmbeddings text = text_from(rows);
    const MixtureState s = init_state(text, AdaptConfig{});
    Vector x(2);
    x << 1.0, 0.0;
    const PredictionOutcome o = fused_predict(s, x, text, AdaptConfig{});
    CHECK(o.fused_logits[1] == o.fused_logits[2]);
    CHECK(o.predicted_class == 1);
}

TEST_CASE("a constant shift of the logits keeps the argmax") {
    NormalSource rng(15);
    for (int t = 0; t < 200; ++t) {
        const Vector v = random_vector(rng, 7);
        const double shift = 100.0 * rng.normal();
        CHECK(argmax_lowest((v.array() + shift).matrix()) == argmax_lowest(v));
    }
}

TEST_CASE("fused logits are affine in alpha") {
    NormalSource rng(16);
    const ClassTextEmbeddings text = random_text(rng, 4, 6);
    MixtureState s = init_state(text, AdaptConfig{});
    for (int t = 0; t < 30; ++t) {
        const Vector x = random_unit(rng, 6);
        adapt_step(s, x, zero_shot_probs(x, text, 100.0), AdaptConfig{});
    }
    for (int t = 0; t < 50; ++t) {
        const Vector x = random_unit(rng, 6);
        AdaptConfig a1, a2, mid;
        a1.alpha = rng.uniform() * 2.0;
        a2.alpha = rng.uniform() * 2.0;
        mid.alpha = 0.5 * (a1.alpha + a2.alpha);
        const Vector lhs = fused_predict(s, x, text, a1).fused_logits + fused_predict(s, x, text, a2).fused_logits;
        const Vector rhs = 2.0 * fused_predict(s, x, text, mid).fused_logits;
        CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-10);
    }
}

TEST_CASE("fused_predict is pure") {
    NormalSource rng(18);
    const ClassTextEmbeddings text = random_text(rng, 3, 5);
    MixtureState s = init_state(text, AdaptConfig{});
    for (int t = 0; t < 5; ++t) {
        const Vector x = random_unit(rng, 5);
        adapt_step(s, x, zero_shot_probs(x, text, 100.0), AdaptConfig{});
    }
    // The cached factor is stale here, which is the case most likely to tempt
    // an implementation into refreshing it.
    const MixtureState before = s;
    const auto factor = s.factor;
    for (int t = 0; t < 20; ++t) fused_predict(s, random_unit(rng, 5), text, AdaptConfig{});
    CHECK(states_bit_equal(s, before));
    CHECK(s.factor == factor);
}

TEST_CASE("fused_predict reports the entropy weight") {
    const ClassTextEmbeddings text = text_from(Matrix::Identity(2, 2));
    const MixtureState s = init_state(text, AdaptConfig{});
    Vector x(2);
    x << std::sqrt(0.5), std::sqrt(0.5);
    const PredictionOutcome o = fused_predict(s, x, text, AdaptConfig{});
    CHECK(o.self_entropy == doctest::Approx(std::log(2.0)));
    CHECK(o.sample_weight == doctest::Approx(std::pow(2.0, -4.5)));
    CHECK(std::abs(o.posterior.gamma.sum() - 1.0) <= 1e-12);
}

TEST_CASE("predictor input checks") {
    const ClassTextEmbeddings text = text_from(Matrix::Identity(2, 2));
    const MixtureState s = init_state(text, AdaptConfig{});
    CHECK_THROWS_AS(zero_shot_probs(Vector::Ones(3), text, 1.0), InvalidInput);
    CHECK_THROWS_AS(zero_shot_probs(Vector::Ones(2), text, 0.0), InvalidInput);
    CHECK_THROWS_AS(generative_logits(s, Vector::Ones(3)), InvalidInput);
    CHECK_THROWS_AS(fused_predict(s, Vector::Ones(2), text_from(Matrix::Identity(3, 3)), AdaptConfig{}),
                    InvalidInput);
}
