#include <cmvrp/adam.hpp>

#include <gtest/gtest.h>

#include <cmath>

using namespace cmvrp::ad;

TEST(Adam, FirstStepIsLearningRate) {
    ParameterSet p{{"theta", Array::scalar(0.0)}};
    AdamState st;
    adam_step(p, {{"theta", Array::scalar(1.0)}}, st);
    EXPECT_NEAR(p["theta"].item(), -1e-4 / (1.0 + 1e-8), 1e-18);
    EXPECT_EQ(st.step, 1);
}

TEST(Adam, ZeroGradientLeavesParameters) {
    ParameterSet p{{"a", Array(2, 2, {1, -2, 3, 4})}, {"b", Array::scalar(7.0)}};
    const auto before = p;
    AdamState st;
    adam_step(p, {{"a", Array(2, 2)}}, st);  // "b" missing: treated as zero
    EXPECT_EQ(p, before);
    EXPECT_EQ(st.step, 1);
}

TEST(Adam, MatchesScalarRecurrenceOnQuadratic) {
    // Independent scalar transcription of the update rule.
    double theta = 1.0, m = 0.0, v = 0.0;
    const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ParameterSet p{{"theta", Array::scalar(1.0)}};
    AdamState st;
    st.hyper.lr = lr;
    for (int t = 1; t <= 10; ++t) {
        const double g = 2.0 * theta;
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        theta -= lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
        adam_step(p, {{"theta", Array::scalar(2.0 * p["theta"].item())}}, st);
        EXPECT_NEAR(p["theta"].item(), theta, 1e-15);
    }
    EXPECT_LT(std::abs(p["theta"].item()), 1.0);
}

TEST(Adam, ShapeMismatchRejected) {
    ParameterSet p{{"a", Array(2, 2)}};
    AdamState st;
    EXPECT_THROW(adam_step(p, {{"a", Array(1, 2)}}, st), cmvrp::ContractViolation);
    EXPECT_THROW(adam_step(p, {{"zz", Array(2, 2)}}, st), cmvrp::ContractViolation);
}
