// Bias-corrected Adam: hand-checked single step, reference-loop recurrence,
// NaN rejection, and scalar descent behavior.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "nkem/optim.hpp"

using namespace nkem;

namespace {

NetParams scalar_params(double value) {
    NetParams p;
    p.tensors.emplace_back("p", std::vector<int>{1});
    p.tensors[0].data[0] = value;
    p.tensors[0].ensure_grad();
    return p;
}

/// Independent scalar Adam recurrence in the standard bias-corrected form.
struct RefAdam {
    double lr = 1e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    double m = 0.0, v = 0.0;
    long t = 0;

    double step(double p, double g) {
        ++t;
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        const double mhat = m / (1.0 - std::pow(b1, static_cast<double>(t)));
        const double vhat = v / (1.0 - std::pow(b2, static_cast<double>(t)));
        return p - lr * mhat / (std::sqrt(vhat) + eps);
    }
};

}  // namespace

TEST_SUITE("optim") {

TEST_CASE("single step from zero moves by about -lr") {
    auto p = scalar_params(0.0);
    auto st = AdamState::create(p);
    p.tensors[0].grad[0] = 1.0;
    adam_step(st, p);

    CHECK(st.step == 1);
    // mhat = vhat = 1 after one unit-gradient step, so the move is
    // -lr / (1 + eps).
    RefAdam ref;
    const double expect = ref.step(0.0, 1.0);
    CHECK(p.tensors[0].data[0] == doctest::Approx(expect).epsilon(1e-15));
    CHECK(p.tensors[0].data[0] == doctest::Approx(-1e-3).epsilon(1e-6));
    CHECK(p.tensors[0].data[0] < 0.0);
}

TEST_CASE("zero gradient leaves parameters unchanged but advances the step") {
    auto p = scalar_params(0.75);
    auto st = AdamState::create(p);
    p.tensors[0].grad[0] = 0.0;
    adam_step(st, p);
    CHECK(p.tensors[0].data[0] == 0.75);
    CHECK(st.step == 1);
}

TEST_CASE("multi-step trajectory matches the reference recurrence") {
    auto p = scalar_params(0.5);
    auto st = AdamState::create(p, 3e-3);
    RefAdam ref;
    ref.lr = 3e-3;
    double pref = 0.5;
    for (int t = 1; t <= 50; ++t) {
        const double g = std::sin(0.37 * t) + 0.3;
        p.tensors[0].grad[0] = g;
        adam_step(st, p);
        pref = ref.step(pref, g);
        CHECK(p.tensors[0].data[0] == doctest::Approx(pref).epsilon(1e-14));
    }
    CHECK(st.step == 50);
}

TEST_CASE("descent on f(p) = p^2 shrinks |p| monotonically") {
    auto p = scalar_params(1.0);
    auto st = AdamState::create(p, 0.05);
    double prev = 1.0;
    for (int t = 0; t < 10; ++t) {
        p.tensors[0].grad[0] = 2.0 * p.tensors[0].data[0];
        adam_step(st, p);
        const double cur = std::abs(p.tensors[0].data[0]);
        CHECK(cur < prev);
        prev = cur;
    }
}

TEST_CASE("non-finite gradients abort the step without touching parameters") {
    auto p = scalar_params(0.25);
    auto st = AdamState::create(p);
    p.tensors[0].grad[0] = std::nan("");
    CHECK_THROWS_WITH_AS(adam_step(st, p), doctest::Contains("non-finite"),
                         std::invalid_argument);
    CHECK(p.tensors[0].data[0] == 0.25);
    CHECK(st.step == 0);

    p.tensors[0].grad[0] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(adam_step(st, p), std::invalid_argument);
}

TEST_CASE("missing gradient buffers are an error") {
    NetParams p;
    p.tensors.emplace_back("p", std::vector<int>{2});
    auto st = AdamState::create(p);
    CHECK_THROWS_AS(adam_step(st, p), std::invalid_argument);
}

TEST_CASE("multiple tensors update independently") {
    NetParams p;
    p.tensors.emplace_back("a", std::vector<int>{2});
    p.tensors.emplace_back("b", std::vector<int>{3});
    p.tensors[0].data = {1.0, -1.0};
    p.tensors[1].data = {0.0, 2.0, -2.0};
    p.ensure_grads();
    auto st = AdamState::create(p, 1e-2);

    // Mirror each element with its own scalar reference.
    std::vector<RefAdam> refs(5);
    for (auto& r : refs) r.lr = 1e-2;
    std::vector<double> vals = {1.0, -1.0, 0.0, 2.0, -2.0};

    for (int t = 0; t < 5; ++t) {
        std::vector<double> grads = {0.5, -0.25, 1.0, 0.0, 2.0 * vals[4]};
        p.tensors[0].grad = {grads[0], grads[1]};
        p.tensors[1].grad = {grads[2], grads[3], grads[4]};
        adam_step(st, p);
        for (int i = 0; i < 5; ++i) vals[i] = refs[i].step(vals[i], grads[i]);
    }
    CHECK(p.tensors[0].data[0] == doctest::Approx(vals[0]).epsilon(1e-14));
    CHECK(p.tensors[0].data[1] == doctest::Approx(vals[1]).epsilon(1e-14));
    CHECK(p.tensors[1].data[0] == doctest::Approx(vals[2]).epsilon(1e-14));
    CHECK(p.tensors[1].data[1] == doctest::Approx(vals[3]).epsilon(1e-14));
    CHECK(p.tensors[1].data[2] == doctest::Approx(vals[4]).epsilon(1e-14));
}

TEST_CASE("create validates the learning rate") {
    NetParams p;
    p.tensors.emplace_back("p", std::vector<int>{1});
    CHECK_THROWS_AS(AdamState::create(p, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(AdamState::create(p, -1.0), std::invalid_argument);
}

}  // TEST_SUITE
