#include <catch2/catch_amalgamated.hpp>

#include "dagsynth/optim.hpp"
#include "helpers.hpp"

using namespace dagsynth;
using testing_detail::random_tensor;

TEST_CASE("zero gradient leaves parameters unchanged") {
    Tensor p(2, 3, 1.25);
    Tensor g(2, 3, 0.0);
    std::vector<ParamRef> refs{{"w", &p}};

    Adam adam(1e-3);
    adam.step(refs, {g});
    for (double v : p.data) REQUIRE(v == 1.25);

    RmsProp rms(2e-4);
    rms.step(refs, {g});
    for (double v : p.data) REQUIRE(v == 1.25);
}

TEST_CASE("adam constant-gradient step magnitude approaches lr") {
    // with a constant gradient, bias-corrected mhat/sqrt(vhat) = 1, so every
    // step moves by lr/(1 + eps') with eps' -> 0
    double lr = 1e-3;
    Tensor p = Tensor::scalar(0.0);
    Tensor g = Tensor::scalar(2.5);
    std::vector<ParamRef> refs{{"x", &p}};
    Adam adam(lr);
    double prev = p.item();
    for (int i = 0; i < 50; ++i) {
        adam.step(refs, {g});
        double delta = prev - p.item();
        REQUIRE(delta == Catch::Approx(lr).epsilon(1e-5));
        prev = p.item();
    }
    REQUIRE(adam.slots().at("x").t == 50);
}

TEST_CASE("rmsprop decreases a quadratic monotonically") {
    // f(x) = x^2, grad = 2x, from x=1 with the Wasserstein learning rate
    Tensor p = Tensor::scalar(1.0);
    std::vector<ParamRef> refs{{"x", &p}};
    RmsProp rms(2e-4);
    double prev_f = 1.0;
    for (int i = 0; i < 100; ++i) {
        Tensor g = Tensor::scalar(2.0 * p.item());
        rms.step(refs, {g});
        double f = p.item() * p.item();
        REQUIRE(f < prev_f);
        prev_f = f;
    }
    REQUIRE(p.item() > 0.0);
}

TEST_CASE("optimizer state accumulators match parameter shapes") {
    Rng rng(5);
    Tensor p = random_tensor(3, 4, rng);
    Tensor g = random_tensor(3, 4, rng);
    std::vector<ParamRef> refs{{"w", &p}};
    Adam adam(1e-3);
    adam.step(refs, {g});
    REQUIRE(adam.slots().at("w").m.same_shape(p));
    REQUIRE(adam.slots().at("w").v.same_shape(p));

    Tensor bad(2, 2, 1.0);
    REQUIRE_THROWS_AS(adam.step(refs, {bad}), TensorError);
}

TEST_CASE("non-finite gradients raise with the parameter name") {
    Tensor p = Tensor::scalar(1.0);
    Tensor g = Tensor::scalar(std::numeric_limits<double>::quiet_NaN());
    std::vector<ParamRef> refs{{"cell/mode/gates/W", &p}};
    Adam adam(1e-3);
    try {
        adam.step(refs, {g});
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        REQUIRE(std::string(e.what()).find("cell/mode/gates/W") != std::string::npos);
    }
    g = Tensor::scalar(std::numeric_limits<double>::infinity());
    REQUIRE_THROWS_AS(adam.step(refs, {g}), NumericError);
}

TEST_CASE("weight clipping saturates and is idempotent") {
    Rng rng(6);
    Tensor p = random_tensor(4, 4, rng, -5.0, 5.0);
    p.at(0, 0) = 5.0;
    std::vector<ParamRef> refs{{"w", &p}};
    clip_weights(refs, 0.01);
    REQUIRE(p.at(0, 0) == 0.01);
    double mx = 0.0;
    for (double v : p.data) mx = std::max(mx, std::fabs(v));
    REQUIRE(mx <= 0.01);

    Tensor once = p;
    clip_weights(refs, 0.01);
    for (std::size_t k = 0; k < p.data.size(); ++k) REQUIRE(p.data[k] == once.data[k]);

    Tensor small(2, 2, 0.003);
    std::vector<ParamRef> refs2{{"w2", &small}};
    clip_weights(refs2, 0.01);
    for (double v : small.data) REQUIRE(v == 0.003);

    REQUIRE_THROWS_AS(clip_weights(refs, 0.0), ValidationError);
    REQUIRE_THROWS_AS(clip_weights(refs, -1.0), ValidationError);
}

TEST_CASE("adam converges on a small least-squares problem") {
    // sanity: full pipeline tape -> backward -> step drives loss down
    Rng rng(7);
    Tensor W = random_tensor(3, 2, rng);
    Tensor X = random_tensor(8, 3, rng);
    Tensor Wtrue = random_tensor(3, 2, rng);
    Tensor Y(8, 2);
    emap(Y) = emap(X) * emap(Wtrue);  // realizable target: optimum loss is 0
    std::vector<ParamRef> refs{{"W", &W}};
    Adam adam(0.05);
    double first = -1.0, last = -1.0;
    for (int it = 0; it < 200; ++it) {
        Tape t;
        Var w = t.param(W);
        Var err = t.sub(t.matmul(t.constant(X), w), t.constant(Y));
        Var loss = mean_all(t, t.mul(err, err));
        if (it == 0) first = t.val(loss).item();
        last = t.val(loss).item();
        auto g = t.backward(loss);
        adam.step(refs, {t.grad_tensor(g, w)});
    }
    REQUIRE(last < 0.05 * first);
}
