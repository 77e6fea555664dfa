// Residual U-net: architecture validation, deterministic initialization,
// nonnegative outputs, full-network gradient checks, the identity-bypass
// reduction, and NKNP parameter persistence.

#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "nkem/io.hpp"
#include "nkem/rng.hpp"
#include "nkem/unet.hpp"
#include "testutil.hpp"

using namespace nkem;
using nkemtest::fd_check_tensor;
using nkemtest::random_vec;
namespace fs = std::filesystem;

namespace {

Tensor random_input(int channels, int h, int w, Rng& rng, int d = 1) {
    Tensor z("z", {channels, d, h, w});
    z.data = random_vec(z.numel(), rng, -1.0, 1.0);
    return z;
}

}  // namespace

TEST_SUITE("unet") {

TEST_CASE("descriptor validation") {
    UNetDescriptor d;
    d.in_channels = 2;
    d.scales = 2;
    d.base_channels = 4;
    CHECK_NOTHROW(d.validate());

    SUBCASE("counts must be positive") {
        auto bad = d;
        bad.scales = 0;
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
        bad = d;
        bad.base_channels = 0;
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
        bad = d;
        bad.in_channels = 0;
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    }
    SUBCASE("bypass mode needs spatial dims") {
        auto bp = d;
        bp.identity_bypass = true;
        CHECK_THROWS_AS(bp.validate(), std::invalid_argument);
        bp.bypass_h = 8;
        bp.bypass_w = 8;
        CHECK_NOTHROW(bp.validate());
    }
}

TEST_CASE("initialization is seed-deterministic") {
    UNetDescriptor d;
    d.in_channels = 3;
    d.scales = 2;
    d.base_channels = 4;
    auto a = init_params(d, 42);
    auto b = init_params(d, 42);
    auto c = init_params(d, 43);
    REQUIRE(a.tensors.size() == b.tensors.size());
    bool differs_from_c = false;
    for (std::size_t i = 0; i < a.tensors.size(); ++i) {
        CHECK(a.tensors[i].name == b.tensors[i].name);
        CHECK(a.tensors[i].data == b.tensors[i].data);
        if (a.tensors[i].data != c.tensors[i].data) differs_from_c = true;
    }
    CHECK(differs_from_c);
    CHECK(a.total_params() > 0u);

    SUBCASE("head bias starts at 1 so the initial output is positive") {
        CHECK(a.at("head.conv.b").data[0] == 1.0);
    }
    SUBCASE("norm parameters start at scale 1, shift 0") {
        const auto& gamma = a.at("enc0.norm.gamma");
        const auto& delta = a.at("enc0.norm.delta");
        for (double v : gamma.data) CHECK(v == 1.0);
        for (double v : delta.data) CHECK(v == 0.0);
    }
}

TEST_CASE("forward output is a nonnegative single-channel image of input size") {
    Rng rng(7);
    for (int scales : {1, 2, 3}) {
        CAPTURE(scales);
        UNetDescriptor d;
        d.in_channels = 2;
        d.scales = scales;
        d.base_channels = 4;
        auto params = init_params(d, 11);
        UNet net(d);
        auto z = random_input(2, 8, 8, rng);
        const Tensor& out = net.forward(params, z);
        CHECK(act_shape(out) == ActShape{1, 1, 8, 8});
        for (double v : out.data) {
            CHECK(v >= 0.0);
            CHECK(std::isfinite(v));
        }
    }
}

TEST_CASE("forward rejects mismatched inputs") {
    UNetDescriptor d;
    d.in_channels = 2;
    d.scales = 3;
    d.base_channels = 4;
    auto params = init_params(d, 1);
    UNet net(d);
    Rng rng(1);

    auto wrong_c = random_input(3, 8, 8, rng);
    CHECK_THROWS_AS(net.forward(params, wrong_c), std::invalid_argument);
    auto wrong_div = random_input(2, 6, 6, rng);  // 6 not divisible by 4
    CHECK_THROWS_AS(net.forward(params, wrong_div), std::invalid_argument);

    SUBCASE("backward before any forward is an error") {
        UNet fresh(d);
        Tensor up("u", {1, 1, 8, 8});
        CHECK_THROWS_AS(fresh.backward(params, up), std::invalid_argument);
    }
    SUBCASE("params from a different descriptor are rejected") {
        UNetDescriptor d2 = d;
        d2.base_channels = 8;
        auto params2 = init_params(d2, 1);
        auto z = random_input(2, 8, 8, rng);
        CHECK_THROWS_AS(net.forward(params2, z), std::invalid_argument);
    }
}

TEST_CASE("all-zero parameters produce an all-zero output") {
    UNetDescriptor d;
    d.in_channels = 2;
    d.scales = 2;
    d.base_channels = 4;
    auto params = init_params(d, 3);
    for (auto& t : params.tensors) std::fill(t.data.begin(), t.data.end(), 0.0);
    UNet net(d);
    Rng rng(3);
    auto z = random_input(2, 8, 8, rng);
    const Tensor& out = net.forward(params, z);
    for (double v : out.data) CHECK(v == 0.0);
}

TEST_CASE("forward is deterministic for fixed parameters and input") {
    UNetDescriptor d;
    d.in_channels = 3;
    d.scales = 3;
    d.base_channels = 4;
    auto params = init_params(d, 5);
    Rng rng(5);
    auto z = random_input(3, 16, 16, rng);
    UNet n1(d), n2(d);
    auto o1 = n1.forward(params, z).data;
    auto o2 = n2.forward(params, z).data;
    CHECK(o1 == o2);
}

TEST_CASE("full-network gradients match finite differences") {
    UNetDescriptor d;
    d.in_channels = 2;
    d.scales = 2;
    d.base_channels = 2;
    auto params = init_params(d, 17);
    UNet net(d);
    Rng rng(17);
    auto z = random_input(2, 8, 8, rng);

    const Tensor& out0 = net.forward(params, z);
    auto u = random_vec(out0.data.size(), rng, -1.0, 1.0);
    // Push the ReLU head into its active region so the objective is smooth
    // along the checked directions.
    Tensor upstream("u", out0.shape);
    upstream.data = u;

    params.ensure_grads();
    params.zero_grads();
    net.forward(params, z);
    net.backward(params, upstream);

    auto loss = [&]() {
        UNet probe(d);
        const Tensor& o = probe.forward(params, z);
        double s = 0.0;
        for (std::size_t i = 0; i < o.data.size(); ++i) s += o.data[i] * u[i];
        return s;
    };

    for (auto& t : params.tensors) {
        CAPTURE(t.name);
        auto rep = fd_check_tensor(loss, t, t.grad, 1e-4, 8, rng);
        CHECK(rep.max_err <= 1e-4);
    }
}

TEST_CASE("identity bypass returns the clamped first channel") {
    UNetDescriptor d;
    d.identity_bypass = true;
    d.in_channels = 2;
    d.bypass_h = 4;
    d.bypass_w = 4;
    auto params = init_params(d, 9);
    UNet net(d);

    Tensor z("z", {2, 1, 4, 4});
    Rng rng(9);
    z.data = random_vec(z.numel(), rng, -1.0, 1.0);
    const Tensor& out = net.forward(params, z);
    REQUIRE(out.data.size() == 16u);
    for (std::size_t i = 0; i < 16; ++i)
        CHECK(out.data[i] == std::max(0.0, z.data[i]));  // channel 0, a = 0 at init

    SUBCASE("bypass backward matches finite differences") {
        // Move inputs off the ReLU kink.
        for (std::size_t i = 0; i < 16; ++i)
            if (std::abs(z.data[i]) < 1e-3) z.data[i] = 0.25;
        auto u = random_vec(16, rng, -1.0, 1.0);
        Tensor upstream("u", {1, 1, 4, 4});
        upstream.data = u;

        params.ensure_grads();
        params.zero_grads();
        net.forward(params, z);
        net.backward(params, upstream);

        auto loss = [&]() {
            UNet probe(d);
            const Tensor& o = probe.forward(params, z);
            double s = 0.0;
            for (std::size_t i = 0; i < o.data.size(); ++i) s += o.data[i] * u[i];
            return s;
        };
        auto& a = params.at("bypass.add");
        auto rep = fd_check_tensor(loss, a, a.grad, 1e-4, 16, rng);
        CHECK(rep.max_err <= 1e-5);
    }
}

TEST_CASE("output_to_image flattens the activation in pixel order") {
    Tensor out("o", {1, 1, 2, 3});
    out.data = {1, 2, 3, 4, 5, 6};
    auto img = output_to_image(out);
    REQUIRE(img.size() == 6u);
    for (std::size_t i = 0; i < 6; ++i) CHECK(img[i] == out.data[i]);

    Tensor multi("o", {2, 1, 2, 3});
    CHECK_THROWS_AS(output_to_image(multi), std::invalid_argument);
}

TEST_CASE("make_network_input standardizes composite channels") {
    Grid grid(2, 2, 1.0);
    Image a({0.0, 2.0, 4.0, 6.0});
    Image flat(4, 5.0);
    auto z = make_network_input({a, flat}, grid);
    CHECK(act_shape(z) == ActShape{2, 1, 2, 2});

    // Channel 0: mean 3, population std sqrt(5).
    const double s = std::sqrt(5.0);
    CHECK(z.data[0] == doctest::Approx(-3.0 / s));
    CHECK(z.data[3] == doctest::Approx(3.0 / s));
    // Zero-variance channel becomes all zeros rather than NaN.
    for (int i = 4; i < 8; ++i) CHECK(z.data[i] == 0.0);

    CHECK_THROWS_AS(make_network_input({}, grid), std::invalid_argument);
    CHECK_THROWS_AS(make_network_input({Image(3, 1.0)}, grid), std::invalid_argument);
}

TEST_CASE("NKNP checkpoints round-trip bit-exactly") {
    UNetDescriptor d;
    d.in_channels = 2;
    d.scales = 2;
    d.base_channels = 4;
    auto params = init_params(d, 1234);

    auto dir = fs::temp_directory_path() / "nkem_test_nknp";
    fs::remove_all(dir);
    fs::create_directories(dir);
    save_params(dir / "p.nknp", params);
    auto back = load_params(dir / "p.nknp");

    CHECK(back.desc == params.desc);
    REQUIRE(back.tensors.size() == params.tensors.size());
    for (std::size_t i = 0; i < params.tensors.size(); ++i) {
        CHECK(back.tensors[i].name == params.tensors[i].name);
        CHECK(back.tensors[i].shape == params.tensors[i].shape);
        CHECK(back.tensors[i].data == params.tensors[i].data);
    }

    // The reloaded parameters drive the network to identical outputs.
    UNet net(d);
    Rng rng(8);
    auto z = random_input(2, 8, 8, rng);
    auto o1 = net.forward(params, z).data;
    auto o2 = net.forward(back, z).data;
    CHECK(o1 == o2);

    SUBCASE("corrupt magic is rejected") {
        write_text_file(dir / "bad.nknp", "not a checkpoint");
        CHECK_THROWS_WITH_AS(load_params(dir / "bad.nknp"), doctest::Contains("magic"),
                             std::invalid_argument);
    }
    fs::remove_all(dir);
}

}  // TEST_SUITE
