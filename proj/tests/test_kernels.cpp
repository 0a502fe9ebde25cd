#include <doctest.h>

#include <cstring>

#include "medrov/kernels.hpp"
#include "medrov/rng.hpp"
#include "medrov/tensor.hpp"
#include "oracles.hpp"

using namespace medrov;
using namespace medrov::kernels;

namespace {

struct BackendGuard {
    Backend saved;
    BackendGuard() : saved(backend()) {}
    ~BackendGuard() { backend() = saved; }
};

void fill(Tensor& t, Rng& rng) {
    for (double& x : t.data) x = rng.normal();
}

}  // namespace

TEST_CASE("conv kernels: openmp output is bit-identical to the serial reference") {
    BackendGuard guard;
    Rng rng(404);
    const ConvShape shapes[] = {
        {3, 32, 32, 8, 3, 2, 1},
        {8, 16, 16, 16, 3, 2, 1},
        {24, 10, 10, 12, 1, 1, 0},
        {4, 9, 7, 5, 3, 1, 1},
    };
    for (const ConvShape& s : shapes) {
        Tensor in({s.in_channels, s.in_h, s.in_w});
        Tensor w({s.out_channels, s.in_channels, s.kernel, s.kernel});
        Tensor b({s.out_channels});
        fill(in, rng);
        fill(w, rng);
        fill(b, rng);

        Tensor out_a({s.out_channels, s.out_h(), s.out_w()});
        Tensor out_b(out_a.shape);
        conv2d_forward_serial(in.ptr(), w.ptr(), b.ptr(), s, out_a.ptr());
        backend() = Backend::openmp;
        conv2d_forward(in.ptr(), w.ptr(), b.ptr(), s, out_b.ptr());
        CHECK(std::memcmp(out_a.ptr(), out_b.ptr(), out_a.size() * sizeof(double)) == 0);

        Tensor gin_a(in.shape), gin_b(in.shape);
        conv2d_backward_input_serial(out_a.ptr(), w.ptr(), s, gin_a.ptr());
        conv2d_backward_input(out_a.ptr(), w.ptr(), s, gin_b.ptr());
        CHECK(std::memcmp(gin_a.ptr(), gin_b.ptr(), gin_a.size() * sizeof(double)) == 0);

        Tensor gw_a(w.shape), gw_b(w.shape), gb_a(b.shape), gb_b(b.shape);
        conv2d_backward_weights_serial(in.ptr(), out_a.ptr(), s, gw_a.ptr(), gb_a.ptr());
        conv2d_backward_weights(in.ptr(), out_a.ptr(), s, gw_b.ptr(), gb_b.ptr());
        CHECK(std::memcmp(gw_a.ptr(), gw_b.ptr(), gw_a.size() * sizeof(double)) == 0);
        CHECK(std::memcmp(gb_a.ptr(), gb_b.ptr(), gb_a.size() * sizeof(double)) == 0);
    }
}

TEST_CASE("text gate: openmp matches serial exactly") {
    BackendGuard guard;
    Rng rng(11);
    const int c = 6, h = 13, w = 9, v = 5;
    Tensor feat({c, h, w}), proj({v, c});
    fill(feat, rng);
    fill(proj, rng);

    Tensor out_a({c, h, w}), out_b({c, h, w}), gate_a({h, w}), gate_b({h, w});
    std::vector<int> arg_a(static_cast<std::size_t>(h) * w), arg_b(arg_a.size());
    text_gate_forward_serial(feat.ptr(), c, h, w, proj.ptr(), v, out_a.ptr(), gate_a.ptr(),
                             arg_a.data());
    backend() = Backend::openmp;
    text_gate_forward(feat.ptr(), c, h, w, proj.ptr(), v, out_b.ptr(), gate_b.ptr(),
                      arg_b.data());
    CHECK(std::memcmp(out_a.ptr(), out_b.ptr(), out_a.size() * sizeof(double)) == 0);
    CHECK(arg_a == arg_b);

    Tensor up({c, h, w});
    fill(up, rng);
    Tensor gf_a({c, h, w}), gf_b({c, h, w}), gp_a({v, c}), gp_b({v, c});
    text_gate_backward_serial(feat.ptr(), c, h, w, proj.ptr(), v, gate_a.ptr(), arg_a.data(),
                              up.ptr(), gf_a.ptr(), gp_a.ptr());
    text_gate_backward(feat.ptr(), c, h, w, proj.ptr(), v, gate_b.ptr(), arg_b.data(),
                       up.ptr(), gf_b.ptr(), gp_b.ptr());
    CHECK(std::memcmp(gf_a.ptr(), gf_b.ptr(), gf_a.size() * sizeof(double)) == 0);
    CHECK(std::memcmp(gp_a.ptr(), gp_b.ptr(), gp_a.size() * sizeof(double)) == 0);
}

TEST_CASE("conv backward matches finite differences") {
    Rng rng(2);
    const ConvShape s{2, 6, 5, 3, 3, 2, 1};
    Tensor in({s.in_channels, s.in_h, s.in_w});
    Tensor w({s.out_channels, s.in_channels, s.kernel, s.kernel});
    Tensor b({s.out_channels});
    fill(in, rng);
    fill(w, rng);
    fill(b, rng);
    Tensor up({s.out_channels, s.out_h(), s.out_w()});
    fill(up, rng);

    // scalar objective: sum(conv(in, w, b) * up)
    auto objective = [&](const Tensor& in_t, const Tensor& w_t, const Tensor& b_t) {
        Tensor out({s.out_channels, s.out_h(), s.out_w()});
        conv2d_forward_serial(in_t.ptr(), w_t.ptr(), b_t.ptr(), s, out.ptr());
        double acc = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) acc += out.data[i] * up.data[i];
        return acc;
    };

    Tensor gin(in.shape), gw(w.shape), gb(b.shape);
    conv2d_backward_input_serial(up.ptr(), w.ptr(), s, gin.ptr());
    conv2d_backward_weights_serial(in.ptr(), up.ptr(), s, gw.ptr(), gb.ptr());

    const auto fd_in = medrov::testing::finite_difference_gradient(
        [&](const std::vector<double>& x) {
            Tensor t = in;
            t.data = x;
            return objective(t, w, b);
        },
        in.data);
    CHECK(medrov::testing::max_relative_error(gin.data, fd_in) < 1e-6);

    const auto fd_w = medrov::testing::finite_difference_gradient(
        [&](const std::vector<double>& x) {
            Tensor t = w;
            t.data = x;
            return objective(in, t, b);
        },
        w.data);
    CHECK(medrov::testing::max_relative_error(gw.data, fd_w) < 1e-6);

    const auto fd_b = medrov::testing::finite_difference_gradient(
        [&](const std::vector<double>& x) {
            Tensor t = b;
            t.data = x;
            return objective(in, w, t);
        },
        b.data);
    CHECK(medrov::testing::max_relative_error(gb.data, fd_b) < 1e-6);
}

TEST_CASE("text gate backward matches finite differences") {
    Rng rng(3);
    const int c = 4, h = 5, w = 4, v = 3;
    Tensor feat({c, h, w}), proj({v, c}), up({c, h, w});
    fill(feat, rng);
    fill(proj, rng);
    fill(up, rng);

    auto objective = [&](const Tensor& f_t, const Tensor& p_t) {
        Tensor out({c, h, w}), gate({h, w});
        std::vector<int> arg(static_cast<std::size_t>(h) * w);
        text_gate_forward_serial(f_t.ptr(), c, h, w, p_t.ptr(), v, out.ptr(), gate.ptr(),
                                 arg.data());
        double acc = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) acc += out.data[i] * up.data[i];
        return acc;
    };

    Tensor out({c, h, w}), gate({h, w});
    std::vector<int> arg(static_cast<std::size_t>(h) * w);
    text_gate_forward_serial(feat.ptr(), c, h, w, proj.ptr(), v, out.ptr(), gate.ptr(),
                             arg.data());
    Tensor gf({c, h, w}), gp({v, c});
    text_gate_backward_serial(feat.ptr(), c, h, w, proj.ptr(), v, gate.ptr(), arg.data(),
                              up.ptr(), gf.ptr(), gp.ptr());

    const auto fd_f = medrov::testing::finite_difference_gradient(
        [&](const std::vector<double>& x) {
            Tensor t = feat;
            t.data = x;
            return objective(t, proj);
        },
        feat.data);
    CHECK(medrov::testing::max_relative_error(gf.data, fd_f) < 1e-5);

    const auto fd_p = medrov::testing::finite_difference_gradient(
        [&](const std::vector<double>& x) {
            Tensor t = proj;
            t.data = x;
            return objective(feat, t);
        },
        proj.data);
    CHECK(medrov::testing::max_relative_error(gp.data, fd_p) < 1e-5);
}
