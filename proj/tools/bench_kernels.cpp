// Times the OpenMP kernels against their serial reference on the shapes the
// detector actually runs, and checks the results stay bit-identical.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <vector>

#include "medrov/kernels.hpp"
#include "medrov/rng.hpp"
#include "medrov/tensor.hpp"

using namespace medrov;

namespace {

double time_ms(const std::function<void()>& fn, int repeats) {
    const auto start = std::chrono::steady_clock::now();
    for (int i = 0; i < repeats; ++i) fn();
    const auto stop = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(stop - start).count() / repeats;
}

void fill(Tensor& t, Rng& rng) {
    for (double& x : t.data) x = rng.normal();
}

}  // namespace

int main() {
    struct Case {
        const char* name;
        kernels::ConvShape shape;
    };
    const Case cases[] = {
        {"conv 3->8 160^2 s2", {3, 160, 160, 8, 3, 2, 1}},
        {"conv 8->16 80^2 s2", {8, 80, 80, 16, 3, 2, 1}},
        {"conv 16->32 40^2 s2", {16, 40, 40, 32, 3, 2, 1}},
        {"conv 56->32 20^2 1x1", {56, 20, 20, 32, 1, 1, 0}},
        {"conv 32->64 20^2 1x1", {32, 20, 20, 64, 1, 1, 0}},
    };
    const int repeats = 30;

    std::printf("%-22s %12s %12s %9s %7s\n", "kernel", "serial(ms)", "openmp(ms)", "speedup",
                "exact");
    for (const Case& c : cases) {
        Rng rng(42);
        Tensor in({c.shape.in_channels, c.shape.in_h, c.shape.in_w});
        Tensor w({c.shape.out_channels, c.shape.in_channels, c.shape.kernel, c.shape.kernel});
        Tensor b({c.shape.out_channels});
        fill(in, rng);
        fill(w, rng);
        fill(b, rng);
        Tensor out_serial({c.shape.out_channels, c.shape.out_h(), c.shape.out_w()});
        Tensor out_omp(out_serial.shape);
        Tensor gin_serial(in.shape), gin_omp(in.shape);
        Tensor gw_serial(w.shape), gw_omp(w.shape), gb_serial(b.shape), gb_omp(b.shape);

        const double t_fwd_serial = time_ms(
            [&] { kernels::conv2d_forward_serial(in.ptr(), w.ptr(), b.ptr(), c.shape,
                                                 out_serial.ptr()); },
            repeats);
        kernels::backend() = kernels::Backend::openmp;
        const double t_fwd_omp = time_ms(
            [&] { kernels::conv2d_forward(in.ptr(), w.ptr(), b.ptr(), c.shape, out_omp.ptr()); },
            repeats);

        const double t_bwd_serial = time_ms(
            [&] {
                kernels::conv2d_backward_input_serial(out_serial.ptr(), w.ptr(), c.shape,
                                                      gin_serial.ptr());
                gw_serial.zero();
                gb_serial.zero();
                kernels::conv2d_backward_weights_serial(in.ptr(), out_serial.ptr(), c.shape,
                                                        gw_serial.ptr(), gb_serial.ptr());
            },
            repeats);
        const double t_bwd_omp = time_ms(
            [&] {
                kernels::conv2d_backward_input(out_serial.ptr(), w.ptr(), c.shape,
                                               gin_omp.ptr());
                gw_omp.zero();
                gb_omp.zero();
                kernels::conv2d_backward_weights(in.ptr(), out_serial.ptr(), c.shape,
                                                 gw_omp.ptr(), gb_omp.ptr());
            },
            repeats);

        const bool exact =
            std::memcmp(out_serial.ptr(), out_omp.ptr(), out_serial.size() * 8) == 0 &&
            std::memcmp(gin_serial.ptr(), gin_omp.ptr(), gin_serial.size() * 8) == 0 &&
            std::memcmp(gw_serial.ptr(), gw_omp.ptr(), gw_serial.size() * 8) == 0 &&
            std::memcmp(gb_serial.ptr(), gb_omp.ptr(), gb_serial.size() * 8) == 0;

        std::printf("%-22s %12.3f %12.3f %8.2fx %7s  (fwd)\n", c.name, t_fwd_serial,
                    t_fwd_omp, t_fwd_serial / t_fwd_omp, exact ? "yes" : "NO");
        std::printf("%-22s %12.3f %12.3f %8.2fx %7s  (bwd)\n", "", t_bwd_serial, t_bwd_omp,
                    t_bwd_serial / t_bwd_omp, "");
    }

    // text gate on the largest scale
    {
        Rng rng(7);
        const int c = 8, h = 80, w = 80, v = 16;
        Tensor feat({c, h, w}), proj({v, c}), out_s({c, h, w}), out_p({c, h, w});
        Tensor gate_s({h, w}), gate_p({h, w});
        std::vector<int> arg_s(static_cast<std::size_t>(h) * w), arg_p(arg_s.size());
        fill(feat, rng);
        fill(proj, rng);
        const double t_serial = time_ms(
            [&] { kernels::text_gate_forward_serial(feat.ptr(), c, h, w, proj.ptr(), v,
                                                    out_s.ptr(), gate_s.ptr(), arg_s.data()); },
            repeats);
        const double t_omp = time_ms(
            [&] { kernels::text_gate_forward(feat.ptr(), c, h, w, proj.ptr(), v, out_p.ptr(),
                                             gate_p.ptr(), arg_p.data()); },
            repeats);
        const bool exact = std::memcmp(out_s.ptr(), out_p.ptr(), out_s.size() * 8) == 0;
        std::printf("%-22s %12.3f %12.3f %8.2fx %7s  (fwd)\n", "text gate 8ch 80^2",
                    t_serial, t_omp, t_serial / t_omp, exact ? "yes" : "NO");
    }
    return 0;
}
