#include "medrov/kernels.hpp"

#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace medrov::kernels {

Backend& backend() {
    static Backend b = Backend::openmp;
    return b;
}

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline void conv_forward_one_row(const double* in, const double* weights, const double* bias,
                                 const ConvShape& s, double* out, int oc, int oy) {
    const int oh = s.out_h();
    const int ow = s.out_w();
    const std::size_t in_plane = static_cast<std::size_t>(s.in_h) * s.in_w;
    const std::size_t w_per_oc = static_cast<std::size_t>(s.in_channels) * s.kernel * s.kernel;
    for (int ox = 0; ox < ow; ++ox) {
        double acc = bias ? bias[oc] : 0.0;
        const double* wboc = weights + static_cast<std::size_t>(oc) * w_per_oc;
        for (int ic = 0; ic < s.in_channels; ++ic) {
            const double* in_c = in + static_cast<std::size_t>(ic) * in_plane;
            const double* w_ic = wboc + static_cast<std::size_t>(ic) * s.kernel * s.kernel;
            for (int ky = 0; ky < s.kernel; ++ky) {
                const int iy = oy * s.stride - s.pad + ky;
                if (iy < 0 || iy >= s.in_h) continue;
                for (int kx = 0; kx < s.kernel; ++kx) {
                    const int ix = ox * s.stride - s.pad + kx;
                    if (ix < 0 || ix >= s.in_w) continue;
                    acc += in_c[static_cast<std::size_t>(iy) * s.in_w + ix] *
                           w_ic[ky * s.kernel + kx];
                }
            }
        }
        out[(static_cast<std::size_t>(oc) * oh + oy) * ow + ox] = acc;
    }
}

inline void conv_backward_input_one_row(const double* grad_out, const double* weights,
                                        const ConvShape& s, double* grad_in, int ic, int iy) {
    const int oh = s.out_h();
    const int ow = s.out_w();
    const std::size_t out_plane = static_cast<std::size_t>(oh) * ow;
    const std::size_t w_per_oc = static_cast<std::size_t>(s.in_channels) * s.kernel * s.kernel;
    for (int ix = 0; ix < s.in_w; ++ix) {
        double acc = 0.0;
        for (int oc = 0; oc < s.out_channels; ++oc) {
            const double* g_oc = grad_out + static_cast<std::size_t>(oc) * out_plane;
            const double* w_oc = weights + static_cast<std::size_t>(oc) * w_per_oc +
                                 static_cast<std::size_t>(ic) * s.kernel * s.kernel;
            for (int ky = 0; ky < s.kernel; ++ky) {
                const int ny = iy + s.pad - ky;
                if (ny < 0 || ny % s.stride != 0) continue;
                const int oy = ny / s.stride;
                if (oy >= oh) continue;
                for (int kx = 0; kx < s.kernel; ++kx) {
                    const int nx = ix + s.pad - kx;
                    if (nx < 0 || nx % s.stride != 0) continue;
                    const int ox = nx / s.stride;
                    if (ox >= ow) continue;
                    acc += g_oc[static_cast<std::size_t>(oy) * ow + ox] *
                           w_oc[ky * s.kernel + kx];
                }
            }
        }
        grad_in[(static_cast<std::size_t>(ic) * s.in_h + iy) * s.in_w + ix] = acc;
    }
}

inline void conv_backward_weights_one_oc(const double* in, const double* grad_out,
                                         const ConvShape& s, double* grad_w, double* grad_b,
                                         int oc) {
    const int oh = s.out_h();
    const int ow = s.out_w();
    const std::size_t in_plane = static_cast<std::size_t>(s.in_h) * s.in_w;
    const std::size_t w_per_oc = static_cast<std::size_t>(s.in_channels) * s.kernel * s.kernel;
    const double* g_oc = grad_out + static_cast<std::size_t>(oc) * oh * ow;

    double bacc = 0.0;
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            bacc += g_oc[static_cast<std::size_t>(oy) * ow + ox];
        }
    }
    if (grad_b) grad_b[oc] += bacc;

    for (int ic = 0; ic < s.in_channels; ++ic) {
        const double* in_c = in + static_cast<std::size_t>(ic) * in_plane;
        for (int ky = 0; ky < s.kernel; ++ky) {
            for (int kx = 0; kx < s.kernel; ++kx) {
                double acc = 0.0;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * s.stride - s.pad + ky;
                    if (iy < 0 || iy >= s.in_h) continue;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * s.stride - s.pad + kx;
                        if (ix < 0 || ix >= s.in_w) continue;
                        acc += g_oc[static_cast<std::size_t>(oy) * ow + ox] *
                               in_c[static_cast<std::size_t>(iy) * s.in_w + ix];
                    }
                }
                grad_w[oc * w_per_oc + static_cast<std::size_t>(ic) * s.kernel * s.kernel +
                       ky * s.kernel + kx] += acc;
            }
        }
    }
}

inline void text_gate_one_pixel(const double* feat, int channels, int h, int w,
                                const double* proj, int vocab, double* out, double* gate,
                                int* argmax, int y, int x) {
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    const std::size_t p = static_cast<std::size_t>(y) * w + x;
    const double inv_sqrt_c = 1.0 / std::sqrt(static_cast<double>(channels));
    double best = 0.0;
    int best_j = -1;
    for (int j = 0; j < vocab; ++j) {
        double dot = 0.0;
        const double* pj = proj + static_cast<std::size_t>(j) * channels;
        for (int c = 0; c < channels; ++c) {
            dot += feat[static_cast<std::size_t>(c) * plane + p] * pj[c];
        }
        dot *= inv_sqrt_c;
        if (best_j < 0 || dot > best) {
            best = dot;
            best_j = j;
        }
    }
    const double g = sigmoid(best);
    gate[p] = g;
    argmax[p] = best_j;
    for (int c = 0; c < channels; ++c) {
        out[static_cast<std::size_t>(c) * plane + p] =
            feat[static_cast<std::size_t>(c) * plane + p] * g;
    }
}

inline void text_gate_grad_feat_one_pixel(const double* feat, int channels, int h, int w,
                                          const double* proj, const double* gate,
                                          const int* argmax, const double* grad_out,
                                          double* grad_feat, int y, int x) {
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    const std::size_t p = static_cast<std::size_t>(y) * w + x;
    const double inv_sqrt_c = 1.0 / std::sqrt(static_cast<double>(channels));
    const double g = gate[p];
    const int j = argmax[p];
    double upstream_dot_feat = 0.0;
    for (int c = 0; c < channels; ++c) {
        upstream_dot_feat += grad_out[static_cast<std::size_t>(c) * plane + p] *
                             feat[static_cast<std::size_t>(c) * plane + p];
    }
    const double dgate = upstream_dot_feat * g * (1.0 - g);
    const double* pj = proj + static_cast<std::size_t>(j) * channels;
    for (int c = 0; c < channels; ++c) {
        grad_feat[static_cast<std::size_t>(c) * plane + p] =
            grad_out[static_cast<std::size_t>(c) * plane + p] * g +
            dgate * pj[c] * inv_sqrt_c;
    }
}

inline void text_gate_grad_proj_one_channel(const double* feat, int channels, int h, int w,
                                            const double* gate, const int* argmax,
                                            const double* grad_out, double* grad_proj,
                                            int c) {
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    const double inv_sqrt_c = 1.0 / std::sqrt(static_cast<double>(channels));
    for (std::size_t p = 0; p < plane; ++p) {
        double upstream_dot_feat = 0.0;
        for (int cc = 0; cc < channels; ++cc) {
            upstream_dot_feat += grad_out[static_cast<std::size_t>(cc) * plane + p] *
                                 feat[static_cast<std::size_t>(cc) * plane + p];
        }
        const double g = gate[p];
        const double dgate = upstream_dot_feat * g * (1.0 - g);
        grad_proj[static_cast<std::size_t>(argmax[p]) * channels + c] +=
            dgate * feat[static_cast<std::size_t>(c) * plane + p] * inv_sqrt_c;
    }
}

}  // namespace

void conv2d_forward_serial(const double* in, const double* weights, const double* bias,
                           const ConvShape& s, double* out) {
    const int oh = s.out_h();
    for (int oc = 0; oc < s.out_channels; ++oc) {
        for (int oy = 0; oy < oh; ++oy) {
            conv_forward_one_row(in, weights, bias, s, out, oc, oy);
        }
    }
}

void conv2d_forward(const double* in, const double* weights, const double* bias,
                    const ConvShape& s, double* out) {
    if (backend() == Backend::serial) {
        conv2d_forward_serial(in, weights, bias, s, out);
        return;
    }
    const int oh = s.out_h();
#pragma omp parallel for collapse(2) schedule(static)
    for (int oc = 0; oc < s.out_channels; ++oc) {
        for (int oy = 0; oy < oh; ++oy) {
            conv_forward_one_row(in, weights, bias, s, out, oc, oy);
        }
    }
}

void conv2d_backward_input_serial(const double* grad_out, const double* weights,
                                  const ConvShape& s, double* grad_in) {
    for (int ic = 0; ic < s.in_channels; ++ic) {
        for (int iy = 0; iy < s.in_h; ++iy) {
            conv_backward_input_one_row(grad_out, weights, s, grad_in, ic, iy);
        }
    }
}

void conv2d_backward_input(const double* grad_out, const double* weights,
                           const ConvShape& s, double* grad_in) {
    if (backend() == Backend::serial) {
        conv2d_backward_input_serial(grad_out, weights, s, grad_in);
        return;
    }
#pragma omp parallel for collapse(2) schedule(static)
    for (int ic = 0; ic < s.in_channels; ++ic) {
        for (int iy = 0; iy < s.in_h; ++iy) {
            conv_backward_input_one_row(grad_out, weights, s, grad_in, ic, iy);
        }
    }
}

void conv2d_backward_weights_serial(const double* in, const double* grad_out,
                                    const ConvShape& s, double* grad_w, double* grad_b) {
    for (int oc = 0; oc < s.out_channels; ++oc) {
        conv_backward_weights_one_oc(in, grad_out, s, grad_w, grad_b, oc);
    }
}

void conv2d_backward_weights(const double* in, const double* grad_out,
                             const ConvShape& s, double* grad_w, double* grad_b) {
    if (backend() == Backend::serial) {
        conv2d_backward_weights_serial(in, grad_out, s, grad_w, grad_b);
        return;
    }
#pragma omp parallel for schedule(static)
    for (int oc = 0; oc < s.out_channels; ++oc) {
        conv_backward_weights_one_oc(in, grad_out, s, grad_w, grad_b, oc);
    }
}

void text_gate_forward_serial(const double* feat, int channels, int h, int w,
                              const double* proj, int vocab, double* out, double* gate,
                              int* argmax) {
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            text_gate_one_pixel(feat, channels, h, w, proj, vocab, out, gate, argmax, y, x);
        }
    }
}

void text_gate_forward(const double* feat, int channels, int h, int w, const double* proj,
                       int vocab, double* out, double* gate, int* argmax) {
    if (backend() == Backend::serial) {
        text_gate_forward_serial(feat, channels, h, w, proj, vocab, out, gate, argmax);
        return;
    }
#pragma omp parallel for collapse(2) schedule(static)
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            text_gate_one_pixel(feat, channels, h, w, proj, vocab, out, gate, argmax, y, x);
        }
    }
}

void text_gate_backward_serial(const double* feat, int channels, int h, int w,
                               const double* proj, int vocab, const double* gate,
                               const int* argmax, const double* grad_out, double* grad_feat,
                               double* grad_proj) {
    (void)vocab;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            text_gate_grad_feat_one_pixel(feat, channels, h, w, proj, gate, argmax, grad_out,
                                          grad_feat, y, x);
        }
    }
    for (int c = 0; c < channels; ++c) {
        text_gate_grad_proj_one_channel(feat, channels, h, w, gate, argmax, grad_out,
                                        grad_proj, c);
    }
}

void text_gate_backward(const double* feat, int channels, int h, int w, const double* proj,
                        int vocab, const double* gate, const int* argmax,
                        const double* grad_out, double* grad_feat, double* grad_proj) {
    if (backend() == Backend::serial) {
        text_gate_backward_serial(feat, channels, h, w, proj, vocab, gate, argmax, grad_out,
                                  grad_feat, grad_proj);
        return;
    }
#pragma omp parallel for collapse(2) schedule(static)
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            text_gate_grad_feat_one_pixel(feat, channels, h, w, proj, gate, argmax, grad_out,
                                          grad_feat, y, x);
        }
    }
#pragma omp parallel for schedule(static)
    for (int c = 0; c < channels; ++c) {
        text_gate_grad_proj_one_channel(feat, channels, h, w, gate, argmax, grad_out,
                                        grad_proj, c);
    }
}

}  // namespace medrov::kernels
