#pragma once

#include <cstddef>

namespace medrov::kernels {

/// Which implementation the dispatching kernels run. The OpenMP variants are
/// element-parallel with per-element serial accumulation, so both backends
/// produce bit-identical results; the serial reference stays as the test
/// oracle and benchmark baseline.
enum class Backend { serial, openmp };

Backend& backend();  // process-wide, defaults to openmp

struct ConvShape {
    int in_channels = 0;
    int in_h = 0;
    int in_w = 0;
    int out_channels = 0;
    int kernel = 0;   // square kernels only
    int stride = 1;
    int pad = 0;

    int out_h() const { return (in_h + 2 * pad - kernel) / stride + 1; }
    int out_w() const { return (in_w + 2 * pad - kernel) / stride + 1; }
};

// out[oc,oy,ox] = bias[oc] + sum_ic,ky,kx in[ic, oy*s-p+ky, ox*s-p+kx] * w[oc,ic,ky,kx]
void conv2d_forward(const double* in, const double* weights, const double* bias,
                    const ConvShape& s, double* out);
void conv2d_forward_serial(const double* in, const double* weights, const double* bias,
                           const ConvShape& s, double* out);

// grad_in[ic,iy,ix] = sum over output positions touching it
void conv2d_backward_input(const double* grad_out, const double* weights,
                           const ConvShape& s, double* grad_in);
void conv2d_backward_input_serial(const double* grad_out, const double* weights,
                                  const ConvShape& s, double* grad_in);

// grad_w[oc,ic,ky,kx] += ..., grad_b[oc] += ... (accumulating)
void conv2d_backward_weights(const double* in, const double* grad_out,
                             const ConvShape& s, double* grad_w, double* grad_b);
void conv2d_backward_weights_serial(const double* in, const double* grad_out,
                                    const ConvShape& s, double* grad_w, double* grad_b);

// Max-sigmoid text modulation used by the neck:
//   logit[y,x] = max_j sum_c feat[c,y,x] * proj[j,c] / sqrt(C)
//   gate[y,x]  = sigmoid(logit[y,x]),  out[c,y,x] = feat[c,y,x] * gate[y,x]
// argmax[y,x] records the winning vocabulary row for the backward pass.
void text_gate_forward(const double* feat, int channels, int h, int w,
                       const double* proj, int vocab, double* out, double* gate,
                       int* argmax);
void text_gate_forward_serial(const double* feat, int channels, int h, int w,
                              const double* proj, int vocab, double* out, double* gate,
                              int* argmax);

// Backward of text_gate_forward. grad_proj accumulates; grad_feat overwritten.
void text_gate_backward(const double* feat, int channels, int h, int w,
                        const double* proj, int vocab, const double* gate,
                        const int* argmax, const double* grad_out, double* grad_feat,
                        double* grad_proj);
void text_gate_backward_serial(const double* feat, int channels, int h, int w,
                               const double* proj, int vocab, const double* gate,
                               const int* argmax, const double* grad_out,
                               double* grad_feat, double* grad_proj);

}  // namespace medrov::kernels
