#pragma once

#include <cstdint>

namespace mgc::kernels {

// Conv geometry, NCHW input [n, ci, h, w], weights [co, ci, k, k].
struct ConvShape {
    int n, ci, h, w;
    int co, k, stride, pad;
    int hout() const { return (h + 2 * pad - k) / stride + 1; }
    int wout() const { return (w + 2 * pad - k) / stride + 1; }
};

// Global switch between the OpenMP kernels and the serial reference path.
// Both produce bit-identical results; the serial path exists for testing
// and as the benchmark baseline.
void set_parallel(bool on);
bool parallel_enabled();

// y[n,co,ho,wo] = b[co] + sum_{ci,kh,kw} x[...] * w[co,ci,kh,kw]
void conv2d_forward(const float* x, const float* w, const float* b, float* y, const ConvShape& s);
// dx gather form; dx must be zero-initialized by the caller? No: it is overwritten.
void conv2d_backward_input(const float* dy, const float* w, float* dx, const ConvShape& s);
// dw/db are accumulated into (+=), matching autograd gradient accumulation.
void conv2d_backward_weights(const float* dy, const float* x, float* dw, float* db,
                             const ConvShape& s);

// Serial reference implementations (always serial regardless of the switch).
void conv2d_forward_serial(const float* x, const float* w, const float* b, float* y,
                           const ConvShape& s);
void conv2d_backward_input_serial(const float* dy, const float* w, float* dx, const ConvShape& s);
void conv2d_backward_weights_serial(const float* dy, const float* x, float* dw, float* db,
                                    const ConvShape& s);

}  // namespace mgc::kernels
