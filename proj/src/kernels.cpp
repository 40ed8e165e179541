#include "mgc/kernels.hpp"

#include <atomic>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mgc::kernels {

namespace {
std::atomic<bool> g_parallel{true};

inline std::int64_t idx4(int a, int b, int c, int d, int B, int C, int D) {
    return ((static_cast<std::int64_t>(a) * B + b) * C + c) * D + d;
}
}  // namespace

void set_parallel(bool on) { g_parallel.store(on); }
bool parallel_enabled() {
#ifdef _OPENMP
    return g_parallel.load();
#else
    return false;
#endif
}

// Each output element is written by exactly one iteration, so the parallel and
// serial paths accumulate in the same order and match bit-for-bit.
static void conv_fwd_body(const float* x, const float* w, const float* b, float* y,
                          const ConvShape& s, int n, int co) {
    const int ho = s.hout(), wo = s.wout();
    for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
            float acc = b ? b[co] : 0.0f;
            const int iy0 = oy * s.stride - s.pad;
            const int ix0 = ox * s.stride - s.pad;
            for (int ci = 0; ci < s.ci; ++ci) {
                for (int kh = 0; kh < s.k; ++kh) {
                    const int iy = iy0 + kh;
                    if (iy < 0 || iy >= s.h) continue;
                    for (int kw = 0; kw < s.k; ++kw) {
                        const int ix = ix0 + kw;
                        if (ix < 0 || ix >= s.w) continue;
                        acc += x[idx4(n, ci, iy, ix, s.ci, s.h, s.w)] *
                               w[idx4(co, ci, kh, kw, s.ci, s.k, s.k)];
                    }
                }
            }
            y[idx4(n, co, oy, ox, s.co, ho, wo)] = acc;
        }
    }
}

void conv2d_forward_serial(const float* x, const float* w, const float* b, float* y,
                           const ConvShape& s) {
    for (int n = 0; n < s.n; ++n)
        for (int co = 0; co < s.co; ++co) conv_fwd_body(x, w, b, y, s, n, co);
}

void conv2d_forward(const float* x, const float* w, const float* b, float* y, const ConvShape& s) {
    if (!parallel_enabled()) {
        conv2d_forward_serial(x, w, b, y, s);
        return;
    }
#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < s.n; ++n)
        for (int co = 0; co < s.co; ++co) conv_fwd_body(x, w, b, y, s, n, co);
#else
    conv2d_forward_serial(x, w, b, y, s);
#endif
}

// dx[n,ci,iy,ix] = sum over (co,kh,kw) hitting this input element.
static void conv_bwd_input_body(const float* dy, const float* w, float* dx, const ConvShape& s,
                                int n, int ci) {
    const int ho = s.hout(), wo = s.wout();
    for (int iy = 0; iy < s.h; ++iy) {
        for (int ix = 0; ix < s.w; ++ix) {
            float acc = 0.0f;
            for (int kh = 0; kh < s.k; ++kh) {
                const int t = iy + s.pad - kh;
                if (t < 0 || t % s.stride != 0) continue;
                const int oy = t / s.stride;
                if (oy >= ho) continue;
                for (int kw = 0; kw < s.k; ++kw) {
                    const int u = ix + s.pad - kw;
                    if (u < 0 || u % s.stride != 0) continue;
                    const int ox = u / s.stride;
                    if (ox >= wo) continue;
                    for (int co = 0; co < s.co; ++co) {
                        acc += dy[idx4(n, co, oy, ox, s.co, ho, wo)] *
                               w[idx4(co, ci, kh, kw, s.ci, s.k, s.k)];
                    }
                }
            }
            dx[idx4(n, ci, iy, ix, s.ci, s.h, s.w)] += acc;
        }
    }
}

void conv2d_backward_input_serial(const float* dy, const float* w, float* dx, const ConvShape& s) {
    for (int n = 0; n < s.n; ++n)
        for (int ci = 0; ci < s.ci; ++ci) conv_bwd_input_body(dy, w, dx, s, n, ci);
}

void conv2d_backward_input(const float* dy, const float* w, float* dx, const ConvShape& s) {
    if (!parallel_enabled()) {
        conv2d_backward_input_serial(dy, w, dx, s);
        return;
    }
#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < s.n; ++n)
        for (int ci = 0; ci < s.ci; ++ci) conv_bwd_input_body(dy, w, dx, s, n, ci);
#else
    conv2d_backward_input_serial(dy, w, dx, s);
#endif
}

static void conv_bwd_weights_body(const float* dy, const float* x, float* dw, float* db,
                                  const ConvShape& s, int co) {
    const int ho = s.hout(), wo = s.wout();
    float bacc = 0.0f;
    for (int n = 0; n < s.n; ++n)
        for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox) bacc += dy[idx4(n, co, oy, ox, s.co, ho, wo)];
    if (db) db[co] += bacc;
    for (int ci = 0; ci < s.ci; ++ci) {
        for (int kh = 0; kh < s.k; ++kh) {
            for (int kw = 0; kw < s.k; ++kw) {
                float acc = 0.0f;
                for (int n = 0; n < s.n; ++n) {
                    for (int oy = 0; oy < ho; ++oy) {
                        const int iy = oy * s.stride - s.pad + kh;
                        if (iy < 0 || iy >= s.h) continue;
                        for (int ox = 0; ox < wo; ++ox) {
                            const int ix = ox * s.stride - s.pad + kw;
                            if (ix < 0 || ix >= s.w) continue;
                            acc += dy[idx4(n, co, oy, ox, s.co, ho, wo)] *
                                   x[idx4(n, ci, iy, ix, s.ci, s.h, s.w)];
                        }
                    }
                }
                dw[idx4(co, ci, kh, kw, s.ci, s.k, s.k)] += acc;
            }
        }
    }
}

void conv2d_backward_weights_serial(const float* dy, const float* x, float* dw, float* db,
                                    const ConvShape& s) {
    for (int co = 0; co < s.co; ++co) conv_bwd_weights_body(dy, x, dw, db, s, co);
}

void conv2d_backward_weights(const float* dy, const float* x, float* dw, float* db,
                             const ConvShape& s) {
    if (!parallel_enabled()) {
        conv2d_backward_weights_serial(dy, x, dw, db, s);
        return;
    }
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
    for (int co = 0; co < s.co; ++co) conv_bwd_weights_body(dy, x, dw, db, s, co);
#else
    conv2d_backward_weights_serial(dy, x, dw, db, s);
#endif
}

}  // namespace mgc::kernels
