#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "mgc/tensor.hpp"

namespace mgc::ag {

struct Node;
using Var = std::shared_ptr<Node>;

// Define-by-run graph node. Backward closures accumulate into parent grads.
struct Node {
    Tensor val;
    Tensor grad;  // allocated lazily, same shape as val
    bool requires_grad = false;
    std::vector<Var> parents;
    std::function<void(Node&)> backward_fn;

    void ensure_grad() {
        if (grad.data.empty()) grad = Tensor(val.shape);
    }
};

Var leaf(Tensor t, bool requires_grad = false);
Var constant(Tensor t);
Var scalar(float v);

// Reverse-mode sweep from root (root must be scalar unless seed given).
void backward(const Var& root);

// Elementwise / scalar ops
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);  // same shape
Var div(const Var& a, const Var& b);  // same shape
Var axpb(const Var& x, float a, float b);
Var relu(const Var& x);
Var leaky_relu(const Var& x, float slope);
Var vtanh(const Var& x);
Var vsigmoid(const Var& x);
Var vexp(const Var& x);
Var vlog(const Var& x);
Var vsqrt(const Var& x);
Var vabs(const Var& x);
Var square(const Var& x);

// Reductions
Var sum(const Var& x);
Var mean(const Var& x);
Var dot(const Var& a, const Var& b);

// Structure
Var slice1d(const Var& x, int begin, int len);
Var concat1d(const std::vector<Var>& xs);
Var reshape(const Var& x, std::vector<int> shape);
Var detach(const Var& x);
Var mul_const(const Var& x, Tensor m);  // elementwise constant mask (dropout)

// NCHW ops
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
Var upsample2x(const Var& x);
Var concat_ch(const std::vector<Var>& xs);
Var scale_channels(const Var& x, const Var& m);  // m: [C]
Var gram(const Var& x);  // [N,C,H,W] -> [N,C,C], normalized by C*H*W

// Linear: x [B,in] * W [out,in]^T + b [out] -> [B,out]
Var linear(const Var& x, const Var& w, const Var& b);

// Normalization. Training mode uses batch statistics (per channel over N*H*W,
// or per (n, c) over H*W when per_instance). Running stats updated in place
// when run_mean/run_var given (batch mode only).
Var norm2d_train(const Var& x, const Var& gamma, const Var& beta, float eps, bool per_instance,
                 Tensor* run_mean, Tensor* run_var, float momentum);
Var norm2d_eval(const Var& x, const Var& gamma, const Var& beta, const Tensor& mean,
                const Tensor& var, float eps);

// Straight-through rounding: forward = round half-up, backward = identity.
Var ste_round(const Var& x);

// Weight normalization per output row: W[i,:] = g[i] * V[i,:] / ||V[i,:]||.
Var row_weight_norm(const Var& v, const Var& g);

}  // namespace mgc::ag
