#include "mgc/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "mgc/kernels.hpp"

namespace mgc::ag {

namespace {

Var make_node(Tensor val, std::vector<Var> parents, std::function<void(Node&)> bwd) {
    auto n = std::make_shared<Node>();
    n->val = std::move(val);
    n->parents = std::move(parents);
    for (const auto& p : n->parents)
        if (p->requires_grad) n->requires_grad = true;
    if (n->requires_grad) n->backward_fn = std::move(bwd);
    return n;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (!a->val.same_shape(b->val))
        throw ContractViolation(std::string(op) + ": shape mismatch");
}

// Elementwise unary helper: y = f(x), dx += dy * dfdx(x_i, y_i).
template <typename F, typename DF>
Var unary(const Var& x, F f, DF dfdx) {
    Tensor out(x->val.shape);
    for (std::int64_t i = 0; i < x->val.numel(); ++i) out.at(i) = f(x->val.at(i));
    return make_node(std::move(out), {x}, [x, dfdx](Node& self) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (std::int64_t i = 0; i < x->val.numel(); ++i)
            x->grad.at(i) += self.grad.at(i) * dfdx(x->val.at(i), self.val.at(i));
    });
}

}  // namespace

Var leaf(Tensor t, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->val = std::move(t);
    n->requires_grad = requires_grad;
    return n;
}

Var constant(Tensor t) { return leaf(std::move(t), false); }
Var scalar(float v) { return constant(Tensor::scalar(v)); }

void backward(const Var& root) {
    if (!root->requires_grad) return;
    // Iterative post-order DFS over parents.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.push_back({root.get(), 0});
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx].get();
            ++idx;
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root->ensure_grad();
    std::fill(root->grad.data.begin(), root->grad.data.end(), 1.0f);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && !n->grad.data.empty()) n->backward_fn(*n);
    }
}

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    Tensor out(a->val.shape);
    for (std::int64_t i = 0; i < out.numel(); ++i) out.at(i) = a->val.at(i) + b->val.at(i);
    return make_node(std::move(out), {a, b}, [a, b](Node& self) {
        for (const Var& p : {a, b}) {
            if (!p->requires_grad) continue;
            p->ensure_grad();
            for (std::int64_t i = 0; i < self.val.numel(); ++i) p->grad.at(i) += self.grad.at(i);
        }
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    Tensor out(a->val.shape);
    for (std::int64_t i = 0; i < out.numel(); ++i) out.at(i) = a->val.at(i) - b->val.at(i);
    return make_node(std::move(out), {a, b}, [a, b](Node& self) {
        if (a->requires_grad) {
            a->ensure_grad();
            for (std::int64_t i = 0; i < self.val.numel(); ++i) a->grad.at(i) += self.grad.at(i);
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (std::int64_t i = 0; i < self.val.numel(); ++i) b->grad.at(i) -= self.grad.at(i);
        }
    });
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    Tensor out(a->val.shape);
    for (std::int64_t i = 0; i < out.numel(); ++i) out.at(i) = a->val.at(i) * b->val.at(i);
    return make_node(std::move(out), {a, b}, [a, b](Node& self) {
        if (a->requires_grad) {
            a->ensure_grad();
            for (std::int64_t i = 0; i < self.val.numel(); ++i)
                a->grad.at(i) += self.grad.at(i) * b->val.at(i);
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (std::int64_t i = 0; i < self.val.numel(); ++i)
                b->grad.at(i) += self.grad.at(i) * a->val.at(i);
        }
    });
}

Var div(const Var& a, const Var& b) {
    check_same_shape(a, b, "div");
    Tensor out(a->val.shape);
    for (std::int64_t i = 0; i < out.numel(); ++i) out.at(i) = a->val.at(i) / b->val.at(i);
    return make_node(std::move(out), {a, b}, [a, b](Node& self) {
        if (a->requires_grad) {
            a->ensure_grad();
            for (std::int64_t i = 0; i < self.val.numel(); ++i)
                a->grad.at(i) += self.grad.at(i) / b->val.at(i);
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (std::int64_t i = 0; i < self.val.numel(); ++i)
                b->grad.at(i) -= self.grad.at(i) * a->val.at(i) / (b->val.at(i) * b->val.at(i));
        }
    });
}

Var axpb(const Var& x, float a, float b) {
    Tensor out(x->val.shape);
    for (std::int64_t i = 0; i < out.numel(); ++i) out.at(i) = a * x->val.at(i) + b;
    return make_node(std::move(out), {x}, [x, a](Node& self) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (std::int64_t i = 0; i < self.val.numel(); ++i) x->grad.at(i) += a * self.grad.at(i);
    });
}

Var relu(const Var& x) {
    return unary(x, [](float v) { return v > 0.0f ? v : 0.0f; },
                 [](float v, float) { return v > 0.0f ? 1.0f : 0.0f; });
}

Var leaky_relu(const Var& x, float slope) {
    return unary(x, [slope](float v) { return v > 0.0f ? v : slope * v; },
                 [slope](float v, float) { return v > 0.0f ? 1.0f : slope; });
}

Var vtanh(const Var& x) {
    return unary(x, [](float v) { return std::tanh(v); },
                 [](float, float y) { return 1.0f - y * y; });
}

Var vsigmoid(const Var& x) {
    return unary(x, [](float v) { return 1.0f / (1.0f + std::exp(-v)); },
                 [](float, float y) { return y * (1.0f - y); });
}

Var vexp(const Var& x) {
    return unary(x, [](float v) { return std::exp(v); }, [](float, float y) { return y; });
}

Var vlog(const Var& x) {
    return unary(x, [](float v) { return std::log(v); }, [](float v, float) { return 1.0f / v; });
}

Var vsqrt(const Var& x) {
    return unary(x, [](float v) { return std::sqrt(v); },
                 [](float, float y) { return 0.5f / y; });
}

Var vabs(const Var& x) {
    return unary(x, [](float v) { return std::fabs(v); },
                 [](float v, float) { return v >= 0.0f ? 1.0f : -1.0f; });
}

Var square(const Var& x) {
    return unary(x, [](float v) { return v * v; }, [](float v, float) { return 2.0f * v; });
}

Var sum(const Var& x) {
    float s = 0.0f;
    for (std::int64_t i = 0; i < x->val.numel(); ++i) s += x->val.at(i);
    return make_node(Tensor::scalar(s), {x}, [x](Node& self) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        const float g = self.grad.at(0);
        for (std::int64_t i = 0; i < x->val.numel(); ++i) x->grad.at(i) += g;
    });
}

Var mean(const Var& x) {
    if (x->val.numel() == 0) throw ContractViolation("mean of empty tensor");
    return axpb(sum(x), 1.0f / static_cast<float>(x->val.numel()), 0.0f);
}

Var dot(const Var& a, const Var& b) {
    check_same_shape(a, b, "dot");
    float s = 0.0f;
    for (std::int64_t i = 0; i < a->val.numel(); ++i) s += a->val.at(i) * b->val.at(i);
    return make_node(Tensor::scalar(s), {a, b}, [a, b](Node& self) {
        const float g = self.grad.at(0);
        if (a->requires_grad) {
            a->ensure_grad();
            for (std::int64_t i = 0; i < a->val.numel(); ++i) a->grad.at(i) += g * b->val.at(i);
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (std::int64_t i = 0; i < b->val.numel(); ++i) b->grad.at(i) += g * a->val.at(i);
        }
    });
}

Var slice1d(const Var& x, int begin, int len) {
    if (begin < 0 || len < 0 || begin + len > x->val.numel())
        throw ContractViolation("slice1d out of range");
    Tensor out({len});
    std::copy_n(x->val.data.begin() + begin, len, out.data.begin());
    return make_node(std::move(out), {x}, [x, begin, len](Node& self) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (int i = 0; i < len; ++i) x->grad.at(begin + i) += self.grad.at(i);
    });
}

Var concat1d(const std::vector<Var>& xs) {
    if (xs.empty()) throw ContractViolation("concat1d: empty list");
    std::int64_t total = 0;
    for (const auto& x : xs) total += x->val.numel();
    Tensor out({static_cast<int>(total)});
    std::int64_t off = 0;
    for (const auto& x : xs) {
        std::copy(x->val.data.begin(), x->val.data.end(), out.data.begin() + off);
        off += x->val.numel();
    }
    return make_node(std::move(out), xs, [xs](Node& self) {
        std::int64_t off = 0;
        for (const auto& x : xs) {
            if (x->requires_grad) {
                x->ensure_grad();
                for (std::int64_t i = 0; i < x->val.numel(); ++i)
                    x->grad.at(i) += self.grad.at(off + i);
            }
            off += x->val.numel();
        }
    });
}

Var reshape(const Var& x, std::vector<int> shape) {
    if (Tensor::numel_of(shape) != x->val.numel()) throw ContractViolation("reshape: numel");
    Tensor out(std::move(shape), x->val.data);
    return make_node(std::move(out), {x}, [x](Node& self) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (std::int64_t i = 0; i < x->val.numel(); ++i) x->grad.at(i) += self.grad.at(i);
    });
}

Var detach(const Var& x) { return constant(x->val); }

Var mul_const(const Var& x, Tensor m) {
    if (!x->val.same_shape(m)) throw ContractViolation("mul_const: shape mismatch");
    Tensor out(x->val.shape);
    for (std::int64_t i = 0; i < out.numel(); ++i) out.at(i) = x->val.at(i) * m.at(i);
    auto mm = std::make_shared<Tensor>(std::move(m));
    return make_node(std::move(out), {x}, [x, mm](Node& self) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (std::int64_t i = 0; i < self.val.numel(); ++i)
            x->grad.at(i) += self.grad.at(i) * mm->at(i);
    });
}

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    if (x->val.shape.size() != 4 || w->val.shape.size() != 4)
        throw ContractViolation("conv2d: expects 4-D input and weights");
    kernels::ConvShape s{x->val.dim(0), x->val.dim(1), x->val.dim(2), x->val.dim(3),
                         w->val.dim(0), w->val.dim(2), stride,        pad};
    if (w->val.dim(1) != s.ci) throw ContractViolation("conv2d: channel mismatch");
    if (b && b->val.numel() != s.co) throw ContractViolation("conv2d: bias size");
    Tensor out({s.n, s.co, s.hout(), s.wout()});
    kernels::conv2d_forward(x->val.data.data(), w->val.data.data(),
                            b ? b->val.data.data() : nullptr, out.data.data(), s);
    std::vector<Var> parents{x, w};
    if (b) parents.push_back(b);
    return make_node(std::move(out), std::move(parents), [x, w, b, s](Node& self) {
        if (x->requires_grad) {
            x->ensure_grad();
            kernels::conv2d_backward_input(self.grad.data.data(), w->val.data.data(),
                                           x->grad.data.data(), s);
        }
        if (w->requires_grad) {
            w->ensure_grad();
            float* db = nullptr;
            if (b && b->requires_grad) {
                b->ensure_grad();
                db = b->grad.data.data();
            }
            kernels::conv2d_backward_weights(self.grad.data.data(), x->val.data.data(),
                                             w->grad.data.data(), db, s);
        } else if (b && b->requires_grad) {
            b->ensure_grad();
            const int ho = s.hout(), wo = s.wout();
            for (int n = 0; n < s.n; ++n)
                for (int co = 0; co < s.co; ++co) {
                    float acc = 0.0f;
                    const std::int64_t base =
                        ((static_cast<std::int64_t>(n) * s.co + co) * ho) * wo;
                    for (int i = 0; i < ho * wo; ++i) acc += self.grad.at(base + i);
                    b->grad.at(co) += acc;
                }
        }
    });
}

Var upsample2x(const Var& x) {
    if (x->val.shape.size() != 4) throw ContractViolation("upsample2x: 4-D input expected");
    const int n = x->val.dim(0), c = x->val.dim(1), h = x->val.dim(2), w = x->val.dim(3);
    Tensor out({n, c, 2 * h, 2 * w});
    for (int ni = 0; ni < n; ++ni)
        for (int ci = 0; ci < c; ++ci)
            for (int y = 0; y < h; ++y)
                for (int xx = 0; xx < w; ++xx) {
                    float v = x->val.at(((static_cast<std::int64_t>(ni) * c + ci) * h + y) * w + xx);
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx)
                            out.at(((static_cast<std::int64_t>(ni) * c + ci) * 2 * h + 2 * y + dy) *
                                       2 * w +
                                   2 * xx + dx) = v;
                }
    return make_node(std::move(out), {x}, [x, n, c, h, w](Node& self) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (int ni = 0; ni < n; ++ni)
            for (int ci = 0; ci < c; ++ci)
                for (int y = 0; y < h; ++y)
                    for (int xx = 0; xx < w; ++xx) {
                        float acc = 0.0f;
                        for (int dy = 0; dy < 2; ++dy)
                            for (int dx = 0; dx < 2; ++dx)
                                acc += self.grad.at(
                                    ((static_cast<std::int64_t>(ni) * c + ci) * 2 * h + 2 * y + dy) *
                                        2 * w +
                                    2 * xx + dx);
                        x->grad.at(((static_cast<std::int64_t>(ni) * c + ci) * h + y) * w + xx) +=
                            acc;
                    }
    });
}

Var concat_ch(const std::vector<Var>& xs) {
    if (xs.empty()) throw ContractViolation("concat_ch: empty list");
    const int n = xs[0]->val.dim(0), h = xs[0]->val.dim(2), w = xs[0]->val.dim(3);
    int ctot = 0;
    for (const auto& x : xs) {
        if (x->val.shape.size() != 4 || x->val.dim(0) != n || x->val.dim(2) != h ||
            x->val.dim(3) != w)
            throw ContractViolation("concat_ch: incompatible shapes");
        ctot += x->val.dim(1);
    }
    Tensor out({n, ctot, h, w});
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    for (int ni = 0; ni < n; ++ni) {
        int coff = 0;
        for (const auto& x : xs) {
            const int c = x->val.dim(1);
            std::copy_n(x->val.data.begin() + static_cast<std::int64_t>(ni) * c * plane, c * plane,
                        out.data.begin() + (static_cast<std::int64_t>(ni) * ctot + coff) * plane);
            coff += c;
        }
    }
    return make_node(std::move(out), xs, [xs, n, h, w, ctot](Node& self) {
        const std::int64_t plane = static_cast<std::int64_t>(h) * w;
        for (int ni = 0; ni < n; ++ni) {
            int coff = 0;
            for (const auto& x : xs) {
                const int c = x->val.dim(1);
                if (x->requires_grad) {
                    x->ensure_grad();
                    for (std::int64_t i = 0; i < c * plane; ++i)
                        x->grad.at(static_cast<std::int64_t>(ni) * c * plane + i) +=
                            self.grad.at((static_cast<std::int64_t>(ni) * ctot + coff) * plane + i);
                }
                coff += c;
            }
        }
    });
}

Var scale_channels(const Var& x, const Var& m) {
    if (x->val.shape.size() != 4) throw ContractViolation("scale_channels: 4-D input expected");
    const int n = x->val.dim(0), c = x->val.dim(1), h = x->val.dim(2), w = x->val.dim(3);
    if (m->val.numel() != c) throw ContractViolation("scale_channels: mask length mismatch");
    Tensor out(x->val.shape);
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    for (int ni = 0; ni < n; ++ni)
        for (int ci = 0; ci < c; ++ci) {
            const float s = m->val.at(ci);
            const std::int64_t base = (static_cast<std::int64_t>(ni) * c + ci) * plane;
            for (std::int64_t i = 0; i < plane; ++i) out.at(base + i) = x->val.at(base + i) * s;
        }
    return make_node(std::move(out), {x, m}, [x, m, n, c, plane](Node& self) {
        for (int ni = 0; ni < n; ++ni)
            for (int ci = 0; ci < c; ++ci) {
                const std::int64_t base = (static_cast<std::int64_t>(ni) * c + ci) * plane;
                if (x->requires_grad) {
                    x->ensure_grad();
                    const float s = m->val.at(ci);
                    for (std::int64_t i = 0; i < plane; ++i)
                        x->grad.at(base + i) += self.grad.at(base + i) * s;
                }
                if (m->requires_grad) {
                    m->ensure_grad();
                    float acc = 0.0f;
                    for (std::int64_t i = 0; i < plane; ++i)
                        acc += self.grad.at(base + i) * x->val.at(base + i);
                    m->grad.at(ci) += acc;
                }
            }
    });
}

Var gram(const Var& x) {
    if (x->val.shape.size() != 4) throw ContractViolation("gram: 4-D input expected");
    const int n = x->val.dim(0), c = x->val.dim(1), h = x->val.dim(2), w = x->val.dim(3);
    const std::int64_t s = static_cast<std::int64_t>(h) * w;
    const float norm = 1.0f / (static_cast<float>(c) * static_cast<float>(s));
    Tensor out({n, c, c});
    for (int ni = 0; ni < n; ++ni)
        for (int c1 = 0; c1 < c; ++c1)
            for (int c2 = 0; c2 < c; ++c2) {
                float acc = 0.0f;
                const float* a = x->val.data.data() + (static_cast<std::int64_t>(ni) * c + c1) * s;
                const float* b = x->val.data.data() + (static_cast<std::int64_t>(ni) * c + c2) * s;
                for (std::int64_t i = 0; i < s; ++i) acc += a[i] * b[i];
                out.at((static_cast<std::int64_t>(ni) * c + c1) * c + c2) = acc * norm;
            }
    return make_node(std::move(out), {x}, [x, n, c, s, norm](Node& self) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (int ni = 0; ni < n; ++ni)
            for (int c1 = 0; c1 < c; ++c1) {
                float* dst = x->grad.data.data() + (static_cast<std::int64_t>(ni) * c + c1) * s;
                for (int c2 = 0; c2 < c; ++c2) {
                    const float g =
                        (self.grad.at((static_cast<std::int64_t>(ni) * c + c1) * c + c2) +
                         self.grad.at((static_cast<std::int64_t>(ni) * c + c2) * c + c1)) *
                        norm;
                    const float* src =
                        x->val.data.data() + (static_cast<std::int64_t>(ni) * c + c2) * s;
                    for (std::int64_t i = 0; i < s; ++i) dst[i] += g * src[i];
                }
            }
    });
}

Var linear(const Var& x, const Var& w, const Var& b) {
    if (x->val.shape.size() != 2 || w->val.shape.size() != 2)
        throw ContractViolation("linear: 2-D input and weights expected");
    const int bs = x->val.dim(0), in = x->val.dim(1), out_n = w->val.dim(0);
    if (w->val.dim(1) != in) throw ContractViolation("linear: dimension mismatch");
    if (b && b->val.numel() != out_n) throw ContractViolation("linear: bias size");
    Tensor out({bs, out_n});
    for (int bi = 0; bi < bs; ++bi)
        for (int o = 0; o < out_n; ++o) {
            float acc = b ? b->val.at(o) : 0.0f;
            for (int i = 0; i < in; ++i)
                acc += x->val.at(static_cast<std::int64_t>(bi) * in + i) *
                       w->val.at(static_cast<std::int64_t>(o) * in + i);
            out.at(static_cast<std::int64_t>(bi) * out_n + o) = acc;
        }
    std::vector<Var> parents{x, w};
    if (b) parents.push_back(b);
    return make_node(std::move(out), std::move(parents), [x, w, b, bs, in, out_n](Node& self) {
        for (int bi = 0; bi < bs; ++bi)
            for (int o = 0; o < out_n; ++o) {
                const float g = self.grad.at(static_cast<std::int64_t>(bi) * out_n + o);
                if (x->requires_grad) {
                    x->ensure_grad();
                    for (int i = 0; i < in; ++i)
                        x->grad.at(static_cast<std::int64_t>(bi) * in + i) +=
                            g * w->val.at(static_cast<std::int64_t>(o) * in + i);
                }
                if (w->requires_grad) {
                    w->ensure_grad();
                    for (int i = 0; i < in; ++i)
                        w->grad.at(static_cast<std::int64_t>(o) * in + i) +=
                            g * x->val.at(static_cast<std::int64_t>(bi) * in + i);
                }
                if (b && b->requires_grad) {
                    b->ensure_grad();
                    b->grad.at(o) += g;
                }
            }
    });
}

Var norm2d_train(const Var& x, const Var& gamma, const Var& beta, float eps, bool per_instance,
                 Tensor* run_mean, Tensor* run_var, float momentum) {
    if (x->val.shape.size() != 4) throw ContractViolation("norm2d: 4-D input expected");
    const int n = x->val.dim(0), c = x->val.dim(1), h = x->val.dim(2), w = x->val.dim(3);
    if (gamma->val.numel() != c || beta->val.numel() != c)
        throw ContractViolation("norm2d: affine size mismatch");
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    const int groups = per_instance ? n * c : c;
    const std::int64_t m = per_instance ? plane : static_cast<std::int64_t>(n) * plane;

    auto xhat = std::make_shared<Tensor>(x->val.shape);
    auto sinv = std::make_shared<std::vector<float>>(groups);
    std::vector<float> means(groups);

    auto for_group = [&](int g, auto&& fn) {
        // Iterate all elements of a statistics group in a fixed order.
        if (per_instance) {
            const std::int64_t base = static_cast<std::int64_t>(g) * plane;
            for (std::int64_t i = 0; i < plane; ++i) fn(base + i);
        } else {
            for (int ni = 0; ni < n; ++ni) {
                const std::int64_t base = (static_cast<std::int64_t>(ni) * c + g) * plane;
                for (std::int64_t i = 0; i < plane; ++i) fn(base + i);
            }
        }
    };

    for (int g = 0; g < groups; ++g) {
        double s = 0.0;
        for_group(g, [&](std::int64_t i) { s += x->val.at(i); });
        const float mu = static_cast<float>(s / static_cast<double>(m));
        double v = 0.0;
        for_group(g, [&](std::int64_t i) {
            const double d = x->val.at(i) - mu;
            v += d * d;
        });
        const float var = static_cast<float>(v / static_cast<double>(m));
        const float inv = 1.0f / std::sqrt(var + eps);
        means[g] = mu;
        (*sinv)[g] = inv;
        for_group(g, [&](std::int64_t i) { xhat->at(i) = (x->val.at(i) - mu) * inv; });
        if (!per_instance && run_mean && run_var) {
            const float unbiased =
                m > 1 ? var * static_cast<float>(m) / static_cast<float>(m - 1) : var;
            run_mean->at(g) = (1.0f - momentum) * run_mean->at(g) + momentum * mu;
            run_var->at(g) = (1.0f - momentum) * run_var->at(g) + momentum * unbiased;
        }
    }

    Tensor out(x->val.shape);
    for (int ni = 0; ni < n; ++ni)
        for (int ci = 0; ci < c; ++ci) {
            const std::int64_t base = (static_cast<std::int64_t>(ni) * c + ci) * plane;
            const float gm = gamma->val.at(ci), bt = beta->val.at(ci);
            for (std::int64_t i = 0; i < plane; ++i) out.at(base + i) = gm * xhat->at(base + i) + bt;
        }

    return make_node(
        std::move(out), {x, gamma, beta},
        [x, gamma, beta, xhat, sinv, n, c, plane, per_instance, m](Node& self) {
            const int groups = per_instance ? n * c : c;
            if (gamma->requires_grad) gamma->ensure_grad();
            if (beta->requires_grad) beta->ensure_grad();
            if (x->requires_grad) x->ensure_grad();
            for (int g = 0; g < groups; ++g) {
                const int ci = per_instance ? g % c : g;
                // Gather group sums.
                double sum_dy = 0.0, sum_dy_xhat = 0.0;
                auto for_group = [&](auto&& fn) {
                    if (per_instance) {
                        const std::int64_t base = static_cast<std::int64_t>(g) * plane;
                        for (std::int64_t i = 0; i < plane; ++i) fn(base + i);
                    } else {
                        for (int ni = 0; ni < n; ++ni) {
                            const std::int64_t base =
                                (static_cast<std::int64_t>(ni) * c + g) * plane;
                            for (std::int64_t i = 0; i < plane; ++i) fn(base + i);
                        }
                    }
                };
                for_group([&](std::int64_t i) {
                    sum_dy += self.grad.at(i);
                    sum_dy_xhat += static_cast<double>(self.grad.at(i)) * xhat->at(i);
                });
                if (gamma->requires_grad) gamma->grad.at(ci) += static_cast<float>(sum_dy_xhat);
                if (beta->requires_grad) beta->grad.at(ci) += static_cast<float>(sum_dy);
                if (x->requires_grad) {
                    const float gm = gamma->val.at(ci);
                    const float inv = (*sinv)[g];
                    const float mean_dy = static_cast<float>(sum_dy / static_cast<double>(m));
                    const float mean_dy_xhat =
                        static_cast<float>(sum_dy_xhat / static_cast<double>(m));
                    for_group([&](std::int64_t i) {
                        x->grad.at(i) += gm * inv *
                                         (self.grad.at(i) - mean_dy - xhat->at(i) * mean_dy_xhat);
                    });
                }
            }
        });
}

Var norm2d_eval(const Var& x, const Var& gamma, const Var& beta, const Tensor& mean,
                const Tensor& var, float eps) {
    if (x->val.shape.size() != 4) throw ContractViolation("norm2d_eval: 4-D input expected");
    const int n = x->val.dim(0), c = x->val.dim(1);
    const std::int64_t plane = static_cast<std::int64_t>(x->val.dim(2)) * x->val.dim(3);
    auto inv = std::make_shared<std::vector<float>>(c);
    auto mu = std::make_shared<std::vector<float>>(c);
    for (int ci = 0; ci < c; ++ci) {
        (*inv)[ci] = 1.0f / std::sqrt(var.at(ci) + eps);
        (*mu)[ci] = mean.at(ci);
    }
    Tensor out(x->val.shape);
    for (int ni = 0; ni < n; ++ni)
        for (int ci = 0; ci < c; ++ci) {
            const std::int64_t base = (static_cast<std::int64_t>(ni) * c + ci) * plane;
            const float a = gamma->val.at(ci) * (*inv)[ci];
            const float b = beta->val.at(ci) - a * (*mu)[ci];
            for (std::int64_t i = 0; i < plane; ++i) out.at(base + i) = a * x->val.at(base + i) + b;
        }
    return make_node(std::move(out), {x, gamma, beta}, [x, gamma, beta, inv, mu, n, c,
                                                        plane](Node& self) {
        for (int ni = 0; ni < n; ++ni)
            for (int ci = 0; ci < c; ++ci) {
                const std::int64_t base = (static_cast<std::int64_t>(ni) * c + ci) * plane;
                if (x->requires_grad) {
                    x->ensure_grad();
                    const float a = gamma->val.at(ci) * (*inv)[ci];
                    for (std::int64_t i = 0; i < plane; ++i)
                        x->grad.at(base + i) += a * self.grad.at(base + i);
                }
                if (gamma->requires_grad) {
                    gamma->ensure_grad();
                    float acc = 0.0f;
                    for (std::int64_t i = 0; i < plane; ++i)
                        acc += self.grad.at(base + i) * (x->val.at(base + i) - (*mu)[ci]) *
                               (*inv)[ci];
                    gamma->grad.at(ci) += acc;
                }
                if (beta->requires_grad) {
                    beta->ensure_grad();
                    float acc = 0.0f;
                    for (std::int64_t i = 0; i < plane; ++i) acc += self.grad.at(base + i);
                    beta->grad.at(ci) += acc;
                }
            }
    });
}

Var ste_round(const Var& x) {
    Tensor out(x->val.shape);
    for (std::int64_t i = 0; i < out.numel(); ++i) out.at(i) = std::floor(x->val.at(i) + 0.5f);
    return make_node(std::move(out), {x}, [x](Node& self) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (std::int64_t i = 0; i < self.val.numel(); ++i) x->grad.at(i) += self.grad.at(i);
    });
}

Var row_weight_norm(const Var& v, const Var& g) {
    if (v->val.shape.size() != 2) throw ContractViolation("row_weight_norm: 2-D V expected");
    const int rows = v->val.dim(0), cols = v->val.dim(1);
    if (g->val.numel() != rows) throw ContractViolation("row_weight_norm: g size mismatch");
    auto norms = std::make_shared<std::vector<float>>(rows);
    Tensor out(v->val.shape);
    for (int r = 0; r < rows; ++r) {
        double s = 0.0;
        const std::int64_t base = static_cast<std::int64_t>(r) * cols;
        for (int i = 0; i < cols; ++i) s += static_cast<double>(v->val.at(base + i)) * v->val.at(base + i);
        const float nrm = static_cast<float>(std::sqrt(s)) + 1e-12f;
        (*norms)[r] = nrm;
        const float sc = g->val.at(r) / nrm;
        for (int i = 0; i < cols; ++i) out.at(base + i) = sc * v->val.at(base + i);
    }
    return make_node(std::move(out), {v, g}, [v, g, norms, rows, cols](Node& self) {
        for (int r = 0; r < rows; ++r) {
            const std::int64_t base = static_cast<std::int64_t>(r) * cols;
            const float nrm = (*norms)[r];
            double vdw = 0.0;
            for (int i = 0; i < cols; ++i)
                vdw += static_cast<double>(v->val.at(base + i)) * self.grad.at(base + i);
            if (g->requires_grad) {
                g->ensure_grad();
                g->grad.at(r) += static_cast<float>(vdw / nrm);
            }
            if (v->requires_grad) {
                v->ensure_grad();
                const float sc = g->val.at(r) / nrm;
                const float proj = static_cast<float>(vdw) / (nrm * nrm);
                for (int i = 0; i < cols; ++i)
                    v->grad.at(base + i) +=
                        sc * (self.grad.at(base + i) - proj * v->val.at(base + i));
            }
        }
    });
}

}  // namespace mgc::ag
