#include "jscc/autograd.hpp"

#include <Eigen/Core>
#include <cmath>
#include <unordered_set>

namespace jscc {
namespace ag {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

std::shared_ptr<Node> make_node(Tensor value, std::vector<std::shared_ptr<Node>> parents) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->parents = std::move(parents);
    for (const auto& p : n->parents)
        if (p->requires_grad) n->requires_grad = true;
    return n;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (!a.value().same_shape(b.value()))
        throw ConfigError(std::string(op) + ": shape mismatch " + a.value().shape_str() + " vs " +
                          b.value().shape_str());
}

// im2col for (B,C,H,W) into a (C*kh*kw) x (B*OH*OW) row-major matrix.
void im2col(const Tensor& x, size_t kh, size_t kw, size_t stride, size_t pad, size_t oh, size_t ow,
            double* col) {
    const size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const size_t P = oh * ow, BP = B * P;
    const double* xd = x.data();
    for (size_t c = 0; c < C; ++c) {
        for (size_t ki = 0; ki < kh; ++ki) {
            for (size_t kj = 0; kj < kw; ++kj) {
                double* row = col + ((c * kh + ki) * kw + kj) * BP;
                for (size_t b = 0; b < B; ++b) {
                    const double* xb = xd + (b * C + c) * H * W;
                    double* dst = row + b * P;
                    for (size_t oi = 0; oi < oh; ++oi) {
                        const ptrdiff_t ii = static_cast<ptrdiff_t>(oi * stride + ki) -
                                             static_cast<ptrdiff_t>(pad);
                        if (ii < 0 || ii >= static_cast<ptrdiff_t>(H)) {
                            std::fill(dst + oi * ow, dst + (oi + 1) * ow, 0.0);
                            continue;
                        }
                        const double* src = xb + ii * W;
                        for (size_t oj = 0; oj < ow; ++oj) {
                            const ptrdiff_t jj = static_cast<ptrdiff_t>(oj * stride + kj) -
                                                 static_cast<ptrdiff_t>(pad);
                            dst[oi * ow + oj] =
                                (jj < 0 || jj >= static_cast<ptrdiff_t>(W)) ? 0.0 : src[jj];
                        }
                    }
                }
            }
        }
    }
}

// Transpose of im2col: scatter-add a (C*kh*kw) x (B*OH*OW) matrix back into
// input-shaped gradients.
void col2im_add(const double* col, size_t B, size_t C, size_t H, size_t W, size_t kh, size_t kw,
                size_t stride, size_t pad, size_t oh, size_t ow, Tensor& dx) {
    const size_t P = oh * ow, BP = B * P;
    double* xd = dx.data();
    for (size_t c = 0; c < C; ++c) {
        for (size_t ki = 0; ki < kh; ++ki) {
            for (size_t kj = 0; kj < kw; ++kj) {
                const double* row = col + ((c * kh + ki) * kw + kj) * BP;
                for (size_t b = 0; b < B; ++b) {
                    double* xb = xd + (b * C + c) * H * W;
                    const double* src = row + b * P;
                    for (size_t oi = 0; oi < oh; ++oi) {
                        const ptrdiff_t ii = static_cast<ptrdiff_t>(oi * stride + ki) -
                                             static_cast<ptrdiff_t>(pad);
                        if (ii < 0 || ii >= static_cast<ptrdiff_t>(H)) continue;
                        for (size_t oj = 0; oj < ow; ++oj) {
                            const ptrdiff_t jj = static_cast<ptrdiff_t>(oj * stride + kj) -
                                                 static_cast<ptrdiff_t>(pad);
                            if (jj < 0 || jj >= static_cast<ptrdiff_t>(W)) continue;
                            xb[ii * W + jj] += src[oi * ow + oj];
                        }
                    }
                }
            }
        }
    }
}

}  // namespace

void Var::backward() const {
    Node* root = n_.get();
    if (!root) throw ConfigError("backward: undefined Var");
    if (root->value.size() != 1) throw ConfigError("backward: root must be a scalar");
    if (!root->requires_grad) throw ConfigError("backward: root does not depend on any parameter");

    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.push_back({root, 0});
    visited.insert(root);
    while (!stack.empty()) {
        Node* node = stack.back().first;
        const size_t i = stack.back().second;
        if (i < node->parents.size()) {
            ++stack.back().second;
            Node* p = node->parents[i].get();
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
    root->grad.fill(0.0);
    root->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backward_fn) (*it)->backward_fn();
}

Var add(const Var& a, const Var& b) { return axpy(a, b, 1.0, 1.0); }

Var axpy(const Var& a, const Var& b, double ca, double cb) {
    check_same_shape(a, b, "axpy");
    Tensor v(a.value().shape());
    const size_t n = v.size();
    for (size_t i = 0; i < n; ++i) v[i] = ca * a.value()[i] + cb * b.value()[i];
    auto node = make_node(std::move(v), {a.node(), b.node()});
    if (node->requires_grad) {
        Node* self = node.get();
        Node* pa = a.node().get();
        Node* pb = b.node().get();
        node->backward_fn = [self, pa, pb, ca, cb, n]() {
            if (pa->requires_grad) {
                double* g = pa->ensure_grad().data();
                for (size_t i = 0; i < n; ++i) g[i] += ca * self->grad[i];
            }
            if (pb->requires_grad) {
                double* g = pb->ensure_grad().data();
                for (size_t i = 0; i < n; ++i) g[i] += cb * self->grad[i];
            }
        };
    }
    return Var::from_node(node);
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    Tensor v(a.value().shape());
    const size_t n = v.size();
    for (size_t i = 0; i < n; ++i) v[i] = a.value()[i] * b.value()[i];
    auto node = make_node(std::move(v), {a.node(), b.node()});
    if (node->requires_grad) {
        Node* self = node.get();
        Node* pa = a.node().get();
        Node* pb = b.node().get();
        node->backward_fn = [self, pa, pb, n]() {
            if (pa->requires_grad) {
                double* g = pa->ensure_grad().data();
                for (size_t i = 0; i < n; ++i) g[i] += self->grad[i] * pb->value[i];
            }
            if (pb->requires_grad) {
                double* g = pb->ensure_grad().data();
                for (size_t i = 0; i < n; ++i) g[i] += self->grad[i] * pa->value[i];
            }
        };
    }
    return Var::from_node(node);
}

Var mul_scalar(const Var& a, double s) {
    Tensor v(a.value().shape());
    const size_t n = v.size();
    for (size_t i = 0; i < n; ++i) v[i] = s * a.value()[i];
    auto node = make_node(std::move(v), {a.node()});
    if (node->requires_grad) {
        Node* self = node.get();
        Node* pa = a.node().get();
        node->backward_fn = [self, pa, s, n]() {
            double* g = pa->ensure_grad().data();
            for (size_t i = 0; i < n; ++i) g[i] += s * self->grad[i];
        };
    }
    return Var::from_node(node);
}

Var pow_shift(const Var& a, double p, double shift) {
    Tensor v(a.value().shape());
    const size_t n = v.size();
    for (size_t i = 0; i < n; ++i) {
        const double base = a.value()[i] + shift;
        if (!(base > 0.0)) throw DomainError("pow_shift: non-positive base");
        v[i] = std::pow(base, p);
    }
    auto node = make_node(std::move(v), {a.node()});
    if (node->requires_grad) {
        Node* self = node.get();
        Node* pa = a.node().get();
        node->backward_fn = [self, pa, p, shift, n]() {
            double* g = pa->ensure_grad().data();
            for (size_t i = 0; i < n; ++i)
                g[i] += self->grad[i] * p * self->value[i] / (pa->value[i] + shift);
        };
    }
    return Var::from_node(node);
}

Var sigmoid(const Var& a) {
    Tensor v(a.value().shape());
    const size_t n = v.size();
    for (size_t i = 0; i < n; ++i) v[i] = 1.0 / (1.0 + std::exp(-a.value()[i]));
    auto node = make_node(std::move(v), {a.node()});
    if (node->requires_grad) {
        Node* self = node.get();
        Node* pa = a.node().get();
        node->backward_fn = [self, pa, n]() {
            double* g = pa->ensure_grad().data();
            for (size_t i = 0; i < n; ++i) {
                const double y = self->value[i];
                g[i] += self->grad[i] * y * (1.0 - y);
            }
        };
    }
    return Var::from_node(node);
}

Var relu(const Var& a) {
    Tensor v(a.value().shape());
    const size_t n = v.size();
    for (size_t i = 0; i < n; ++i) v[i] = a.value()[i] > 0.0 ? a.value()[i] : 0.0;
    auto node = make_node(std::move(v), {a.node()});
    if (node->requires_grad) {
        Node* self = node.get();
        Node* pa = a.node().get();
        node->backward_fn = [self, pa, n]() {
            double* g = pa->ensure_grad().data();
            for (size_t i = 0; i < n; ++i)
                if (pa->value[i] > 0.0) g[i] += self->grad[i];
        };
    }
    return Var::from_node(node);
}

Var prelu(const Var& x, const Var& slope) {
    if (x.value().rank() != 4 || slope.value().rank() != 1 ||
        slope.value().dim(0) != x.value().dim(1))
        throw ConfigError("prelu: expects (B,C,H,W) and per-channel slope (C)");
    const size_t B = x.value().dim(0), C = x.value().dim(1);
    const size_t HW = x.value().dim(2) * x.value().dim(3);
    Tensor v(x.value().shape());
    for (size_t b = 0; b < B; ++b)
        for (size_t c = 0; c < C; ++c) {
            const double a = slope.value()[c];
            const double* xs = x.value().data() + (b * C + c) * HW;
            double* vs = v.data() + (b * C + c) * HW;
            for (size_t i = 0; i < HW; ++i) vs[i] = xs[i] > 0.0 ? xs[i] : a * xs[i];
        }
    auto node = make_node(std::move(v), {x.node(), slope.node()});
    if (node->requires_grad) {
        Node* self = node.get();
        Node* px = x.node().get();
        Node* ps = slope.node().get();
        node->backward_fn = [self, px, ps, B, C, HW]() {
            for (size_t b = 0; b < B; ++b)
                for (size_t c = 0; c < C; ++c) {
                    const double a = ps->value[c];
                    const size_t off = (b * C + c) * HW;
                    const double* g = self->grad.data() + off;
                    const double* xv = px->value.data() + off;
                    if (px->requires_grad) {
                        double* gx = px->ensure_grad().data() + off;
                        for (size_t i = 0; i < HW; ++i) gx[i] += g[i] * (xv[i] > 0.0 ? 1.0 : a);
                    }
                    if (ps->requires_grad) {
                        double acc = 0.0;
                        for (size_t i = 0; i < HW; ++i)
                            if (xv[i] <= 0.0) acc += g[i] * xv[i];
                        ps->ensure_grad()[c] += acc;
                    }
                }
        };
    }
    return Var::from_node(node);
}

Var reshape(const Var& a, std::vector<size_t> shape) {
    Tensor v = a.value().reshaped(std::move(shape));
    auto node = make_node(std::move(v), {a.node()});
    if (node->requires_grad) {
        Node* self = node.get();
        Node* pa = a.node().get();
        node->backward_fn = [self, pa]() {
            double* g = pa->ensure_grad().data();
            const size_t n = pa->value.size();
            for (size_t i = 0; i < n; ++i) g[i] += self->grad[i];
        };
    }
    return Var::from_node(node);
}

Var concat_channels(const Var& a, const Var& b) {
    const Tensor& ta = a.value();
    const Tensor& tb = b.value();
    if (ta.rank() != 4 || tb.rank() != 4 || ta.dim(0) != tb.dim(0) || ta.dim(2) != tb.dim(2) ||
        ta.dim(3) != tb.dim(3))
        throw ConfigError("concat_channels: incompatible shapes");
    const size_t B = ta.dim(0), C1 = ta.dim(1), C2 = tb.dim(1), HW = ta.dim(2) * ta.dim(3);
    Tensor v({B, C1 + C2, ta.dim(2), ta.dim(3)});
    for (size_t bi = 0; bi < B; ++bi) {
        std::copy_n(ta.data() + bi * C1 * HW, C1 * HW, v.data() + bi * (C1 + C2) * HW);
        std::copy_n(tb.data() + bi * C2 * HW, C2 * HW, v.data() + bi * (C1 + C2) * HW + C1 * HW);
    }
    auto node = make_node(std::move(v), {a.node(), b.node()});
    if (node->requires_grad) {
        Node* self = node.get();
        Node* pa = a.node().get();
        Node* pb = b.node().get();
        node->backward_fn = [self, pa, pb, B, C1, C2, HW]() {
            for (size_t bi = 0; bi < B; ++bi) {
                const double* g = self->grad.data() + bi * (C1 + C2) * HW;
                if (pa->requires_grad) {
                    double* ga = pa->ensure_grad().data() + bi * C1 * HW;
                    for (size_t i = 0; i < C1 * HW; ++i) ga[i] += g[i];
                }
                if (pb->requires_grad) {
                    double* gb = pb->ensure_grad().data() + bi * C2 * HW;
                    for (size_t i = 0; i < C2 * HW; ++i) gb[i] += g[C1 * HW + i];
                }
            }
        };
    }
    return Var::from_node(node);
}

Var concat_cols(const Var& a, const Var& b) {
    const Tensor& ta = a.value();
    const Tensor& tb = b.value();
    if (ta.rank() != 2 || tb.rank() != 2 || ta.dim(0) != tb.dim(0))
        throw ConfigError("concat_cols: incompatible shapes");
    const size_t B = ta.dim(0), M = ta.dim(1), N = tb.dim(1);
    Tensor v({B, M + N});
    for (size_t bi = 0; bi < B; ++bi) {
        std::copy_n(ta.data() + bi * M, M, v.data() + bi * (M + N));
        std::copy_n(tb.data() + bi * N, N, v.data() + bi * (M + N) + M);
    }
    auto node = make_node(std::move(v), {a.node(), b.node()});
    if (node->requires_grad) {
        Node* self = node.get();
        Node* pa = a.node().get();
        Node* pb = b.node().get();
        node->backward_fn = [self, pa, pb, B, M, N]() {
            for (size_t bi = 0; bi < B; ++bi) {
                const double* g = self->grad.data() + bi * (M + N);
                if (pa->requires_grad) {
                    double* ga = pa->ensure_grad().data() + bi * M;
                    for (size_t i = 0; i < M; ++i) ga[i] += g[i];
                }
                if (pb->requires_grad) {
                    double* gb = pb->ensure_grad().data() + bi * N;
                    for (size_t i = 0; i < N; ++i) gb[i] += g[M + i];
                }
            }
        };
    }
    return Var::from_node(node);
}

Var pixel_shuffle(const Var& x, size_t r) {
    const Tensor& t = x.value();
    if (t.rank() != 4 || t.dim(1) % (r * r) != 0)
        throw ConfigError("pixel_shuffle: channel count must be divisible by r^2");
    const size_t B = t.dim(0), C = t.dim(1) / (r * r), H = t.dim(2), W = t.dim(3);
    Tensor v({B, C, H * r, W * r});
    for (size_t b = 0; b < B; ++b)
        for (size_t c = 0; c < C; ++c)
            for (size_t dr = 0; dr < r; ++dr)
                for (size_t dc = 0; dc < r; ++dc) {
                    const double* src = t.data() + ((b * C * r * r + c * r * r + dr * r + dc) * H) * W;
                    for (size_t h = 0; h < H; ++h) {
                        double* dst = v.data() + ((b * C + c) * H * r + h * r + dr) * W * r + dc;
                        for (size_t w = 0; w < W; ++w) dst[w * r] = src[h * W + w];
                    }
                }
    auto node = make_node(std::move(v), {x.node()});
    if (node->requires_grad) {
        Node* self = node.get();
        Node* px = x.node().get();
        node->backward_fn = [self, px, B, C, H, W, r]() {
            double* gx = px->ensure_grad().data();
            for (size_t b = 0; b < B; ++b)
                for (size_t c = 0; c < C; ++c)
                    for (size_t dr = 0; dr < r; ++dr)
                        for (size_t dc = 0; dc < r; ++dc) {
                            double* dst = gx + ((b * C * r * r + c * r * r + dr * r + dc) * H) * W;
                            for (size_t h = 0; h < H; ++h) {
                                const double* src = self->grad.data() +
                                                    ((b * C + c) * H * r + h * r + dr) * W * r + dc;
                                for (size_t w = 0; w < W; ++w) dst[h * W + w] += src[w * r];
                            }
                        }
        };
    }
    return Var::from_node(node);
}

Var dense(const Var& x, const Var& w, const Var& bias) {
    const Tensor& tx = x.value();
    const Tensor& tw = w.value();
    if (tx.rank() != 2 || tw.rank() != 2 || tx.dim(1) != tw.dim(1) ||
        bias.value().size() != tw.dim(0))
        throw ConfigError("dense: incompatible shapes");
    const size_t B = tx.dim(0), M = tx.dim(1), N = tw.dim(0);
    Tensor v({B, N});
    {
        CMapRM xm(tx.data(), B, M);
        CMapRM wm(tw.data(), N, M);
        MapRM vm(v.data(), B, N);
        vm.noalias() = xm * wm.transpose();
        for (size_t b = 0; b < B; ++b)
            for (size_t j = 0; j < N; ++j) v.at2(b, j) += bias.value()[j];
    }
    auto node = make_node(std::move(v), {x.node(), w.node(), bias.node()});
    if (node->requires_grad) {
        Node* self = node.get();
        Node* px = x.node().get();
        Node* pw = w.node().get();
        Node* pb = bias.node().get();
        node->backward_fn = [self, px, pw, pb, B, M, N]() {
            CMapRM gm(self->grad.data(), B, N);
            if (px->requires_grad) {
                CMapRM wm(pw->value.data(), N, M);
                MapRM gxm(px->ensure_grad().data(), B, M);
                gxm.noalias() += gm * wm;
            }
            if (pw->requires_grad) {
                CMapRM xm(px->value.data(), B, M);
                MapRM gwm(pw->ensure_grad().data(), N, M);
                gwm.noalias() += gm.transpose() * xm;
            }
            if (pb->requires_grad) {
                double* gb = pb->ensure_grad().data();
                for (size_t b = 0; b < B; ++b)
                    for (size_t j = 0; j < N; ++j) gb[j] += self->grad.at2(b, j);
            }
        };
    }
    return Var::from_node(node);
}

Var conv2d(const Var& x, const Var& w, const Var& bias, size_t stride, size_t pad) {
    const Tensor& tx = x.value();
    const Tensor& tw = w.value();
    if (tx.rank() != 4 || tw.rank() != 4 || tx.dim(1) != tw.dim(1) ||
        bias.value().size() != tw.dim(0))
        throw ConfigError("conv2d: incompatible shapes");
    const size_t B = tx.dim(0), C = tx.dim(1), H = tx.dim(2), W = tx.dim(3);
    const size_t O = tw.dim(0), kh = tw.dim(2), kw = tw.dim(3);
    if (H + 2 * pad < kh || W + 2 * pad < kw) throw ConfigError("conv2d: kernel larger than input");
    const size_t oh = (H + 2 * pad - kh) / stride + 1;
    const size_t ow = (W + 2 * pad - kw) / stride + 1;
    const size_t K = C * kh * kw, P = oh * ow, BP = B * P;

    Tensor v({B, O, oh, ow});
    {
        MatRM col(K, BP);
        im2col(tx, kh, kw, stride, pad, oh, ow, col.data());
        CMapRM wm(tw.data(), O, K);
        MatRM y(O, BP);
        y.noalias() = wm * col;
        for (size_t b = 0; b < B; ++b)
            for (size_t o = 0; o < O; ++o) {
                const double* src = y.data() + o * BP + b * P;
                double* dst = v.data() + (b * O + o) * P;
                const double bv = bias.value()[o];
                for (size_t p = 0; p < P; ++p) dst[p] = src[p] + bv;
            }
    }
    auto node = make_node(std::move(v), {x.node(), w.node(), bias.node()});
    if (node->requires_grad) {
        Node* self = node.get();
        Node* px = x.node().get();
        Node* pw = w.node().get();
        Node* pb = bias.node().get();
        node->backward_fn = [self, px, pw, pb, B, C, H, W, O, kh, kw, stride, pad, oh, ow, K, P,
                             BP]() {
            // Gather dY into (O x B*P).
            MatRM gy(O, BP);
            for (size_t b = 0; b < B; ++b)
                for (size_t o = 0; o < O; ++o)
                    std::copy_n(self->grad.data() + (b * O + o) * P, P, gy.data() + o * BP + b * P);
            if (pb->requires_grad) {
                double* gb = pb->ensure_grad().data();
                for (size_t o = 0; o < O; ++o) {
                    double acc = 0.0;
                    const double* row = gy.data() + o * BP;
                    for (size_t i = 0; i < BP; ++i) acc += row[i];
                    gb[o] += acc;
                }
            }
            const bool need_w = pw->requires_grad;
            const bool need_x = px->requires_grad;
            if (!need_w && !need_x) return;
            MatRM col(K, BP);
            im2col(px->value, kh, kw, stride, pad, oh, ow, col.data());
            if (need_w) {
                MapRM gwm(pw->ensure_grad().data(), O, K);
                gwm.noalias() += gy * col.transpose();
            }
            if (need_x) {
                CMapRM wm(pw->value.data(), O, K);
                MatRM gcol(K, BP);
                gcol.noalias() = wm.transpose() * gy;
                col2im_add(gcol.data(), B, C, H, W, kh, kw, stride, pad, oh, ow, px->ensure_grad());
            }
        };
    }
    return Var::from_node(node);
}

Var global_avg_pool(const Var& x) {
    const Tensor& t = x.value();
    if (t.rank() != 4) throw ConfigError("global_avg_pool: expects (B,C,H,W)");
    const size_t B = t.dim(0), C = t.dim(1), HW = t.dim(2) * t.dim(3);
    Tensor v({B, C});
    for (size_t b = 0; b < B; ++b)
        for (size_t c = 0; c < C; ++c) {
            const double* src = t.data() + (b * C + c) * HW;
            double acc = 0.0;
            for (size_t i = 0; i < HW; ++i) acc += src[i];
            v.at2(b, c) = acc / static_cast<double>(HW);
        }
    auto node = make_node(std::move(v), {x.node()});
    if (node->requires_grad) {
        Node* self = node.get();
        Node* px = x.node().get();
        node->backward_fn = [self, px, B, C, HW]() {
            double* gx = px->ensure_grad().data();
            for (size_t b = 0; b < B; ++b)
                for (size_t c = 0; c < C; ++c) {
                    const double g = self->grad.at2(b, c) / static_cast<double>(HW);
                    double* dst = gx + (b * C + c) * HW;
                    for (size_t i = 0; i < HW; ++i) dst[i] += g;
                }
        };
    }
    return Var::from_node(node);
}

Var scale_channels(const Var& x, const Var& g) {
    const Tensor& tx = x.value();
    const Tensor& tg = g.value();
    if (tx.rank() != 4 || tg.rank() != 2 || tg.dim(0) != tx.dim(0) || tg.dim(1) != tx.dim(1))
        throw ConfigError("scale_channels: gates must be (B,C)");
    const size_t B = tx.dim(0), C = tx.dim(1), HW = tx.dim(2) * tx.dim(3);
    Tensor v(tx.shape());
    for (size_t b = 0; b < B; ++b)
        for (size_t c = 0; c < C; ++c) {
            const double gv = tg.at2(b, c);
            const double* src = tx.data() + (b * C + c) * HW;
            double* dst = v.data() + (b * C + c) * HW;
            for (size_t i = 0; i < HW; ++i) dst[i] = gv * src[i];
        }
    auto node = make_node(std::move(v), {x.node(), g.node()});
    if (node->requires_grad) {
        Node* self = node.get();
        Node* px = x.node().get();
        Node* pg = g.node().get();
        node->backward_fn = [self, px, pg, B, C, HW]() {
            for (size_t b = 0; b < B; ++b)
                for (size_t c = 0; c < C; ++c) {
                    const size_t off = (b * C + c) * HW;
                    const double* gout = self->grad.data() + off;
                    if (px->requires_grad) {
                        const double gv = pg->value.at2(b, c);
                        double* gx = px->ensure_grad().data() + off;
                        for (size_t i = 0; i < HW; ++i) gx[i] += gv * gout[i];
                    }
                    if (pg->requires_grad) {
                        const double* xv = px->value.data() + off;
                        double acc = 0.0;
                        for (size_t i = 0; i < HW; ++i) acc += gout[i] * xv[i];
                        pg->ensure_grad().at2(b, c) += acc;
                    }
                }
        };
    }
    return Var::from_node(node);
}

Var power_normalize_rows(const Var& x, double target_sq) {
    const Tensor& t = x.value();
    if (t.rank() != 2) throw ConfigError("power_normalize_rows: expects (B,M)");
    const size_t B = t.dim(0), M = t.dim(1);
    Tensor v(t.shape());
    std::vector<double> psum(B), scale(B);
    for (size_t b = 0; b < B; ++b) {
        const double* src = t.data() + b * M;
        double p = 0.0;
        for (size_t i = 0; i < M; ++i) p += src[i] * src[i];
        if (p == 0.0) throw DomainError("power_normalize_rows: degenerate all-zero codeword");
        psum[b] = p;
        scale[b] = std::sqrt(target_sq / p);
        double* dst = v.data() + b * M;
        for (size_t i = 0; i < M; ++i) dst[i] = src[i] * scale[b];
    }
    auto node = make_node(std::move(v), {x.node()});
    if (node->requires_grad) {
        Node* self = node.get();
        Node* px = x.node().get();
        node->backward_fn = [self, px, B, M, psum, scale]() {
            double* gx = px->ensure_grad().data();
            for (size_t b = 0; b < B; ++b) {
                const double* g = self->grad.data() + b * M;
                const double* xv = px->value.data() + b * M;
                double dot = 0.0;
                for (size_t i = 0; i < M; ++i) dot += g[i] * xv[i];
                const double s = scale[b], corr = dot / psum[b];
                double* dst = gx + b * M;
                for (size_t i = 0; i < M; ++i) dst[i] += s * (g[i] - xv[i] * corr);
            }
        };
    }
    return Var::from_node(node);
}

Var mse(const Var& a, const Var& b) {
    check_same_shape(a, b, "mse");
    const size_t n = a.value().size();
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double d = a.value()[i] - b.value()[i];
        acc += d * d;
    }
    Tensor v = Tensor::scalar(acc / static_cast<double>(n));
    auto node = make_node(std::move(v), {a.node(), b.node()});
    if (node->requires_grad) {
        Node* self = node.get();
        Node* pa = a.node().get();
        Node* pb = b.node().get();
        node->backward_fn = [self, pa, pb, n]() {
            const double g = self->grad[0] * 2.0 / static_cast<double>(n);
            if (pa->requires_grad) {
                double* ga = pa->ensure_grad().data();
                for (size_t i = 0; i < n; ++i) ga[i] += g * (pa->value[i] - pb->value[i]);
            }
            if (pb->requires_grad) {
                double* gb = pb->ensure_grad().data();
                for (size_t i = 0; i < n; ++i) gb[i] -= g * (pa->value[i] - pb->value[i]);
            }
        };
    }
    return Var::from_node(node);
}

Var mean_all(const Var& a) {
    const size_t n = a.value().size();
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) acc += a.value()[i];
    auto node = make_node(Tensor::scalar(acc / static_cast<double>(n)), {a.node()});
    if (node->requires_grad) {
        Node* self = node.get();
        Node* pa = a.node().get();
        node->backward_fn = [self, pa, n]() {
            const double g = self->grad[0] / static_cast<double>(n);
            double* ga = pa->ensure_grad().data();
            for (size_t i = 0; i < n; ++i) ga[i] += g;
        };
    }
    return Var::from_node(node);
}

}  // namespace ag
}  // namespace jscc
