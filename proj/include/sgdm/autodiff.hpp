#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "sgdm/common.hpp"
#include "sgdm/tensor.hpp"

// Reverse-mode tape over dense double tensors. Conv and matmul backward
// passes accumulate item-by-item in a fixed order with parallelism only
// inside single-writer gemm rows, so results are bit-identical across runs
// regardless of thread count.

namespace sgdm::ad {

// C[M,N] (+)= A[M,K] * B[N,K]^T
inline void gemm_nt(int64_t M, int64_t N, int64_t K, const double* A, const double* B, double* C,
                    bool accumulate = false) {
    if (!accumulate) std::fill(C, C + M * N, 0.0);
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < M; ++i) {
        for (int64_t j = 0; j < N; ++j) {
            double s = 0;
            const double* a = A + i * K;
            const double* b = B + j * K;
            for (int64_t k = 0; k < K; ++k) s += a[k] * b[k];
            C[i * N + j] += s;
        }
    }
}

// C[K,N] (+)= A[R,K]^T * B[R,N]
inline void gemm_tn(int64_t K, int64_t N, int64_t R, const double* A, const double* B, double* C,
                    bool accumulate = false) {
    if (!accumulate) std::fill(C, C + K * N, 0.0);
#pragma omp parallel for schedule(static)
    for (int64_t k = 0; k < K; ++k) {
        for (int64_t r = 0; r < R; ++r) {
            double a = A[r * K + k];
            if (a == 0.0) continue;
            const double* b = B + r * N;
            double* c = C + k * N;
            for (int64_t j = 0; j < N; ++j) c[j] += a * b[j];
        }
    }
}

struct Param {
    Tensor value;
    Tensor grad;
    Tensor m, v;  // Adam moments
};

// Named parameters with deterministic iteration order (std::map).
struct ParamStore {
    std::map<std::string, Param> params;
    int64_t step = 0;

    Param& add(const std::string& name, Tensor init) {
        auto& p = params[name];
        p.value = std::move(init);
        p.grad = Tensor(p.value.shape);
        p.m = Tensor(p.value.shape);
        p.v = Tensor(p.value.shape);
        return p;
    }
    Param& get(const std::string& name) {
        auto it = params.find(name);
        if (it == params.end()) fail_state("unknown parameter: " + name);
        return it->second;
    }
    const Param& get(const std::string& name) const {
        auto it = params.find(name);
        if (it == params.end()) fail_state("unknown parameter: " + name);
        return it->second;
    }
    bool has(const std::string& name) const { return params.count(name) != 0; }

    void zero_grad() {
        for (auto& [k, p] : params) std::fill(p.grad.v.begin(), p.grad.v.end(), 0.0);
    }
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// One Adam step over every parameter whose name passes `trainable`.
inline void adam_step(ParamStore& store, const AdamConfig& cfg,
                      const std::function<bool(const std::string&)>& trainable = nullptr) {
    store.step += 1;
    double b1t = 1.0 - std::pow(cfg.beta1, double(store.step));
    double b2t = 1.0 - std::pow(cfg.beta2, double(store.step));
    for (auto& [name, p] : store.params) {
        if (trainable && !trainable(name)) continue;
        for (size_t i = 0; i < p.value.v.size(); ++i) {
            double g = p.grad.v[i];
            p.m.v[i] = cfg.beta1 * p.m.v[i] + (1 - cfg.beta1) * g;
            p.v.v[i] = cfg.beta2 * p.v.v[i] + (1 - cfg.beta2) * g * g;
            double mh = p.m.v[i] / b1t;
            double vh = p.v.v[i] / b2t;
            p.value.v[i] -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
        }
    }
}

class Tape;

struct Var {
    int id = -1;
    Tape* tape = nullptr;
    bool valid() const { return id >= 0; }
};

struct Node {
    Tensor value;
    Tensor grad;
    std::function<void()> backward;  // empty for leaves
};

class Tape {
public:
    std::vector<Node> nodes;

    const Tensor& val(Var v) const { return nodes[size_t(v.id)].value; }
    const Tensor& grad(Var v) const { return nodes[size_t(v.id)].grad; }
    Tensor& grad_mut(Var v) { return nodes[size_t(v.id)].grad; }

    Var input(Tensor t) {
        nodes.push_back(Node{std::move(t), {}, {}});
        return Var{int(nodes.size()) - 1, this};
    }

    Var param(Param& p) {
        Var v = input(p.value);
        param_links_.emplace_back(v.id, &p);
        return v;
    }

    // ---- elementwise / shape ----

    Var add(Var a, Var b) {
        require(val(a).same_shape(val(b)), "add: shape mismatch");
        Tensor out = val(a);
        const auto& bv = val(b).v;
        for (size_t i = 0; i < out.v.size(); ++i) out.v[i] += bv[i];
        return make(std::move(out), [this, a, b](Node& n) {
            axpy(grad_mut(a).v, n.grad.v, 1.0);
            axpy(grad_mut(b).v, n.grad.v, 1.0);
        });
    }

    Var sub(Var a, Var b) {
        require(val(a).same_shape(val(b)), "sub: shape mismatch");
        Tensor out = val(a);
        const auto& bv = val(b).v;
        for (size_t i = 0; i < out.v.size(); ++i) out.v[i] -= bv[i];
        return make(std::move(out), [this, a, b](Node& n) {
            axpy(grad_mut(a).v, n.grad.v, 1.0);
            axpy(grad_mut(b).v, n.grad.v, -1.0);
        });
    }

    Var mul(Var a, Var b) {
        require(val(a).same_shape(val(b)), "mul: shape mismatch");
        Tensor out = val(a);
        const auto& bv = val(b).v;
        for (size_t i = 0; i < out.v.size(); ++i) out.v[i] *= bv[i];
        return make(std::move(out), [this, a, b](Node& n) {
            auto& ga = grad_mut(a).v;
            auto& gb = grad_mut(b).v;
            const auto& av = val(a).v;
            const auto& bv2 = val(b).v;
            for (size_t i = 0; i < n.grad.v.size(); ++i) {
                ga[i] += n.grad.v[i] * bv2[i];
                gb[i] += n.grad.v[i] * av[i];
            }
        });
    }

    Var scale(Var a, double c) {
        Tensor out = val(a);
        for (auto& x : out.v) x *= c;
        return make(std::move(out), [this, a, c](Node& n) { axpy(grad_mut(a).v, n.grad.v, c); });
    }

    Var add_scalar(Var a, double c) {
        Tensor out = val(a);
        for (auto& x : out.v) x += c;
        return make(std::move(out), [this, a](Node& n) { axpy(grad_mut(a).v, n.grad.v, 1.0); });
    }

    // bias broadcast over the last axis
    Var add_bias(Var x, Var b) {
        const auto& xs = val(x);
        const auto& bs = val(b);
        int64_t n = bs.numel();
        require(xs.shape.back() == n, "add_bias: last dim mismatch");
        Tensor out = xs;
        for (int64_t r = 0; r < out.numel() / n; ++r)
            for (int64_t j = 0; j < n; ++j) out.v[size_t(r * n + j)] += bs.v[size_t(j)];
        return make(std::move(out), [this, x, b, n](Node& nd) {
            axpy(grad_mut(x).v, nd.grad.v, 1.0);
            auto& gb = grad_mut(b).v;
            for (int64_t r = 0; r < int64_t(nd.grad.v.size()) / n; ++r)
                for (int64_t j = 0; j < n; ++j) gb[size_t(j)] += nd.grad.v[size_t(r * n + j)];
        });
    }

    // x[B, rest...] += p[rest...] (broadcast over the leading axis)
    Var add_bcast_leading(Var x, Var p) {
        const auto& xs = val(x);
        const auto& ps = val(p);
        int64_t inner = ps.numel();
        require(xs.numel() % inner == 0 &&
                    std::equal(ps.shape.begin(), ps.shape.end(), xs.shape.end() - ps.rank()),
                "add_bcast_leading: trailing dims mismatch");
        Tensor out = xs;
        int64_t reps = xs.numel() / inner;
        for (int64_t r = 0; r < reps; ++r)
            for (int64_t j = 0; j < inner; ++j) out.v[size_t(r * inner + j)] += ps.v[size_t(j)];
        return make(std::move(out), [this, x, p, inner](Node& nd) {
            axpy(grad_mut(x).v, nd.grad.v, 1.0);
            auto& gp = grad_mut(p).v;
            int64_t reps = int64_t(nd.grad.v.size()) / inner;
            for (int64_t r = 0; r < reps; ++r)
                for (int64_t j = 0; j < inner; ++j) gp[size_t(j)] += nd.grad.v[size_t(r * inner + j)];
        });
    }

    // x[B,C,H,W] += v[B,C] broadcast over spatial dims
    Var add_bcast_spatial(Var x, Var b) {
        const auto& xs = val(x);
        const auto& bs = val(b);
        require(xs.rank() == 4 && bs.rank() == 2 && xs.dim(0) == bs.dim(0) && xs.dim(1) == bs.dim(1),
                "add_bcast_spatial: shape mismatch");
        int64_t hw = xs.dim(2) * xs.dim(3);
        Tensor out = xs;
        for (int64_t bc = 0; bc < bs.numel(); ++bc)
            for (int64_t i = 0; i < hw; ++i) out.v[size_t(bc * hw + i)] += bs.v[size_t(bc)];
        return make(std::move(out), [this, x, b, hw](Node& nd) {
            axpy(grad_mut(x).v, nd.grad.v, 1.0);
            auto& gb = grad_mut(b).v;
            for (int64_t bc = 0; bc < int64_t(gb.size()); ++bc) {
                double s = 0;
                for (int64_t i = 0; i < hw; ++i) s += nd.grad.v[size_t(bc * hw + i)];
                gb[size_t(bc)] += s;
            }
        });
    }

    Var reshape(Var a, std::vector<int64_t> shape) {
        Tensor out = val(a).reshaped(std::move(shape));
        return make(std::move(out), [this, a](Node& n) { axpy(grad_mut(a).v, n.grad.v, 1.0); });
    }

    Var concat_last(const std::vector<Var>& parts) {
        require(!parts.empty(), "concat_last: empty");
        const auto& first = val(parts[0]);
        int64_t rows = first.numel() / first.shape.back();
        int64_t total = 0;
        for (auto pv : parts) {
            const auto& t = val(pv);
            require(t.numel() / t.shape.back() == rows, "concat_last: row mismatch");
            total += t.shape.back();
        }
        std::vector<int64_t> shape = first.shape;
        shape.back() = total;
        Tensor out(shape);
        int64_t off = 0;
        for (auto pv : parts) {
            const auto& t = val(pv);
            int64_t w = t.shape.back();
            for (int64_t r = 0; r < rows; ++r)
                std::copy_n(&t.v[size_t(r * w)], size_t(w), &out.v[size_t(r * total + off)]);
            off += w;
        }
        auto ps = parts;
        return make(std::move(out), [this, ps, rows, total](Node& n) {
            int64_t off2 = 0;
            for (auto pv : ps) {
                auto& g = grad_mut(pv);
                int64_t w = g.shape.back();
                for (int64_t r = 0; r < rows; ++r)
                    for (int64_t j = 0; j < w; ++j)
                        g.v[size_t(r * w + j)] += n.grad.v[size_t(r * total + off2 + j)];
                off2 += w;
            }
        });
    }

    // channel slice of [B,C,H,W]
    Var slice_chan(Var x, int64_t c0, int64_t c1) {
        const auto& xs = val(x);
        require(xs.rank() == 4 && 0 <= c0 && c0 < c1 && c1 <= xs.dim(1), "slice_chan: bad range");
        int64_t B = xs.dim(0), C = xs.dim(1), HW = xs.dim(2) * xs.dim(3);
        Tensor out({B, c1 - c0, xs.dim(2), xs.dim(3)});
        for (int64_t b = 0; b < B; ++b)
            std::copy_n(&xs.v[size_t((b * C + c0) * HW)], size_t((c1 - c0) * HW),
                        &out.v[size_t(b * (c1 - c0) * HW)]);
        return make(std::move(out), [this, x, c0, c1, HW](Node& n) {
            auto& g = grad_mut(x);
            int64_t B = g.dim(0), C = g.dim(1);
            for (int64_t b = 0; b < B; ++b)
                for (int64_t i = 0; i < (c1 - c0) * HW; ++i)
                    g.v[size_t((b * C + c0) * HW + i)] += n.grad.v[size_t(b * (c1 - c0) * HW + i)];
        });
    }

    // multiply a tensor by a scalar-valued variable ([1] tensor)
    Var scale_by(Var x, Var s) {
        require(val(s).numel() == 1, "scale_by: scalar variable required");
        double c = val(s).v[0];
        Tensor out = val(x);
        for (auto& v : out.v) v *= c;
        return make(std::move(out), [this, x, s](Node& n) {
            double c2 = val(s).v[0];
            auto& gx = grad_mut(x).v;
            auto& gs = grad_mut(s).v;
            const auto& xv = val(x).v;
            double acc = 0;
            for (size_t i = 0; i < n.grad.v.size(); ++i) {
                gx[i] += c2 * n.grad.v[i];
                acc += xv[i] * n.grad.v[i];
            }
            gs[0] += acc;
        });
    }

    // column slice over the last axis
    Var slice_last(Var x, int64_t c0, int64_t c1) {
        const auto& xs = val(x);
        int64_t d = xs.shape.back();
        require(0 <= c0 && c0 < c1 && c1 <= d, "slice_last: bad range");
        int64_t rows = xs.numel() / d;
        std::vector<int64_t> oshape = xs.shape;
        oshape.back() = c1 - c0;
        Tensor out(oshape);
        for (int64_t r = 0; r < rows; ++r)
            std::copy_n(&xs.v[size_t(r * d + c0)], size_t(c1 - c0), &out.v[size_t(r * (c1 - c0))]);
        return make(std::move(out), [this, x, c0, c1, d, rows](Node& n) {
            auto& g = grad_mut(x);
            for (int64_t r = 0; r < rows; ++r)
                for (int64_t j = 0; j < c1 - c0; ++j)
                    g.v[size_t(r * d + c0 + j)] += n.grad.v[size_t(r * (c1 - c0) + j)];
        });
    }

    // [B,La,d] ++ [B,Lb,d] along axis 1
    Var concat_rows3(Var a, Var b) {
        const auto& as = val(a);
        const auto& bs = val(b);
        require(as.rank() == 3 && bs.rank() == 3 && as.dim(0) == bs.dim(0) && as.dim(2) == bs.dim(2),
                "concat_rows3: shape mismatch");
        int64_t B = as.dim(0), La = as.dim(1), Lb = bs.dim(1), d = as.dim(2);
        Tensor out({B, La + Lb, d});
        for (int64_t i = 0; i < B; ++i) {
            std::copy_n(&as.v[size_t(i * La * d)], size_t(La * d), &out.v[size_t(i * (La + Lb) * d)]);
            std::copy_n(&bs.v[size_t(i * Lb * d)], size_t(Lb * d),
                        &out.v[size_t((i * (La + Lb) + La) * d)]);
        }
        return make(std::move(out), [this, a, b, B, La, Lb, d](Node& n) {
            auto& ga = grad_mut(a);
            auto& gb = grad_mut(b);
            for (int64_t i = 0; i < B; ++i) {
                for (int64_t j = 0; j < La * d; ++j)
                    ga.v[size_t(i * La * d + j)] += n.grad.v[size_t(i * (La + Lb) * d + j)];
                for (int64_t j = 0; j < Lb * d; ++j)
                    gb.v[size_t(i * Lb * d + j)] += n.grad.v[size_t((i * (La + Lb) + La) * d + j)];
            }
        });
    }

    // repeat a [1,rest...] tensor B times along a new-ish leading axis
    Var expand0(Var x, int64_t B) {
        const auto& xs = val(x);
        require(xs.rank() >= 1 && xs.dim(0) == 1, "expand0: leading dim must be 1");
        std::vector<int64_t> oshape = xs.shape;
        oshape[0] = B;
        int64_t inner = xs.numel();
        Tensor out(oshape);
        for (int64_t i = 0; i < B; ++i)
            std::copy_n(xs.v.begin(), size_t(inner), out.v.begin() + i * inner);
        return make(std::move(out), [this, x, B, inner](Node& n) {
            auto& g = grad_mut(x);
            for (int64_t i = 0; i < B; ++i)
                for (int64_t j = 0; j < inner; ++j) g.v[size_t(j)] += n.grad.v[size_t(i * inner + j)];
        });
    }

    // rows of a [B,L,d] tensor at one index per batch item -> [B,d]
    Var take_rows(Var x, std::vector<int64_t> idx) {
        const auto& xs = val(x);
        require(xs.rank() == 3 && int64_t(idx.size()) == xs.dim(0), "take_rows: bad index list");
        int64_t L = xs.dim(1), d = xs.dim(2);
        Tensor out({xs.dim(0), d});
        for (int64_t b = 0; b < xs.dim(0); ++b) {
            require(idx[size_t(b)] >= 0 && idx[size_t(b)] < L, "take_rows: index out of range");
            std::copy_n(&xs.v[size_t((b * L + idx[size_t(b)]) * d)], size_t(d), &out.v[size_t(b * d)]);
        }
        return make(std::move(out), [this, x, idx, L, d](Node& n) {
            auto& g = grad_mut(x);
            for (int64_t b = 0; b < int64_t(idx.size()); ++b)
                for (int64_t j = 0; j < d; ++j)
                    g.v[size_t((b * L + idx[size_t(b)]) * d + j)] += n.grad.v[size_t(b * d + j)];
        });
    }

    Var take_diag(Var x) {
        const auto& xs = val(x);
        require(xs.rank() == 2 && xs.dim(0) == xs.dim(1), "take_diag: square required");
        int64_t B = xs.dim(0);
        Tensor out({B});
        for (int64_t i = 0; i < B; ++i) out.v[size_t(i)] = xs.v[size_t(i * B + i)];
        return make(std::move(out), [this, x, B](Node& n) {
            auto& g = grad_mut(x);
            for (int64_t i = 0; i < B; ++i) g.v[size_t(i * B + i)] += n.grad.v[size_t(i)];
        });
    }

    Var embedding(Var table, const std::vector<int64_t>& ids, int64_t B, int64_t L) {
        const auto& tb = val(table);
        require(tb.rank() == 2 && int64_t(ids.size()) == B * L, "embedding: bad ids");
        int64_t V = tb.dim(0), d = tb.dim(1);
        Tensor out({B, L, d});
        for (int64_t i = 0; i < B * L; ++i) {
            require(ids[size_t(i)] >= 0 && ids[size_t(i)] < V, "embedding: id out of range");
            std::copy_n(&tb.v[size_t(ids[size_t(i)] * d)], size_t(d), &out.v[size_t(i * d)]);
        }
        return make(std::move(out), [this, table, ids, d](Node& n) {
            auto& g = grad_mut(table);
            for (int64_t i = 0; i < int64_t(ids.size()); ++i)
                for (int64_t j = 0; j < d; ++j)
                    g.v[size_t(ids[size_t(i)] * d + j)] += n.grad.v[size_t(i * d + j)];
        });
    }

    // ---- nonlinearities ----

    Var relu(Var a) {
        Tensor out = val(a);
        for (auto& x : out.v) x = x > 0 ? x : 0.0;
        return make(std::move(out), [this, a](Node& n) {
            auto& g = grad_mut(a).v;
            const auto& av = val(a).v;
            for (size_t i = 0; i < g.size(); ++i)
                if (av[i] > 0) g[i] += n.grad.v[i];
        });
    }

    Var gelu(Var a) {
        constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
        Tensor out = val(a);
        for (auto& x : out.v) {
            double u = kC * (x + 0.044715 * x * x * x);
            x = 0.5 * x * (1.0 + std::tanh(u));
        }
        return make(std::move(out), [this, a](Node& n) {
            auto& g = grad_mut(a).v;
            const auto& av = val(a).v;
            for (size_t i = 0; i < g.size(); ++i) {
                double x = av[i];
                double u = kC * (x + 0.044715 * x * x * x);
                double t = std::tanh(u);
                double du = kC * (1.0 + 3.0 * 0.044715 * x * x);
                g[i] += n.grad.v[i] * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du);
            }
        });
    }

    Var square(Var a) {
        Tensor out = val(a);
        for (auto& x : out.v) x *= x;
        return make(std::move(out), [this, a](Node& n) {
            auto& g = grad_mut(a).v;
            const auto& av = val(a).v;
            for (size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * av[i] * n.grad.v[i];
        });
    }

    Var exp_op(Var a) {
        Tensor out = val(a);
        for (auto& x : out.v) x = std::exp(x);
        int self = int(nodes.size());
        return make(std::move(out), [this, a, self](Node& n) {
            auto& g = grad_mut(a).v;
            const auto& ov = nodes[size_t(self)].value.v;
            for (size_t i = 0; i < g.size(); ++i) g[i] += ov[i] * n.grad.v[i];
        });
    }

    // ---- reductions / normalizations over the last axis ----

    Var softmax_last(Var a) {
        Tensor out = val(a);
        int64_t d = out.shape.back();
        row_softmax(out, d);
        int self = int(nodes.size());
        return make(std::move(out), [this, a, d, self](Node& n) {
            auto& g = grad_mut(a).v;
            const auto& y = nodes[size_t(self)].value.v;
            int64_t rows = int64_t(y.size()) / d;
            for (int64_t r = 0; r < rows; ++r) {
                double s = 0;
                for (int64_t j = 0; j < d; ++j) s += y[size_t(r * d + j)] * n.grad.v[size_t(r * d + j)];
                for (int64_t j = 0; j < d; ++j)
                    g[size_t(r * d + j)] += y[size_t(r * d + j)] * (n.grad.v[size_t(r * d + j)] - s);
            }
        });
    }

    Var log_softmax_last(Var a) {
        Tensor out = val(a);
        int64_t d = out.shape.back();
        int64_t rows = out.numel() / d;
        for (int64_t r = 0; r < rows; ++r) {
            double* p = &out.v[size_t(r * d)];
            double mx = *std::max_element(p, p + d);
            double s = 0;
            for (int64_t j = 0; j < d; ++j) s += std::exp(p[j] - mx);
            double lse = mx + std::log(s);
            for (int64_t j = 0; j < d; ++j) p[j] -= lse;
        }
        int self = int(nodes.size());
        return make(std::move(out), [this, a, d, self](Node& n) {
            auto& g = grad_mut(a).v;
            const auto& y = nodes[size_t(self)].value.v;
            int64_t rows2 = int64_t(y.size()) / d;
            for (int64_t r = 0; r < rows2; ++r) {
                double s = 0;
                for (int64_t j = 0; j < d; ++j) s += n.grad.v[size_t(r * d + j)];
                for (int64_t j = 0; j < d; ++j)
                    g[size_t(r * d + j)] += n.grad.v[size_t(r * d + j)] - std::exp(y[size_t(r * d + j)]) * s;
            }
        });
    }

    // non-affine LayerNorm over the last axis
    Var layernorm_last(Var a, double eps = 1e-5) {
        const auto& xs = val(a);
        int64_t d = xs.shape.back();
        int64_t rows = xs.numel() / d;
        Tensor out = xs;
        std::vector<double> inv_sigma(static_cast<size_t>(rows));
        for (int64_t r = 0; r < rows; ++r) {
            double* p = &out.v[size_t(r * d)];
            double mu = 0;
            for (int64_t j = 0; j < d; ++j) mu += p[j];
            mu /= double(d);
            double var = 0;
            for (int64_t j = 0; j < d; ++j) var += (p[j] - mu) * (p[j] - mu);
            var /= double(d);
            double is = 1.0 / std::sqrt(var + eps);
            inv_sigma[size_t(r)] = is;
            for (int64_t j = 0; j < d; ++j) p[j] = (p[j] - mu) * is;
        }
        int self = int(nodes.size());
        return make(std::move(out), [this, a, d, inv_sigma, self](Node& n) {
            auto& g = grad_mut(a).v;
            const auto& y = nodes[size_t(self)].value.v;
            int64_t rows2 = int64_t(y.size()) / d;
            for (int64_t r = 0; r < rows2; ++r) {
                double mean_dy = 0, mean_dyy = 0;
                for (int64_t j = 0; j < d; ++j) {
                    mean_dy += n.grad.v[size_t(r * d + j)];
                    mean_dyy += n.grad.v[size_t(r * d + j)] * y[size_t(r * d + j)];
                }
                mean_dy /= double(d);
                mean_dyy /= double(d);
                for (int64_t j = 0; j < d; ++j)
                    g[size_t(r * d + j)] += inv_sigma[size_t(r)] *
                        (n.grad.v[size_t(r * d + j)] - mean_dy - y[size_t(r * d + j)] * mean_dyy);
            }
        });
    }

    Var l2_normalize_last(Var a, double eps = 1e-12) {
        const auto& xs = val(a);
        int64_t d = xs.shape.back();
        int64_t rows = xs.numel() / d;
        Tensor out = xs;
        std::vector<double> rnorm(static_cast<size_t>(rows));
        for (int64_t r = 0; r < rows; ++r) {
            double* p = &out.v[size_t(r * d)];
            double s = 0;
            for (int64_t j = 0; j < d; ++j) s += p[j] * p[j];
            double nr = std::sqrt(s + eps * eps);
            rnorm[size_t(r)] = nr;
            for (int64_t j = 0; j < d; ++j) p[j] /= nr;
        }
        int self = int(nodes.size());
        return make(std::move(out), [this, a, d, rnorm, self](Node& n) {
            auto& g = grad_mut(a).v;
            const auto& y = nodes[size_t(self)].value.v;
            int64_t rows2 = int64_t(y.size()) / d;
            for (int64_t r = 0; r < rows2; ++r) {
                double ydy = 0;
                for (int64_t j = 0; j < d; ++j) ydy += y[size_t(r * d + j)] * n.grad.v[size_t(r * d + j)];
                for (int64_t j = 0; j < d; ++j)
                    g[size_t(r * d + j)] +=
                        (n.grad.v[size_t(r * d + j)] - y[size_t(r * d + j)] * ydy) / rnorm[size_t(r)];
            }
        });
    }

    Var sum_all(Var a) {
        double s = 0;
        for (double x : val(a).v) s += x;
        return make(Tensor({1}, {s}), [this, a](Node& n) {
            auto& g = grad_mut(a).v;
            for (auto& x : g) x += n.grad.v[0];
        });
    }

    Var mean_all(Var a) {
        double inv = 1.0 / double(val(a).numel());
        double s = 0;
        for (double x : val(a).v) s += x;
        return make(Tensor({1}, {s * inv}), [this, a, inv](Node& n) {
            auto& g = grad_mut(a).v;
            for (auto& x : g) x += n.grad.v[0] * inv;
        });
    }

    // mean over axis 1 of [B,C,F] -> [B,F]
    Var mean_axis1(Var a) {
        const auto& xs = val(a);
        require(xs.rank() == 3, "mean_axis1: rank-3 required");
        int64_t B = xs.dim(0), C = xs.dim(1), F = xs.dim(2);
        Tensor out({B, F});
        for (int64_t b = 0; b < B; ++b)
            for (int64_t c = 0; c < C; ++c)
                for (int64_t f = 0; f < F; ++f)
                    out.v[size_t(b * F + f)] += xs.v[size_t((b * C + c) * F + f)] / double(C);
        return make(std::move(out), [this, a, B, C, F](Node& n) {
            auto& g = grad_mut(a).v;
            for (int64_t b = 0; b < B; ++b)
                for (int64_t c = 0; c < C; ++c)
                    for (int64_t f = 0; f < F; ++f)
                        g[size_t((b * C + c) * F + f)] += n.grad.v[size_t(b * F + f)] / double(C);
        });
    }

    // ---- linear algebra ----

    // a: [M,K] or [B,M,K]; W: [K,N]
    Var matmul(Var a, Var w) {
        const auto& as = val(a);
        const auto& ws = val(w);
        require(ws.rank() == 2 && as.shape.back() == ws.dim(0), "matmul: inner dim mismatch");
        int64_t K = ws.dim(0), N = ws.dim(1);
        int64_t R = as.numel() / K;
        std::vector<int64_t> oshape = as.shape;
        oshape.back() = N;
        Tensor out(oshape);
        gemm(R, N, K, as.v.data(), ws.v.data(), out.v.data());
        return make(std::move(out), [this, a, w, R, N, K](Node& n) {
            gemm_nt(R, K, N, n.grad.v.data(), val(w).v.data(), grad_mut(a).v.data(), true);
            gemm_tn(K, N, R, val(a).v.data(), n.grad.v.data(), grad_mut(w).v.data(), true);
        });
    }

    // batched: a[B,M,K] x b[B,K,N]
    Var bmm(Var a, Var b) {
        const auto& as = val(a);
        const auto& bs = val(b);
        require(as.rank() == 3 && bs.rank() == 3 && as.dim(0) == bs.dim(0) && as.dim(2) == bs.dim(1),
                "bmm: shape mismatch");
        int64_t B = as.dim(0), M = as.dim(1), K = as.dim(2), N = bs.dim(2);
        Tensor out({B, M, N});
        for (int64_t i = 0; i < B; ++i)
            gemm(M, N, K, &as.v[size_t(i * M * K)], &bs.v[size_t(i * K * N)], &out.v[size_t(i * M * N)]);
        return make(std::move(out), [this, a, b, B, M, K, N](Node& n) {
            auto& ga = grad_mut(a);
            auto& gb = grad_mut(b);
            for (int64_t i = 0; i < B; ++i) {
                gemm_nt(M, K, N, &n.grad.v[size_t(i * M * N)], &val(b).v[size_t(i * K * N)],
                        &ga.v[size_t(i * M * K)], true);
                gemm_tn(K, N, M, &val(a).v[size_t(i * M * K)], &n.grad.v[size_t(i * M * N)],
                        &gb.v[size_t(i * K * N)], true);
            }
        });
    }

    Var transpose_last2(Var a) {
        const auto& as = val(a);
        require(as.rank() >= 2, "transpose_last2: rank >= 2 required");
        int64_t M = as.shape[size_t(as.rank() - 2)], N = as.shape.back();
        int64_t B = as.numel() / (M * N);
        std::vector<int64_t> oshape = as.shape;
        std::swap(oshape[size_t(as.rank() - 2)], oshape.back());
        Tensor out(oshape);
        for (int64_t b = 0; b < B; ++b)
            for (int64_t i = 0; i < M; ++i)
                for (int64_t j = 0; j < N; ++j)
                    out.v[size_t(b * M * N + j * M + i)] = as.v[size_t(b * M * N + i * N + j)];
        return make(std::move(out), [this, a, B, M, N](Node& n) {
            auto& g = grad_mut(a).v;
            for (int64_t b = 0; b < B; ++b)
                for (int64_t i = 0; i < M; ++i)
                    for (int64_t j = 0; j < N; ++j)
                        g[size_t(b * M * N + i * N + j)] += n.grad.v[size_t(b * M * N + j * M + i)];
        });
    }

    // ---- convolutions ----

    // shared per-channel 1-D conv: x[B,C,T], w[d,k] -> [B,C,T',d], 'same'-style
    // zero padding of k/2 on both sides, stride st
    Var conv1d_shared(Var x, Var w, int64_t stride) {
        const auto& xs = val(x);
        const auto& ws = val(w);
        require(xs.rank() == 3 && ws.rank() == 2, "conv1d_shared: bad ranks");
        int64_t B = xs.dim(0), C = xs.dim(1), T = xs.dim(2);
        int64_t d = ws.dim(0), k = ws.dim(1);
        require(k <= T, "conv1d_shared: kernel longer than series");
        int64_t pad = k / 2;
        int64_t To = (T + 2 * pad - k) / stride + 1;
        Tensor out({B, C, To, d});
        for (int64_t bc = 0; bc < B * C; ++bc) {
            const double* src = &xs.v[size_t(bc * T)];
            double* dst = &out.v[size_t(bc * To * d)];
            for (int64_t t = 0; t < To; ++t)
                for (int64_t f = 0; f < d; ++f) {
                    double s = 0;
                    int64_t base = t * stride - pad;
                    for (int64_t kk = 0; kk < k; ++kk) {
                        int64_t ti = base + kk;
                        if (ti >= 0 && ti < T) s += ws.v[size_t(f * k + kk)] * src[ti];
                    }
                    dst[t * d + f] = s;
                }
        }
        return make(std::move(out), [this, x, w, B, C, T, d, k, stride](Node& n) {
            int64_t pad = k / 2;
            int64_t To = (T + 2 * pad - k) / stride + 1;
            auto& gx = grad_mut(x).v;
            auto& gw = grad_mut(w).v;
            const auto& xs2 = val(x).v;
            const auto& ws2 = val(w).v;
            for (int64_t bc = 0; bc < B * C; ++bc) {
                const double* src = &xs2[size_t(bc * T)];
                const double* gout = &n.grad.v[size_t(bc * To * d)];
                double* gsrc = &gx[size_t(bc * T)];
                for (int64_t t = 0; t < To; ++t) {
                    int64_t base = t * stride - pad;
                    for (int64_t f = 0; f < d; ++f) {
                        double go = gout[t * d + f];
                        if (go == 0.0) continue;
                        for (int64_t kk = 0; kk < k; ++kk) {
                            int64_t ti = base + kk;
                            if (ti >= 0 && ti < T) {
                                gsrc[ti] += go * ws2[size_t(f * k + kk)];
                                gw[size_t(f * k + kk)] += go * src[ti];
                            }
                        }
                    }
                }
            }
        });
    }

    // x[B,C,H,W] += b[C], broadcast over batch and spatial dims
    Var add_chan_bias(Var x, Var b) {
        const auto& xs = val(x);
        const auto& bs = val(b);
        require(xs.rank() == 4 && bs.rank() == 1 && xs.dim(1) == bs.dim(0),
                "add_chan_bias: shape mismatch");
        int64_t B = xs.dim(0), C = xs.dim(1), HW = xs.dim(2) * xs.dim(3);
        Tensor out = xs;
        for (int64_t i = 0; i < B; ++i)
            for (int64_t c = 0; c < C; ++c)
                for (int64_t j = 0; j < HW; ++j) out.v[size_t((i * C + c) * HW + j)] += bs.v[size_t(c)];
        return make(std::move(out), [this, x, b, B, C, HW](Node& n) {
            axpy(grad_mut(x).v, n.grad.v, 1.0);
            auto& gb = grad_mut(b).v;
            for (int64_t i = 0; i < B; ++i)
                for (int64_t c = 0; c < C; ++c) {
                    double s = 0;
                    for (int64_t j = 0; j < HW; ++j) s += n.grad.v[size_t((i * C + c) * HW + j)];
                    gb[size_t(c)] += s;
                }
        });
    }

    // average pool to a fixed gh x gw grid with floor-partitioned windows
    Var avg_pool_grid(Var x, int64_t gh, int64_t gw) {
        const auto& xs = val(x);
        require(xs.rank() == 4 && xs.dim(2) >= gh && xs.dim(3) >= gw, "avg_pool_grid: too small");
        int64_t B = xs.dim(0), C = xs.dim(1), H = xs.dim(2), W = xs.dim(3);
        Tensor out({B, C, gh, gw});
        for (int64_t bc = 0; bc < B * C; ++bc)
            for (int64_t i = 0; i < gh; ++i)
                for (int64_t j = 0; j < gw; ++j) {
                    int64_t y0 = i * H / gh, y1 = (i + 1) * H / gh;
                    int64_t x0 = j * W / gw, x1 = (j + 1) * W / gw;
                    double s = 0;
                    for (int64_t y = y0; y < y1; ++y)
                        for (int64_t xx = x0; xx < x1; ++xx) s += xs.v[size_t((bc * H + y) * W + xx)];
                    out.v[size_t((bc * gh + i) * gw + j)] = s / double((y1 - y0) * (x1 - x0));
                }
        return make(std::move(out), [this, x, gh, gw](Node& n) {
            auto& g = grad_mut(x);
            int64_t B = g.dim(0), C = g.dim(1), H = g.dim(2), W = g.dim(3);
            for (int64_t bc = 0; bc < B * C; ++bc)
                for (int64_t i = 0; i < gh; ++i)
                    for (int64_t j = 0; j < gw; ++j) {
                        int64_t y0 = i * H / gh, y1 = (i + 1) * H / gh;
                        int64_t x0 = j * W / gw, x1 = (j + 1) * W / gw;
                        double go = n.grad.v[size_t((bc * gh + i) * gw + j)] /
                                    double((y1 - y0) * (x1 - x0));
                        for (int64_t y = y0; y < y1; ++y)
                            for (int64_t xx = x0; xx < x1; ++xx)
                                g.v[size_t((bc * H + y) * W + xx)] += go;
                    }
        });
    }

    // time-axis conv with feature mixing: x[B,C,T,d], w[k,d,d] -> same shape
    // ('same' zero padding, stride 1); w[tap][g][f] maps feature g to f
    Var conv_time_feat(Var x, Var w) {
        const auto& xs = val(x);
        const auto& ws = val(w);
        require(xs.rank() == 4 && ws.rank() == 3 && ws.dim(1) == xs.dim(3) && ws.dim(2) == xs.dim(3),
                "conv_time_feat: shape mismatch");
        int64_t B = xs.dim(0), C = xs.dim(1), T = xs.dim(2), d = xs.dim(3);
        int64_t k = ws.dim(0), pad = k / 2;
        require(k <= T, "conv_time_feat: kernel longer than series");
        Tensor out({B, C, T, d});
        for (int64_t bc = 0; bc < B * C; ++bc) {
            const double* src = &xs.v[size_t(bc * T * d)];
            double* dst = &out.v[size_t(bc * T * d)];
            for (int64_t t = 0; t < T; ++t)
                for (int64_t tap = 0; tap < k; ++tap) {
                    int64_t ti = t - pad + tap;
                    if (ti < 0 || ti >= T) continue;
                    const double* wv = &ws.v[size_t(tap * d * d)];
                    for (int64_t g = 0; g < d; ++g) {
                        double xv = src[ti * d + g];
                        if (xv == 0.0) continue;
                        for (int64_t f = 0; f < d; ++f) dst[t * d + f] += xv * wv[g * d + f];
                    }
                }
        }
        return make(std::move(out), [this, x, w](Node& n) {
            const auto& xs2 = val(x);
            const auto& ws2 = val(w);
            int64_t B = xs2.dim(0), C = xs2.dim(1), T = xs2.dim(2), d = xs2.dim(3);
            int64_t k = ws2.dim(0), pad = k / 2;
            auto& gx = grad_mut(x);
            auto& gw = grad_mut(w);
            for (int64_t bc = 0; bc < B * C; ++bc) {
                const double* src = &xs2.v[size_t(bc * T * d)];
                const double* gout = &n.grad.v[size_t(bc * T * d)];
                double* gsrc = &gx.v[size_t(bc * T * d)];
                for (int64_t t = 0; t < T; ++t)
                    for (int64_t tap = 0; tap < k; ++tap) {
                        int64_t ti = t - pad + tap;
                        if (ti < 0 || ti >= T) continue;
                        const double* wv = &ws2.v[size_t(tap * d * d)];
                        double* gwv = &gw.v[size_t(tap * d * d)];
                        for (int64_t g = 0; g < d; ++g) {
                            double xv = src[ti * d + g];
                            double acc = 0;
                            for (int64_t f = 0; f < d; ++f) {
                                double go = gout[t * d + f];
                                acc += go * wv[g * d + f];
                                gwv[g * d + f] += go * xv;
                            }
                            gsrc[ti * d + g] += acc;
                        }
                    }
            }
        });
    }

    // x[B,Ci,H,W], w[Co,Ci,kh,kw] -> [B,Co,H',W']
    Var conv2d(Var x, Var w, int64_t stride, int64_t pad) {
        const auto& xs = val(x);
        const auto& ws = val(w);
        require(xs.rank() == 4 && ws.rank() == 4 && xs.dim(1) == ws.dim(1), "conv2d: shape mismatch");
        int64_t B = xs.dim(0), Ci = xs.dim(1), H = xs.dim(2), W = xs.dim(3);
        int64_t Co = ws.dim(0), kh = ws.dim(2), kw = ws.dim(3);
        int64_t Ho = (H + 2 * pad - kh) / stride + 1;
        int64_t Wo = (W + 2 * pad - kw) / stride + 1;
        require(Ho > 0 && Wo > 0, "conv2d: output collapses");
        Tensor out({B, Co, Ho, Wo});
        std::vector<double> cols(size_t(Ci * kh * kw * Ho * Wo));
        for (int64_t b = 0; b < B; ++b) {
            im2col(&xs.v[size_t(b * Ci * H * W)], Ci, H, W, kh, kw, stride, pad, Ho, Wo, cols.data());
            gemm(Co, Ho * Wo, Ci * kh * kw, ws.v.data(), cols.data(), &out.v[size_t(b * Co * Ho * Wo)]);
        }
        return make(std::move(out), [this, x, w, stride, pad](Node& n) {
            const auto& xs2 = val(x);
            const auto& ws2 = val(w);
            int64_t B = xs2.dim(0), Ci = xs2.dim(1), H = xs2.dim(2), W = xs2.dim(3);
            int64_t Co = ws2.dim(0), kh = ws2.dim(2), kw = ws2.dim(3);
            int64_t Ho = n.grad.dim(2), Wo = n.grad.dim(3);
            auto& gx = grad_mut(x);
            auto& gw = grad_mut(w);
            std::vector<double> cols(size_t(Ci * kh * kw * Ho * Wo));
            std::vector<double> dcols(cols.size());
            for (int64_t b = 0; b < B; ++b) {
                im2col(&xs2.v[size_t(b * Ci * H * W)], Ci, H, W, kh, kw, stride, pad, Ho, Wo, cols.data());
                const double* gout = &n.grad.v[size_t(b * Co * Ho * Wo)];
                gemm_tn(Ci * kh * kw, Ho * Wo, Co, ws2.v.data(), gout, dcols.data());
                col2im(dcols.data(), Ci, H, W, kh, kw, stride, pad, Ho, Wo, &gx.v[size_t(b * Ci * H * W)]);
                gemm_nt(Co, Ci * kh * kw, Ho * Wo, gout, cols.data(), gw.v.data(), true);
            }
        });
    }

    // transposed conv: x[B,Ci,H,W], w[Ci,Co,kh,kw] -> [B,Co,H',W'],
    // H' = (H-1)*stride - 2*pad + kh
    Var conv_transpose2d(Var x, Var w, int64_t stride, int64_t pad) {
        const auto& xs = val(x);
        const auto& ws = val(w);
        require(xs.rank() == 4 && ws.rank() == 4 && xs.dim(1) == ws.dim(0),
                "conv_transpose2d: shape mismatch");
        int64_t B = xs.dim(0), Ci = xs.dim(1), H = xs.dim(2), W = xs.dim(3);
        int64_t Co = ws.dim(1), kh = ws.dim(2), kw = ws.dim(3);
        int64_t Ho = (H - 1) * stride - 2 * pad + kh;
        int64_t Wo = (W - 1) * stride - 2 * pad + kw;
        require(Ho > 0 && Wo > 0, "conv_transpose2d: output collapses");
        Tensor out({B, Co, Ho, Wo});
        std::vector<double> cols(size_t(Co * kh * kw * H * W));
        for (int64_t b = 0; b < B; ++b) {
            // cols[(co,ky,kx),(iy,ix)] = sum_ci w[ci,co,ky,kx] * x[ci,iy,ix]
            gemm_tn(Co * kh * kw, H * W, Ci, ws.v.data(), &xs.v[size_t(b * Ci * H * W)], cols.data());
            col2im(cols.data(), Co, Ho, Wo, kh, kw, stride, pad, H, W, &out.v[size_t(b * Co * Ho * Wo)]);
        }
        return make(std::move(out), [this, x, w, stride, pad](Node& n) {
            const auto& xs2 = val(x);
            const auto& ws2 = val(w);
            int64_t B = xs2.dim(0), Ci = xs2.dim(1), H = xs2.dim(2), W = xs2.dim(3);
            int64_t Co = ws2.dim(1), kh = ws2.dim(2), kw = ws2.dim(3);
            int64_t Ho = n.grad.dim(2), Wo = n.grad.dim(3);
            auto& gx = grad_mut(x);
            auto& gw = grad_mut(w);
            std::vector<double> cols(size_t(Co * kh * kw * H * W));
            for (int64_t b = 0; b < B; ++b) {
                im2col(&n.grad.v[size_t(b * Co * Ho * Wo)], Co, Ho, Wo, kh, kw, stride, pad, H, W,
                       cols.data());
                gemm(Ci, H * W, Co * kh * kw, ws2.v.data(), cols.data(), &gx.v[size_t(b * Ci * H * W)], true);
                gemm_nt(Ci, Co * kh * kw, H * W, &xs2.v[size_t(b * Ci * H * W)], cols.data(), gw.v.data(),
                        true);
            }
        });
    }

    // ---- losses ----

    Var mse(Var a, Var b) {
        auto d = sub(a, b);
        return mean_all(square(d));
    }

    // -mean_i log_softmax(logits)[i, label_i]
    Var nll_from_logits(Var logits, const std::vector<int64_t>& labels) {
        auto ls = log_softmax_last(logits);
        const auto& s = val(ls);
        require(s.rank() == 2 && int64_t(labels.size()) == s.dim(0), "nll: bad labels");
        auto picked = take_rows(reshape(ls, {s.dim(0), s.dim(1), 1}), labels);
        return scale(mean_all(picked), -1.0);
    }

    // ---- engine ----

    void backward(Var loss) {
        require(val(loss).numel() == 1, "backward: scalar loss required");
        for (auto& n : nodes)
            if (n.grad.v.empty()) n.grad = Tensor(n.value.shape);
        nodes[size_t(loss.id)].grad.v[0] = 1.0;
        for (int i = int(nodes.size()) - 1; i >= 0; --i)
            if (nodes[size_t(i)].backward) nodes[size_t(i)].backward();
        for (auto& [id, p] : param_links_)
            for (size_t i = 0; i < p->grad.v.size(); ++i) p->grad.v[i] += nodes[size_t(id)].grad.v[i];
    }

    static void im2col(const double* src, int64_t C, int64_t H, int64_t W, int64_t kh, int64_t kw,
                       int64_t stride, int64_t pad, int64_t Ho, int64_t Wo, double* cols) {
        for (int64_t c = 0; c < C; ++c)
            for (int64_t ky = 0; ky < kh; ++ky)
                for (int64_t kx = 0; kx < kw; ++kx) {
                    double* dst = cols + ((c * kh + ky) * kw + kx) * Ho * Wo;
                    for (int64_t oy = 0; oy < Ho; ++oy) {
                        int64_t iy = oy * stride - pad + ky;
                        for (int64_t ox = 0; ox < Wo; ++ox) {
                            int64_t ix = ox * stride - pad + kx;
                            dst[oy * Wo + ox] =
                                (iy >= 0 && iy < H && ix >= 0 && ix < W) ? src[(c * H + iy) * W + ix] : 0.0;
                        }
                    }
                }
    }

    // scatter-add of column buffer back to [C,H,W]; accumulates
    static void col2im(const double* cols, int64_t C, int64_t H, int64_t W, int64_t kh, int64_t kw,
                       int64_t stride, int64_t pad, int64_t Ho, int64_t Wo, double* dst) {
        for (int64_t c = 0; c < C; ++c)
            for (int64_t ky = 0; ky < kh; ++ky)
                for (int64_t kx = 0; kx < kw; ++kx) {
                    const double* src = cols + ((c * kh + ky) * kw + kx) * Ho * Wo;
                    for (int64_t oy = 0; oy < Ho; ++oy) {
                        int64_t iy = oy * stride - pad + ky;
                        if (iy < 0 || iy >= H) continue;
                        for (int64_t ox = 0; ox < Wo; ++ox) {
                            int64_t ix = ox * stride - pad + kx;
                            if (ix >= 0 && ix < W) dst[(c * H + iy) * W + ix] += src[oy * Wo + ox];
                        }
                    }
                }
    }

private:
    std::vector<std::pair<int, Param*>> param_links_;

    template <typename F>
    Var make(Tensor value, F&& bwd) {
        int id = int(nodes.size());
        nodes.push_back(Node{std::move(value), {}, {}});
        Var v{id, this};
        nodes[size_t(id)].backward = [this, id, f = std::forward<F>(bwd)]() mutable { f(nodes[size_t(id)]); };
        return v;
    }

    static void axpy(std::vector<double>& y, const std::vector<double>& x, double a) {
        for (size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
    }

    static void row_softmax(Tensor& t, int64_t d) {
        int64_t rows = t.numel() / d;
        for (int64_t r = 0; r < rows; ++r) {
            double* p = &t.v[size_t(r * d)];
            double mx = *std::max_element(p, p + d);
            double s = 0;
            for (int64_t j = 0; j < d; ++j) {
                p[j] = std::exp(p[j] - mx);
                s += p[j];
            }
            for (int64_t j = 0; j < d; ++j) p[j] /= s;
        }
    }
};

// Xavier-uniform initialization used by every module.
inline Tensor xavier_init(Rng& rng, std::vector<int64_t> shape, int64_t fan_in, int64_t fan_out) {
    double lim = std::sqrt(6.0 / double(fan_in + fan_out));
    Tensor t(std::move(shape));
    for (auto& x : t.v) x = rng.uniform(-lim, lim);
    return t;
}

inline Tensor gaussian_init(Rng& rng, std::vector<int64_t> shape, double sd) {
    Tensor t(std::move(shape));
    for (auto& x : t.v) x = rng.gaussian() * sd;
    return t;
}

}  // namespace sgdm::ad
