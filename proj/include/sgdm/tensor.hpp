#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "sgdm/common.hpp"

namespace sgdm {

// Dense row-major double tensor. All model math runs in 64-bit; checkpoints
// and on-disk arrays round to float32.
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<double> v;

    Tensor() = default;
    explicit Tensor(std::vector<int64_t> s, double fill = 0.0)
        : shape(std::move(s)), v(size_t(count(shape)), fill) {}
    Tensor(std::vector<int64_t> s, std::vector<double> data)
        : shape(std::move(s)), v(std::move(data)) {
        require(int64_t(v.size()) == count(shape), "tensor data does not match shape");
    }

    static int64_t count(const std::vector<int64_t>& s) {
        int64_t n = 1;
        for (auto d : s) n *= d;
        return n;
    }

    int64_t numel() const { return int64_t(v.size()); }
    int rank() const { return int(shape.size()); }
    int64_t dim(int i) const { return shape[size_t(i)]; }

    double& at(std::initializer_list<int64_t> idx) { return v[size_t(offset(idx))]; }
    double at(std::initializer_list<int64_t> idx) const { return v[size_t(offset(idx))]; }

    int64_t offset(std::initializer_list<int64_t> idx) const {
        int64_t off = 0;
        int i = 0;
        for (int64_t ix : idx) {
            off = off * shape[size_t(i)] + ix;
            ++i;
        }
        return off;
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
    }

    Tensor reshaped(std::vector<int64_t> s) const {
        require(count(s) == numel(), "reshape element count mismatch");
        Tensor t;
        t.shape = std::move(s);
        t.v = v;
        return t;
    }
};

inline std::string shape_str(const std::vector<int64_t>& s) {
    std::string r = "[";
    for (size_t i = 0; i < s.size(); ++i) r += (i ? "," : "") + std::to_string(s[i]);
    return r + "]";
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double l2_norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

inline std::vector<double> normalized(std::vector<double> a, double eps = 1e-12) {
    double n = l2_norm(a);
    if (n < eps) n = eps;
    for (auto& x : a) x /= n;
    return a;
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double na = l2_norm(a), nb = l2_norm(b);
    if (na == 0 || nb == 0) return 0.0;
    return dot(a, b) / (na * nb);
}

inline double mean_of(const std::vector<double>& x) {
    if (x.empty()) return 0.0;
    return std::accumulate(x.begin(), x.end(), 0.0) / double(x.size());
}

// C[M,N] = A[M,K] * B[K,N]; the single hot loop behind conv/attention.
inline void gemm(int64_t M, int64_t N, int64_t K, const double* A, const double* B, double* C,
                 bool accumulate = false) {
    if (!accumulate) std::fill(C, C + M * N, 0.0);
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < M; ++i) {
        for (int64_t k = 0; k < K; ++k) {
            double a = A[i * K + k];
            if (a == 0.0) continue;
            const double* b = B + k * N;
            double* c = C + i * N;
            for (int64_t j = 0; j < N; ++j) c[j] += a * b[j];
        }
    }
}

}  // namespace sgdm
