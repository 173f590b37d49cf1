#pragma once

#include "ocsr/tensor.hpp"

#include <string>
#include <unordered_map>

namespace ocsr {

using ad::Mat;

// Network forward passes are written once against a context with this shape:
// TapeCtx records onto an autodiff tape (training), PlainCtx evaluates raw
// Eigen matrices (inference paths like marching cubes and sphere tracing).

struct TapeCtx {
    ad::Tape& t;
    ad::ParamStore& ps;
    std::unordered_map<int, int> bound;

    using V = int;

    TapeCtx(ad::Tape& tape, ad::ParamStore& store) : t(tape), ps(store) {}

    V param(int store_index) {
        auto it = bound.find(store_index);
        if (it != bound.end()) return it->second;
        int id = t.param(ps.entry(store_index).value, store_index);
        bound.emplace(store_index, id);
        return id;
    }
    V leaf(const Mat& m) { return t.leaf(m); }
    V affine(V x, V w, V b) { return t.affine(x, w, b); }
    V matmul(V a, V b) { return t.matmul(a, b); }
    V add(V a, V b) { return t.add(a, b); }
    V sub(V a, V b) { return t.sub(a, b); }
    V mul(V a, V b) { return t.mul(a, b); }
    V div(V a, V b) { return t.div(a, b); }
    V neg(V x) { return t.neg(x); }
    V scale(V x, double c) { return t.scale(x, c); }
    V add_const(V x, double c) { return t.add_const(x, c); }
    V softplus(V x) { return t.softplus(x); }
    V sigmoid(V x) { return t.sigmoid(x); }
    V tanh(V x) { return t.tanh_(x); }
    V sin(V x) { return t.sin_(x); }
    V cos(V x) { return t.cos_(x); }
    V relu(V x) { return t.relu(x); }
    V exp(V x) { return t.exp_(x); }
    V log(V x) { return t.log_(x); }
    V abs(V x) { return t.abs_(x); }
    V sqrt(V x) { return t.sqrt_(x); }
    V square(V x) { return t.square(x); }
    V max_const(V x, double c) { return t.max_const(x, c); }
    V min_const(V x, double c) { return t.min_const(x, c); }
    V clamp(V x, double lo, double hi) { return t.clamp(x, lo, hi); }
    V sum_all(V x) { return t.sum_all(x); }
    V row_sum(V x) { return t.row_sum(x); }
    V col_sum(V x) { return t.col_sum(x); }
    V concat(V a, V b) { return t.concat_cols(a, b); }
    V slice(V x, int start, int count) { return t.slice_cols(x, start, count); }
    V cumprod_exclusive(V x) { return t.cumprod_exclusive(x); }
    V stop_grad(V x) { return t.stop_gradient(x); }
    const Mat& value(V id) const { return t.val(id); }
};

struct PlainCtx {
    const ad::ParamStore& ps;

    using V = Mat;

    explicit PlainCtx(const ad::ParamStore& store) : ps(store) {}

    static Mat bcast(const Mat& x, Eigen::Index r, Eigen::Index c) {
        if (x.rows() == r && x.cols() == c) return x;
        if (x.size() == 1) return Mat::Constant(r, c, x(0, 0));
        return x.replicate(r / x.rows(), 1);
    }
    template <class F> static Mat bin(const Mat& a, const Mat& b, F f) {
        Eigen::Index r = std::max(a.rows(), b.rows()), c = std::max(a.cols(), b.cols());
        return f(bcast(a, r, c), bcast(b, r, c));
    }

    V param(int store_index) { return ps.entry(store_index).value; }
    V leaf(const Mat& m) { return m; }
    V affine(const V& x, const V& w, const V& b) {
        Mat y = x * w;
        y.rowwise() += b.row(0);
        return y;
    }
    V matmul(const V& a, const V& b) { return a * b; }
    V add(const V& a, const V& b) { return bin(a, b, [](const auto& x, const auto& y) { return Mat(x + y); }); }
    V sub(const V& a, const V& b) { return bin(a, b, [](const auto& x, const auto& y) { return Mat(x - y); }); }
    V mul(const V& a, const V& b) { return bin(a, b, [](const auto& x, const auto& y) { return Mat(x.cwiseProduct(y)); }); }
    V div(const V& a, const V& b) { return bin(a, b, [](const auto& x, const auto& y) { return Mat(x.cwiseQuotient(y)); }); }
    V neg(const V& x) { return -x; }
    V scale(const V& x, double c) { return c * x; }
    V add_const(const V& x, double c) { return Mat(x.array() + c); }
    V softplus(const V& x) {
        return x.unaryExpr([](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); });
    }
    V sigmoid(const V& x) { return x.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); }); }
    V tanh(const V& x) { return x.array().tanh(); }
    V sin(const V& x) { return x.array().sin(); }
    V cos(const V& x) { return x.array().cos(); }
    V relu(const V& x) { return x.cwiseMax(0.0); }
    V exp(const V& x) { return x.array().exp(); }
    V log(const V& x) { return x.array().log(); }
    V abs(const V& x) { return x.cwiseAbs(); }
    V sqrt(const V& x) { return x.array().sqrt(); }
    V square(const V& x) { return x.array().square(); }
    V max_const(const V& x, double c) { return x.cwiseMax(c); }
    V min_const(const V& x, double c) { return x.cwiseMin(c); }
    V clamp(const V& x, double lo, double hi) { return x.cwiseMax(lo).cwiseMin(hi); }
    V sum_all(const V& x) { return Mat::Constant(1, 1, x.sum()); }
    V row_sum(const V& x) { return x.rowwise().sum(); }
    V col_sum(const V& x) { return x.colwise().sum(); }
    V concat(const V& a, const V& b) {
        Mat y(a.rows(), a.cols() + b.cols());
        y.leftCols(a.cols()) = a;
        y.rightCols(b.cols()) = b;
        return y;
    }
    V slice(const V& x, int start, int count) { return x.middleCols(start, count); }
    V cumprod_exclusive(const V& x) {
        Mat y(x.rows(), x.cols());
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            double p = 1.0;
            for (Eigen::Index j = 0; j < x.cols(); ++j) {
                y(r, j) = p;
                p *= x(r, j);
            }
        }
        return y;
    }
    V stop_grad(const V& x) { return x; }
    const Mat& value(const V& m) const { return m; }
};

} // namespace ocsr
