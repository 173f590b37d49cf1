#include "ocsr/tensor.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace ocsr::ad {

namespace {

inline double stable_softplus(double x) {
    // max(x,0) + log1p(exp(-|x|)) avoids overflow on both tails
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

inline double sigmoid_d(double x) { return 1.0 / (1.0 + std::exp(-x)); }

bool broadcast_compatible(const Mat& a, const Mat& b) {
    if (a.rows() == b.rows() && a.cols() == b.cols()) return true;
    if (a.size() == 1 || b.size() == 1) return true;
    if (a.rows() == 1 && a.cols() == b.cols()) return true;
    if (b.rows() == 1 && b.cols() == a.cols()) return true;
    return false;
}

// Expand operand to the result shape implied by (a op b).
Mat broadcast_to(const Mat& x, Eigen::Index rows, Eigen::Index cols) {
    if (x.rows() == rows && x.cols() == cols) return x;
    if (x.size() == 1) return Mat::Constant(rows, cols, x(0, 0));
    // row vector replicated down
    return x.replicate(rows / x.rows(), 1);
}

} // namespace

int Tape::push(Node n, Mat v) {
    int id = int(nodes_.size());
    nodes_.push_back(n);
    if (vals_.size() <= size_t(id)) {
        vals_.emplace_back(std::move(v));
    } else {
        vals_[size_t(id)] = std::move(v);
    }
    return id;
}

int Tape::leaf(const Mat& v, bool needs_grad) {
    Node n;
    n.op = Op::Leaf;
    n.needs_grad = needs_grad;
    return push(n, v);
}

int Tape::leaf(Mat&& v, bool needs_grad) {
    Node n;
    n.op = Op::Leaf;
    n.needs_grad = needs_grad;
    return push(n, std::move(v));
}

int Tape::param(const Mat& v, int param_index) {
    Node n;
    n.op = Op::Leaf;
    n.needs_grad = true;
    n.param = param_index;
    int id = push(n, v);
    param_leaves_.push_back(id);
    return id;
}

void Tape::check_binary(const Mat& a, const Mat& b, const char* what) const {
    if (!broadcast_compatible(a, b)) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "tape op %zu (%s): shape mismatch %ldx%ld vs %ldx%ld",
                      nodes_.size(), what, long(a.rows()), long(a.cols()), long(b.rows()), long(b.cols()));
        throw std::invalid_argument(buf);
    }
}

int Tape::affine(int x, int W, int b) {
    const Mat& X = val(x);
    const Mat& Wm = val(W);
    const Mat& B = val(b);
    if (X.cols() != Wm.rows() || B.cols() != Wm.cols() || B.rows() != 1) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "tape op %zu (affine): x %ldx%ld, W %ldx%ld, b %ldx%ld",
                      nodes_.size(), long(X.rows()), long(X.cols()), long(Wm.rows()), long(Wm.cols()),
                      long(B.rows()), long(B.cols()));
        throw std::invalid_argument(buf);
    }
    Mat y = X * Wm;
    y.rowwise() += B.row(0);
    Node n;
    n.op = Op::Affine;
    n.a = x; n.b = W; n.c = b;
    n.needs_grad = needs_grad(x) || needs_grad(W) || needs_grad(b);
    return push(n, std::move(y));
}

int Tape::matmul(int a, int b) {
    const Mat& A = val(a);
    const Mat& B = val(b);
    if (A.cols() != B.rows()) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "tape op %zu (matmul): %ldx%ld * %ldx%ld",
                      nodes_.size(), long(A.rows()), long(A.cols()), long(B.rows()), long(B.cols()));
        throw std::invalid_argument(buf);
    }
    Node n;
    n.op = Op::MatMul;
    n.a = a; n.b = b;
    n.needs_grad = needs_grad(a) || needs_grad(b);
    return push(n, A * B);
}

#define OCSR_BINARY(name, code, expr)                                          \
    int Tape::name(int a, int b) {                                             \
        const Mat& A = val(a);                                                 \
        const Mat& B = val(b);                                                 \
        check_binary(A, B, #name);                                             \
        Eigen::Index r = std::max(A.rows(), B.rows());                         \
        Eigen::Index c = std::max(A.cols(), B.cols());                         \
        Mat Ae = broadcast_to(A, r, c), Be = broadcast_to(B, r, c);            \
        Node n;                                                                \
        n.op = Op::code;                                                       \
        n.a = a; n.b = b;                                                      \
        n.needs_grad = needs_grad(a) || needs_grad(b);                         \
        return push(n, expr);                                                  \
    }

OCSR_BINARY(add, Add, Mat(Ae + Be))
OCSR_BINARY(sub, Sub, Mat(Ae - Be))
OCSR_BINARY(mul, Mul, Mat(Ae.cwiseProduct(Be)))
OCSR_BINARY(div, Div, Mat(Ae.cwiseQuotient(Be)))
#undef OCSR_BINARY

#define OCSR_UNARY(name, opcode, expr)                                         \
    int Tape::name(int x) {                                                    \
        const Mat& X = val(x);                                                 \
        Node n;                                                                \
        n.op = Op::opcode;                                                     \
        n.a = x;                                                               \
        n.needs_grad = needs_grad(x);                                          \
        return push(n, expr);                                                  \
    }

OCSR_UNARY(neg, Neg, Mat(-X))
OCSR_UNARY(softplus, Softplus, Mat(X.unaryExpr([](double v) { return stable_softplus(v); })))
OCSR_UNARY(sigmoid, Sigmoid, Mat(X.unaryExpr([](double v) { return sigmoid_d(v); })))
OCSR_UNARY(tanh_, Tanh, Mat(X.array().tanh()))
OCSR_UNARY(sin_, Sin, Mat(X.array().sin()))
OCSR_UNARY(cos_, Cos, Mat(X.array().cos()))
OCSR_UNARY(relu, Relu, Mat(X.cwiseMax(0.0)))
OCSR_UNARY(exp_, Exp, Mat(X.array().exp()))
OCSR_UNARY(log_, Log, Mat(X.array().log()))
OCSR_UNARY(abs_, Abs, Mat(X.cwiseAbs()))
OCSR_UNARY(sqrt_, Sqrt, Mat(X.array().sqrt()))
OCSR_UNARY(square, Square, Mat(X.array().square()))
#undef OCSR_UNARY

int Tape::scale(int x, double c) {
    Node n;
    n.op = Op::Scale;
    n.a = x;
    n.c0 = c;
    n.needs_grad = needs_grad(x);
    return push(n, Mat(c * val(x)));
}

int Tape::add_const(int x, double c) {
    Node n;
    n.op = Op::AddConst;
    n.a = x;
    n.c0 = c;
    n.needs_grad = needs_grad(x);
    return push(n, Mat(val(x).array() + c));
}

int Tape::max_const(int x, double c) {
    Node n;
    n.op = Op::MaxConst;
    n.a = x;
    n.c0 = c;
    n.needs_grad = needs_grad(x);
    return push(n, Mat(val(x).cwiseMax(c)));
}

int Tape::min_const(int x, double c) {
    Node n;
    n.op = Op::MinConst;
    n.a = x;
    n.c0 = c;
    n.needs_grad = needs_grad(x);
    return push(n, Mat(val(x).cwiseMin(c)));
}

int Tape::sum_all(int x) {
    Node n;
    n.op = Op::SumAll;
    n.a = x;
    n.needs_grad = needs_grad(x);
    return push(n, Mat::Constant(1, 1, val(x).sum()));
}

int Tape::row_sum(int x) {
    Node n;
    n.op = Op::RowSum;
    n.a = x;
    n.needs_grad = needs_grad(x);
    return push(n, Mat(val(x).rowwise().sum()));
}

int Tape::col_sum(int x) {
    Node n;
    n.op = Op::ColSum;
    n.a = x;
    n.needs_grad = needs_grad(x);
    return push(n, Mat(val(x).colwise().sum()));
}

int Tape::concat_cols(int a, int b) {
    const Mat& A = val(a);
    const Mat& B = val(b);
    if (A.rows() != B.rows()) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "tape op %zu (concat_cols): %ld rows vs %ld rows",
                      nodes_.size(), long(A.rows()), long(B.rows()));
        throw std::invalid_argument(buf);
    }
    Mat y(A.rows(), A.cols() + B.cols());
    y.leftCols(A.cols()) = A;
    y.rightCols(B.cols()) = B;
    Node n;
    n.op = Op::ConcatCols;
    n.a = a; n.b = b;
    n.i0 = int(A.cols());
    n.needs_grad = needs_grad(a) || needs_grad(b);
    return push(n, std::move(y));
}

int Tape::slice_cols(int x, int start, int count) {
    const Mat& X = val(x);
    if (start < 0 || count < 0 || start + count > X.cols()) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "tape op %zu (slice_cols): [%d,%d) of %ld cols",
                      nodes_.size(), start, start + count, long(X.cols()));
        throw std::invalid_argument(buf);
    }
    Node n;
    n.op = Op::SliceCols;
    n.a = x;
    n.i0 = start; n.i1 = count;
    n.needs_grad = needs_grad(x);
    return push(n, Mat(X.middleCols(start, count)));
}

int Tape::reshape(int x, int rows, int cols) {
    const Mat& X = val(x);
    if (Eigen::Index(rows) * cols != X.size()) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "tape op %zu (reshape): %ldx%ld -> %dx%d",
                      nodes_.size(), long(X.rows()), long(X.cols()), rows, cols);
        throw std::invalid_argument(buf);
    }
    // Row-major reinterpretation regardless of storage order.
    Mat y(rows, cols);
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < X.rows(); ++i)
        for (Eigen::Index j = 0; j < X.cols(); ++j, ++k)
            y(k / cols, k % cols) = X(i, j);
    Node n;
    n.op = Op::Reshape;
    n.a = x;
    n.i0 = rows; n.i1 = cols;
    n.needs_grad = needs_grad(x);
    return push(n, std::move(y));
}

int Tape::cumprod_exclusive(int x) {
    const Mat& X = val(x);
    Mat y(X.rows(), X.cols());
    for (Eigen::Index r = 0; r < X.rows(); ++r) {
        double p = 1.0;
        for (Eigen::Index j = 0; j < X.cols(); ++j) {
            y(r, j) = p;
            p *= X(r, j);
        }
    }
    Node n;
    n.op = Op::CumprodExcl;
    n.a = x;
    n.needs_grad = needs_grad(x);
    return push(n, std::move(y));
}

int Tape::stop_gradient(int x) {
    Node n;
    n.op = Op::StopGrad;
    n.a = x;
    n.needs_grad = false;
    return push(n, val(x));
}

const Mat& Tape::grad(int id) const {
    if (!has_grads_) throw std::runtime_error("tape: backward() has not run");
    Mat& m = grads_[size_t(id)];
    if (!m.size()) m = Mat::Zero(val(id).rows(), val(id).cols());
    return m;
}

void Tape::accum_broadcast(Mat& dst, const Mat& g) {
    if (dst.rows() == g.rows() && dst.cols() == g.cols()) {
        dst += g;
    } else if (dst.size() == 1) {
        dst(0, 0) += g.sum();
    } else {
        // dst is a row vector broadcast down g's rows
        dst += g.colwise().sum();
    }
}

void Tape::backward(int output) {
    const Mat& out = val(output);
    if (out.rows() != 1 || out.cols() != 1) {
        throw std::invalid_argument("tape backward: output must be scalar (1x1)");
    }
    if (grads_.size() < nodes_.size()) grads_.resize(nodes_.size());
    for (size_t i = 0; i < nodes_.size(); ++i) grads_[i].resize(0, 0);
    has_grads_ = true;

    auto g = [&](int id) -> Mat& {
        Mat& m = grads_[size_t(id)];
        if (!m.size()) m = Mat::Zero(val(id).rows(), val(id).cols());
        return m;
    };
    auto has = [&](int id) { return grads_[size_t(id)].size() > 0; };

    g(output)(0, 0) = 1.0;

    for (int id = output; id >= 0; --id) {
        const Node& n = nodes_[size_t(id)];
        if (!n.needs_grad || !has(id)) continue;
        const Mat& G = grads_[size_t(id)];
        const Mat& Y = val(id);
        switch (n.op) {
        case Op::Leaf:
            break;
        case Op::Affine: {
            const Mat& X = val(n.a);
            const Mat& W = val(n.b);
            if (needs_grad(n.a)) g(n.a).noalias() += G * W.transpose();
            if (needs_grad(n.b)) g(n.b).noalias() += X.transpose() * G;
            if (needs_grad(n.c)) g(n.c) += G.colwise().sum();
            break;
        }
        case Op::MatMul: {
            const Mat& A = val(n.a);
            const Mat& B = val(n.b);
            if (needs_grad(n.a)) g(n.a).noalias() += G * B.transpose();
            if (needs_grad(n.b)) g(n.b).noalias() += A.transpose() * G;
            break;
        }
        case Op::Add:
            if (needs_grad(n.a)) accum_broadcast(g(n.a), G);
            if (needs_grad(n.b)) accum_broadcast(g(n.b), G);
            break;
        case Op::Sub:
            if (needs_grad(n.a)) accum_broadcast(g(n.a), G);
            if (needs_grad(n.b)) accum_broadcast(g(n.b), Mat(-G));
            break;
        case Op::Mul: {
            if (needs_grad(n.a)) accum_broadcast(g(n.a), Mat(G.cwiseProduct(broadcast_to(val(n.b), G.rows(), G.cols()))));
            if (needs_grad(n.b)) accum_broadcast(g(n.b), Mat(G.cwiseProduct(broadcast_to(val(n.a), G.rows(), G.cols()))));
            break;
        }
        case Op::Div: {
            Mat Be = broadcast_to(val(n.b), G.rows(), G.cols());
            if (needs_grad(n.a)) accum_broadcast(g(n.a), Mat(G.cwiseQuotient(Be)));
            if (needs_grad(n.b)) {
                Mat Ae = broadcast_to(val(n.a), G.rows(), G.cols());
                accum_broadcast(g(n.b), Mat(-G.cwiseProduct(Ae).cwiseQuotient(Be.cwiseProduct(Be))));
            }
            break;
        }
        case Op::Neg: g(n.a) -= G; break;
        case Op::Scale: g(n.a) += n.c0 * G; break;
        case Op::AddConst: g(n.a) += G; break;
        case Op::Softplus: g(n.a) += G.cwiseProduct(val(n.a).unaryExpr([](double v) { return sigmoid_d(v); })); break;
        case Op::Sigmoid: g(n.a).array() += G.array() * Y.array() * (1.0 - Y.array()); break;
        case Op::Tanh: g(n.a).array() += G.array() * (1.0 - Y.array().square()); break;
        case Op::Sin: g(n.a) += G.cwiseProduct(Mat(val(n.a).array().cos())); break;
        case Op::Cos: g(n.a) -= G.cwiseProduct(Mat(val(n.a).array().sin())); break;
        case Op::Relu: g(n.a).array() += G.array() * (val(n.a).array() > 0.0).cast<double>(); break;
        case Op::Exp: g(n.a) += G.cwiseProduct(Y); break;
        case Op::Log: g(n.a) += G.cwiseQuotient(val(n.a)); break;
        case Op::Abs: g(n.a).array() += G.array() * val(n.a).array().sign(); break;
        case Op::Sqrt: g(n.a).array() += 0.5 * G.array() / Y.array(); break;
        case Op::Square: g(n.a).array() += 2.0 * G.array() * val(n.a).array(); break;
        case Op::MaxConst: g(n.a).array() += G.array() * (val(n.a).array() > n.c0).cast<double>(); break;
        case Op::MinConst: g(n.a).array() += G.array() * (val(n.a).array() < n.c0).cast<double>(); break;
        case Op::SumAll: g(n.a).array() += G(0, 0); break;
        case Op::RowSum: g(n.a).colwise() += Eigen::VectorXd(G.col(0)); break;
        case Op::ColSum: g(n.a).rowwise() += Eigen::RowVectorXd(G.row(0)); break;
        case Op::ConcatCols:
            if (needs_grad(n.a)) g(n.a) += G.leftCols(n.i0);
            if (needs_grad(n.b)) g(n.b) += G.rightCols(G.cols() - n.i0);
            break;
        case Op::SliceCols: g(n.a).middleCols(n.i0, n.i1) += G; break;
        case Op::Reshape: {
            Mat& gx = g(n.a);
            Eigen::Index k = 0;
            for (Eigen::Index i = 0; i < gx.rows(); ++i)
                for (Eigen::Index j = 0; j < gx.cols(); ++j, ++k)
                    gx(i, j) += G(k / n.i1, k % n.i1);
            break;
        }
        case Op::CumprodExcl: {
            // dX(r,j) = Y(r,j) * T_j with T_j = G(r,j+1) + X(r,j+1) * T_{j+1};
            // division-free so alpha == 1 samples stay well-defined.
            const Mat& X = val(n.a);
            Mat& gx = g(n.a);
            for (Eigen::Index r = 0; r < X.rows(); ++r) {
                double t = 0.0;
                for (Eigen::Index j = X.cols() - 2; j >= 0; --j) {
                    t = G(r, j + 1) + X(r, j + 1) * t;
                    gx(r, j) += Y(r, j) * t;
                }
            }
            break;
        }
        case Op::StopGrad:
            break;
        }
    }
}

std::vector<std::pair<int, Mat>> Tape::param_grads() const {
    std::vector<std::pair<int, Mat>> out;
    out.reserve(param_leaves_.size());
    for (int id : param_leaves_) {
        const Node& n = nodes_[size_t(id)];
        if (has_grads_ && grads_[size_t(id)].size()) {
            out.emplace_back(n.param, grads_[size_t(id)]);
        } else {
            out.emplace_back(n.param, Mat::Zero(val(id).rows(), val(id).cols()));
        }
    }
    return out;
}

void Tape::reset() {
    nodes_.clear();
    param_leaves_.clear();
    has_grads_ = false;
}

// --- ParamStore -------------------------------------------------------------

int ParamStore::add(const std::string& name, Mat init, double lr_scale) {
    if (index_.count(name)) throw std::invalid_argument("param exists: " + name);
    Entry e;
    e.name = name;
    e.m = Mat::Zero(init.rows(), init.cols());
    e.v = Mat::Zero(init.rows(), init.cols());
    e.value = std::move(init);
    e.step = 0;
    e.lr_scale = lr_scale;
    entries_.push_back(std::move(e));
    int idx = int(entries_.size()) - 1;
    index_[name] = idx;
    return idx;
}

int ParamStore::index(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("unknown param: " + name);
    return it->second;
}

int ParamStore::adam_step(const std::vector<Mat>& grads, const AdamConfig& cfg) {
    if (grads.size() != entries_.size())
        throw std::invalid_argument("adam_step: gradient list not aligned with parameters");
    int skipped = 0;
    for (size_t i = 0; i < entries_.size(); ++i) {
        const Mat& gr = grads[i];
        if (!gr.size()) continue;
        Entry& e = entries_[i];
        if (gr.rows() != e.value.rows() || gr.cols() != e.value.cols())
            throw std::invalid_argument("adam_step: gradient shape mismatch for " + e.name);
        if (!gr.allFinite()) {
            ++skipped;
            ++skipped_updates_;
            std::fprintf(stderr, "[ocsr] adam: non-finite gradient for '%s', update skipped\n", e.name.c_str());
            continue;
        }
        e.step += 1;
        double b1t = 1.0 - std::pow(cfg.beta1, double(e.step));
        double b2t = 1.0 - std::pow(cfg.beta2, double(e.step));
        e.m = cfg.beta1 * e.m + (1.0 - cfg.beta1) * gr;
        e.v = cfg.beta2 * e.v + (1.0 - cfg.beta2) * gr.cwiseProduct(gr);
        double lr = cfg.lr * e.lr_scale;
        e.value.array() -= lr * (e.m.array() / b1t) / ((e.v.array() / b2t).sqrt() + cfg.eps);
    }
    return skipped;
}

std::vector<Mat> ParamStore::zero_grads() const {
    return std::vector<Mat>(entries_.size());
}

void ParamStore::accumulate(std::vector<Mat>& into, const std::vector<std::pair<int, Mat>>& grads) {
    for (const auto& [idx, g] : grads) {
        Mat& dst = into[size_t(idx)];
        if (!dst.size())
            dst = g;
        else
            dst += g;
    }
}

namespace {

void write_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }

uint32_t read_u32(std::istream& is) {
    uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    return v;
}

void write_record(std::ostream& os, const std::string& name, const Mat& m) {
    write_u32(os, uint32_t(name.size()));
    os.write(name.data(), std::streamsize(name.size()));
    write_u32(os, 2);
    write_u32(os, uint32_t(m.rows()));
    write_u32(os, uint32_t(m.cols()));
    std::vector<float> buf(size_t(m.size()));
    size_t k = 0;
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) buf[k++] = float(m(i, j));
    os.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size() * 4));
}

bool read_record(std::istream& is, std::string& name, Mat& m) {
    uint32_t len = 0;
    if (!is.read(reinterpret_cast<char*>(&len), 4)) return false;
    name.resize(len);
    is.read(name.data(), std::streamsize(len));
    uint32_t ndim = read_u32(is);
    std::vector<uint32_t> dims(ndim);
    for (auto& d : dims) d = read_u32(is);
    uint32_t rows = ndim >= 1 ? dims[0] : 1;
    uint32_t cols = ndim >= 2 ? dims[1] : 1;
    std::vector<float> buf(size_t(rows) * cols);
    is.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size() * 4));
    if (!is) throw std::runtime_error("checkpoint: truncated record " + name);
    m.resize(rows, cols);
    size_t k = 0;
    for (uint32_t i = 0; i < rows; ++i)
        for (uint32_t j = 0; j < cols; ++j) m(i, j) = double(buf[k++]);
    return true;
}

Mat f32_roundtrip(const Mat& m) {
    return m.unaryExpr([](double v) { return double(float(v)); });
}

} // namespace

void ParamStore::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot write " + path);
    os.write("OCSM", 4);
    write_u32(os, 1u);
    for (const auto& e : entries_) {
        write_record(os, e.name, e.value);
        write_record(os, e.name + ".m", e.m);
        write_record(os, e.name + ".v", e.v);
        write_record(os, e.name + ".step", Mat::Constant(1, 1, double(e.step)));
    }
    if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

void ParamStore::save_and_sync(const std::string& path) {
    // Quantize live state to exactly what the f32 file stores, so a resumed
    // run and the uninterrupted run continue from identical values.
    for (auto& e : entries_) {
        e.value = f32_roundtrip(e.value);
        e.m = f32_roundtrip(e.m);
        e.v = f32_roundtrip(e.v);
    }
    save(path);
}

void ParamStore::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot read " + path);
    char magic[4];
    is.read(magic, 4);
    if (std::memcmp(magic, "OCSM", 4) != 0) throw std::runtime_error("checkpoint: bad magic in " + path);
    uint32_t version = read_u32(is);
    if (version != 1) throw std::runtime_error("checkpoint: unsupported version");
    std::string name;
    Mat m;
    while (read_record(is, name, m)) {
        auto strip = [&](const char* suffix) -> std::string {
            size_t n = std::strlen(suffix);
            if (name.size() > n && name.compare(name.size() - n, n, suffix) == 0)
                return name.substr(0, name.size() - n);
            return {};
        };
        std::string base;
        if (!(base = strip(".m")).empty()) {
            entries_[size_t(index(base))].m = m;
        } else if (!(base = strip(".v")).empty()) {
            entries_[size_t(index(base))].v = m;
        } else if (!(base = strip(".step")).empty()) {
            entries_[size_t(index(base))].step = long(m(0, 0));
        } else {
            entries_[size_t(index(name))].value = m;
        }
    }
}

// --- finite differences -------------------------------------------------------

double finite_diff_check(const std::function<int(Tape&, const std::vector<int>&)>& build,
                         std::vector<Mat> params, double h) {
    if (h <= 0) throw std::invalid_argument("finite_diff_check: h must be positive");

    auto eval = [&](const std::vector<Mat>& ps, std::vector<Mat>* grads) -> double {
        Tape t;
        std::vector<int> ids;
        ids.reserve(ps.size());
        for (const auto& p : ps) ids.push_back(t.leaf(p, grads != nullptr));
        int out = build(t, ids);
        const Mat& o = t.val(out);
        if (o.rows() != 1 || o.cols() != 1)
            throw std::invalid_argument("finite_diff_check: output must be scalar");
        if (grads) {
            t.backward(out);
            grads->clear();
            for (int id : ids) grads->push_back(t.grad(id));
        }
        return o(0, 0);
    };

    std::vector<Mat> analytic;
    eval(params, &analytic);

    double max_rel = 0.0;
    for (size_t p = 0; p < params.size(); ++p) {
        for (Eigen::Index i = 0; i < params[p].rows(); ++i) {
            for (Eigen::Index j = 0; j < params[p].cols(); ++j) {
                double orig = params[p](i, j);
                params[p](i, j) = orig + h;
                double fp = eval(params, nullptr);
                params[p](i, j) = orig - h;
                double fm = eval(params, nullptr);
                params[p](i, j) = orig;
                double cd = (fp - fm) / (2.0 * h);
                double rel = std::abs(analytic[p](i, j) - cd) / (std::abs(cd) + 1e-12);
                max_rel = std::max(max_rel, rel);
            }
        }
    }
    return max_rel;
}

} // namespace ocsr::ad
