#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

namespace ocsr::ad {

using Mat = Eigen::MatrixXd;

enum class Op : uint8_t {
    Leaf,
    Affine,       // y = x * W + b (b broadcast per row); inputs: x, W, b
    MatMul,       // y = a * b
    Add, Sub, Mul, Div,
    Neg,
    Scale,        // y = c0 * x
    AddConst,     // y = x + c0
    Softplus, Sigmoid, Tanh, Sin, Cos, Relu, Exp, Log, Abs, Sqrt, Square,
    MaxConst,     // y = max(x, c0)
    MinConst,     // y = min(x, c0)
    SumAll,       // 1x1
    RowSum,       // N x 1
    ColSum,       // 1 x C
    ConcatCols,   // [a b]
    SliceCols,    // cols [i0, i0+i1)
    Reshape,      // row-major reinterpret to i0 x i1
    CumprodExcl,  // y(r,j) = prod_{k<j} x(r,k), y(r,0) = 1
    StopGrad,
};

// Reverse-mode tape over dense real matrices. Ops evaluate eagerly; backward
// walks the node list in reverse. Node storage is reused across reset() calls
// so a training step allocates only on the first iteration.
class Tape {
public:
    struct Node {
        Op op = Op::Leaf;
        int a = -1, b = -1, c = -1; // input node ids
        double c0 = 0.0;            // scalar attribute
        int i0 = 0, i1 = 0;         // integer attributes
        bool needs_grad = false;
        int param = -1;             // ParamStore index for bound leaves
    };

    // --- leaves -----------------------------------------------------------
    int leaf(const Mat& v, bool needs_grad = false);
    int leaf(Mat&& v, bool needs_grad = false);
    int scalar(double v) { return leaf(Mat::Constant(1, 1, v)); }
    // Leaf bound to an external parameter (gradient reported per param index).
    int param(const Mat& v, int param_index);

    // --- ops ----------------------------------------------------------------
    int affine(int x, int W, int b);
    int matmul(int a, int b);
    int add(int a, int b);
    int sub(int a, int b);
    int mul(int a, int b);
    int div(int a, int b);
    int neg(int x);
    int scale(int x, double c);
    int add_const(int x, double c);
    int softplus(int x);
    int sigmoid(int x);
    int tanh_(int x);
    int sin_(int x);
    int cos_(int x);
    int relu(int x);
    int exp_(int x);
    int log_(int x);
    int abs_(int x);
    int sqrt_(int x);
    int square(int x);
    int max_const(int x, double c);
    int min_const(int x, double c);
    int clamp(int x, double lo, double hi) { return min_const(max_const(x, lo), hi); }
    int sum_all(int x);
    int row_sum(int x);
    int col_sum(int x);
    int concat_cols(int a, int b);
    int slice_cols(int x, int start, int count);
    int reshape(int x, int rows, int cols);
    int cumprod_exclusive(int x);
    int stop_gradient(int x);

    // --- access -------------------------------------------------------------
    const Mat& val(int id) const { return vals_[size_t(id)]; }
    const Mat& grad(int id) const;
    bool needs_grad(int id) const { return nodes_[size_t(id)].needs_grad; }
    size_t size() const { return nodes_.size(); }

    // Gradient of a scalar output w.r.t. every reachable differentiable node.
    // Unreachable parameters report exact-zero gradients. Repeated calls on
    // the same tape produce identical results.
    void backward(int output);

    // (param index, gradient) for every bound parameter leaf, in creation order.
    std::vector<std::pair<int, Mat>> param_grads() const;

    // Clear nodes but keep value/grad buffers for reuse.
    void reset();

private:
    int push(Node n, Mat v);
    void check_binary(const Mat& a, const Mat& b, const char* what) const;
    // Apply g to dst honoring row/scalar broadcast used in forward.
    static void accum_broadcast(Mat& dst, const Mat& g);

    std::vector<Node> nodes_;
    std::vector<Mat> vals_;
    mutable std::vector<Mat> grads_;
    std::vector<int> param_leaves_;
    bool has_grads_ = false;
};

// Named parameter arrays with per-parameter Adam state.
class ParamStore {
public:
    struct Entry {
        std::string name;
        Mat value;
        Mat m, v;        // Adam first/second moments, zero-initialized
        long step = 0;   // per-parameter step count
        double lr_scale = 1.0;
    };

    struct AdamConfig {
        double lr = 5e-4;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
    };

    int add(const std::string& name, Mat init, double lr_scale = 1.0);
    bool has(const std::string& name) const { return index_.count(name) != 0; }
    int index(const std::string& name) const;
    Entry& entry(int i) { return entries_[size_t(i)]; }
    const Entry& entry(int i) const { return entries_[size_t(i)]; }
    Mat& value(const std::string& name) { return entries_[size_t(index(name))].value; }
    const Mat& value(const std::string& name) const { return entries_[size_t(index(name))].value; }
    size_t size() const { return entries_.size(); }

    // Standard Adam with bias correction. Gradients are indexed like entries;
    // an empty matrix means "no gradient" (parameter untouched). Non-finite
    // gradients skip that parameter's update and count as a diagnostic.
    // Returns the number of skipped parameters.
    int adam_step(const std::vector<Mat>& grads, const AdamConfig& cfg);

    // Gradient accumulation buffer aligned with the store.
    std::vector<Mat> zero_grads() const;
    static void accumulate(std::vector<Mat>& into, const std::vector<std::pair<int, Mat>>& grads);

    // Checkpoint I/O. Little-endian binary: magic "OCSM", version u32, then
    // (name-length u32, name, ndim u32, dims u32..., f32 data) records for
    // every parameter and its Adam state. Saving quantizes live values to f32
    // so a resumed run continues from exactly the serialized state.
    void save(const std::string& path) const;
    void load(const std::string& path);
    // Non-const save: quantizes the in-memory store to match the file.
    void save_and_sync(const std::string& path);

    long skipped_update_count() const { return skipped_updates_; }

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, int> index_;
    long skipped_updates_ = 0;
};

// Max over parameters of |analytic - central difference| / (|cd| + 1e-12).
// `build` constructs the graph on a fresh tape from parameter values (bound
// as differentiable leaves in order) and returns the scalar output node.
double finite_diff_check(const std::function<int(Tape&, const std::vector<int>&)>& build,
                         std::vector<Mat> params, double h);

} // namespace ocsr::ad
