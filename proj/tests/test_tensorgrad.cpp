#include <doctest.h>

#include "ocsr/rng.hpp"
#include "ocsr/tensor.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>

using namespace ocsr;
using ad::Mat;

namespace {

Mat random_mat(Rng& rng, int r, int c, double lo = -1.0, double hi = 1.0) {
    Mat m(r, c);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) m(i, j) = rng.uniform(lo, hi);
    return m;
}

// Three affine layers with softplus/tanh activations, squared-sum output.
// Parameter order: x, W0, b0, W1, b1, W2, b2.
int mlp3_loss(ad::Tape& t, const std::vector<int>& p) {
    int h = t.softplus(t.affine(p[0], p[1], p[2]));
    h = t.tanh_(t.affine(h, p[3], p[4]));
    int y = t.affine(h, p[5], p[6]);
    return t.sum_all(t.square(y));
}

} // namespace

TEST_SUITE_BEGIN("tensorgrad");

TEST_CASE("forward op values") {
    ad::Tape t;
    int zero = t.scalar(0.0);
    CHECK(t.val(t.softplus(zero))(0, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    int a = t.scalar(2.0), b = t.scalar(3.0);
    CHECK(t.val(t.add(a, b))(0, 0) == 5.0);
    CHECK(t.val(t.mul(a, b))(0, 0) == 6.0);
    CHECK(t.val(t.sub(a, b))(0, 0) == -1.0);
    CHECK(t.val(t.div(a, b))(0, 0) == doctest::Approx(2.0 / 3.0));
    CHECK(t.val(t.sigmoid(zero))(0, 0) == 0.5);
    CHECK(t.val(t.exp_(zero))(0, 0) == 1.0);

    // affine with identity weights reproduces the input
    Mat x = (Mat(2, 3) << 1, 2, 3, 4, 5, 6).finished();
    int xi = t.leaf(x);
    int eye = t.leaf(Mat::Identity(3, 3));
    int bias = t.leaf(Mat::Zero(1, 3));
    CHECK((t.val(t.affine(xi, eye, bias)) - x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("softplus is stable at extreme inputs") {
    ad::Tape t;
    Mat x(1, 2);
    x << -800.0, 800.0;
    const Mat& y = t.val(t.softplus(t.leaf(x)));
    CHECK(y(0, 0) == 0.0);
    CHECK(y(0, 1) == 800.0);
    CHECK(y.allFinite());
}

TEST_CASE("basic gradients") {
    ad::Tape t;
    int x = t.leaf(Mat::Constant(1, 1, 3.0), true);
    int L = t.sum_all(t.square(x));
    t.backward(L);
    CHECK(t.grad(x)(0, 0) == doctest::Approx(6.0).epsilon(1e-13));

    ad::Tape t2;
    int z = t2.leaf(Mat::Zero(1, 1), true);
    t2.backward(t2.sum_all(t2.tanh_(z)));
    CHECK(t2.grad(z)(0, 0) == doctest::Approx(1.0).epsilon(1e-13));
}

TEST_CASE("row broadcast in add and mul") {
    ad::Tape t;
    Mat x = (Mat(3, 2) << 1, 2, 3, 4, 5, 6).finished();
    Mat row = (Mat(1, 2) << 10, 20).finished();
    int xi = t.leaf(x, true);
    int ri = t.leaf(row, true);
    int s = t.add(xi, ri);
    CHECK(t.val(s)(2, 1) == 26.0);
    t.backward(t.sum_all(s));
    CHECK(t.grad(xi).sum() == 6.0);
    CHECK(t.grad(ri)(0, 0) == 3.0); // row grad sums over the 3 rows
    CHECK(t.grad(ri)(0, 1) == 3.0);
}

TEST_CASE("reshape uses row-major order") {
    ad::Tape t;
    Mat x = (Mat(2, 3) << 1, 2, 3, 4, 5, 6).finished();
    int y = t.reshape(t.leaf(x, true), 3, 2);
    Mat expect = (Mat(3, 2) << 1, 2, 3, 4, 5, 6).finished();
    CHECK((t.val(y) - expect).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("exclusive cumprod forward and division-free backward") {
    ad::Tape t;
    Mat x = (Mat(1, 3) << 2, 3, 4).finished();
    int xi = t.leaf(x, true);
    int y = t.cumprod_exclusive(xi);
    Mat expect = (Mat(1, 3) << 1, 2, 6).finished();
    CHECK((t.val(y) - expect).cwiseAbs().maxCoeff() == 0.0);
    t.backward(t.sum_all(y));
    CHECK(t.grad(xi)(0, 0) == 4.0); // d(x0 + x0 x1)/dx0 = 1 + x1
    CHECK(t.grad(xi)(0, 1) == 2.0);
    CHECK(t.grad(xi)(0, 2) == 0.0);

    // a zero entry must not break the backward pass
    ad::Tape t2;
    Mat xz = (Mat(1, 3) << 0, 3, 4).finished();
    int zi = t2.leaf(xz, true);
    t2.backward(t2.sum_all(t2.cumprod_exclusive(zi)));
    CHECK(t2.grad(zi)(0, 0) == 4.0);
    CHECK(t2.grad(zi)(0, 1) == 0.0);
    CHECK(t2.grad(zi).allFinite());
}

TEST_CASE("stop_gradient blocks the upstream path") {
    ad::Tape t;
    Mat x = (Mat(1, 3) << 1, -2, 3).finished();
    int xi = t.leaf(x, true);
    int L = t.sum_all(t.mul(xi, t.stop_gradient(xi)));
    t.backward(L);
    CHECK((t.grad(xi) - x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("shape mismatch is rejected with the op named") {
    ad::Tape t;
    int a = t.leaf(Mat::Zero(2, 3));
    int b = t.leaf(Mat::Zero(3, 2));
    CHECK_THROWS_AS(t.add(a, b), std::invalid_argument);
    try {
        t.add(a, b);
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("shape mismatch") != std::string::npos);
        CHECK(std::string(e.what()).find("add") != std::string::npos);
    }
    CHECK_THROWS_AS(t.matmul(a, a), std::invalid_argument);
    CHECK_THROWS_AS(t.slice_cols(a, 2, 5), std::invalid_argument);
    CHECK_THROWS_AS(t.reshape(a, 4, 2), std::invalid_argument);
}

TEST_CASE("backward is repeatable and unreachable params get exact zeros") {
    ad::Tape t;
    Rng rng(7, 0);
    int x = t.param(random_mat(rng, 2, 2), 0);
    int unused = t.param(random_mat(rng, 3, 1), 1);
    int L = t.sum_all(t.sigmoid(x));
    t.backward(L);
    Mat g1 = t.grad(x);
    t.backward(L);
    CHECK((t.grad(x) - g1).cwiseAbs().maxCoeff() == 0.0);
    CHECK(t.grad(unused).cwiseAbs().maxCoeff() == 0.0);
    auto pv = t.param_grads();
    REQUIRE(pv.size() == 2);
    CHECK(pv[1].second.size() == 3);
    CHECK(pv[1].second.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("gradient of a linear combination is the linear combination of gradients") {
    Rng rng(11, 0);
    Mat x0 = random_mat(rng, 3, 3);

    auto grad_of = [&](double ca, double cb) {
        ad::Tape t;
        int x = t.leaf(x0, true);
        int f = t.sum_all(t.square(x));
        int g = t.sum_all(t.sin_(x));
        t.backward(t.add(t.scale(f, ca), t.scale(g, cb)));
        return Mat(t.grad(x));
    };
    Mat gf = grad_of(1.0, 0.0);
    Mat gg = grad_of(0.0, 1.0);
    Mat combo = grad_of(2.0, 3.0);
    CHECK((combo - (2.0 * gf + 3.0 * gg)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("finite differences agree with backward on every op") {
    // Inputs kept away from relu/abs/max kinks so the central difference is valid.
    struct Case {
        const char* name;
        std::function<int(ad::Tape&, int)> f;
        double lo, hi;
    };
    std::vector<Case> cases = {
        {"softplus", [](ad::Tape& t, int x) { return t.softplus(x); }, -2, 2},
        {"sigmoid", [](ad::Tape& t, int x) { return t.sigmoid(x); }, -2, 2},
        {"tanh", [](ad::Tape& t, int x) { return t.tanh_(x); }, -2, 2},
        {"sin", [](ad::Tape& t, int x) { return t.sin_(x); }, -2, 2},
        {"cos", [](ad::Tape& t, int x) { return t.cos_(x); }, -2, 2},
        {"relu", [](ad::Tape& t, int x) { return t.relu(x); }, 0.5, 2},
        {"relu_neg", [](ad::Tape& t, int x) { return t.relu(x); }, -2, -0.5},
        {"exp", [](ad::Tape& t, int x) { return t.exp_(x); }, -2, 2},
        {"log", [](ad::Tape& t, int x) { return t.log_(x); }, 0.5, 3},
        {"abs", [](ad::Tape& t, int x) { return t.abs_(x); }, 0.5, 2},
        {"sqrt", [](ad::Tape& t, int x) { return t.sqrt_(x); }, 0.5, 3},
        {"square", [](ad::Tape& t, int x) { return t.square(x); }, -2, 2},
        {"neg", [](ad::Tape& t, int x) { return t.neg(x); }, -2, 2},
        {"scale", [](ad::Tape& t, int x) { return t.scale(x, -1.7); }, -2, 2},
        {"add_const", [](ad::Tape& t, int x) { return t.add_const(x, 0.3); }, -2, 2},
        {"max_const", [](ad::Tape& t, int x) { return t.max_const(x, 0.0); }, 0.5, 2},
        {"min_const", [](ad::Tape& t, int x) { return t.min_const(x, 0.0); }, 0.5, 2},
        {"clamp", [](ad::Tape& t, int x) { return t.clamp(x, -10, 10); }, -2, 2},
        {"row_sum", [](ad::Tape& t, int x) { return t.square(t.row_sum(x)); }, -2, 2},
        {"col_sum", [](ad::Tape& t, int x) { return t.square(t.col_sum(x)); }, -2, 2},
        {"slice", [](ad::Tape& t, int x) { return t.square(t.slice_cols(x, 1, 2)); }, -2, 2},
        {"reshape", [](ad::Tape& t, int x) { return t.square(t.reshape(x, 4, 3)); }, -2, 2},
        {"cumprod", [](ad::Tape& t, int x) { return t.cumprod_exclusive(x); }, 0.2, 1.5},
        {"concat", [](ad::Tape& t, int x) { return t.square(t.concat_cols(x, t.sin_(x))); }, -2, 2},
        {"mul_self", [](ad::Tape& t, int x) { return t.mul(x, t.sin_(x)); }, -2, 2},
        {"div", [](ad::Tape& t, int x) { return t.div(x, t.add_const(t.square(x), 1.0)); }, -2, 2},
    };
    Rng rng(123, 1);
    for (const auto& c : cases) {
        INFO("op: ", c.name);
        Mat x = random_mat(rng, 3, 4, c.lo, c.hi);
        double err = ad::finite_diff_check(
            [&](ad::Tape& t, const std::vector<int>& p) { return t.sum_all(c.f(t, p[0])); },
            {x}, 1e-5);
        CHECK(err < 1e-4);
    }
}

TEST_CASE("finite differences agree with backward on a 3-layer mlp, 20 seeds") {
    double worst = 0.0;
    for (uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed, 2);
        std::vector<Mat> params = {
            random_mat(rng, 3, 4),            // x
            random_mat(rng, 4, 6), random_mat(rng, 1, 6),
            random_mat(rng, 6, 5), random_mat(rng, 1, 5),
            random_mat(rng, 5, 2), random_mat(rng, 1, 2),
        };
        worst = std::max(worst, ad::finite_diff_check(mlp3_loss, params, 1e-4));
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("chunked gradient accumulation matches the full batch") {
    Rng rng(42, 3);
    Mat X = random_mat(rng, 16, 4);
    Mat W = random_mat(rng, 4, 3), b = random_mat(rng, 1, 3);

    auto run = [&](const Mat& xs) {
        ad::Tape t;
        int w = t.param(W, 0);
        int bi = t.param(b, 1);
        int L = t.sum_all(t.square(t.tanh_(t.affine(t.leaf(xs), w, bi))));
        t.backward(L);
        return t.param_grads();
    };

    auto full = run(X);
    std::vector<Mat> acc(2);
    ad::ParamStore::accumulate(acc, run(X.topRows(8)));
    ad::ParamStore::accumulate(acc, run(X.bottomRows(8)));
    double scale = full[0].second.cwiseAbs().maxCoeff();
    CHECK((acc[0] - full[0].second).cwiseAbs().maxCoeff() / scale < 1e-10);
    CHECK((acc[1] - full[1].second).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("adam first step moves by lr") {
    ad::ParamStore store;
    store.add("p", Mat::Zero(1, 1));
    ad::ParamStore::AdamConfig cfg;
    cfg.lr = 0.1;
    std::vector<Mat> grads = {Mat::Constant(1, 1, 1.0)};
    int skipped = store.adam_step(grads, cfg);
    CHECK(skipped == 0);
    CHECK(store.value("p")(0, 0) == doctest::Approx(-0.1).epsilon(1e-6));
}

TEST_CASE("adam with empty gradients is a no-op") {
    ad::ParamStore store;
    store.add("a", Mat::Constant(2, 2, 1.5));
    store.add("b", Mat::Constant(1, 3, -0.5));
    auto grads = store.zero_grads();
    CHECK(store.adam_step(grads, {}) == 0);
    CHECK(store.value("a")(0, 0) == 1.5);
    CHECK(store.entry(0).step == 0);
}

TEST_CASE("adam skips non-finite gradients and reports them") {
    ad::ParamStore store;
    store.add("good", Mat::Zero(1, 1));
    store.add("bad", Mat::Zero(1, 1));
    auto grads = store.zero_grads();
    grads[0] = Mat::Constant(1, 1, 1.0);
    grads[1] = Mat::Constant(1, 1, std::nan(""));
    CHECK(store.adam_step(grads, {}) == 1);
    CHECK(store.skipped_update_count() == 1);
    CHECK(store.value("bad")(0, 0) == 0.0);
    CHECK(store.value("good")(0, 0) != 0.0);
    CHECK(store.entry(1).step == 0);
}

TEST_CASE("adam drives a quadratic toward its minimum") {
    ad::ParamStore store;
    store.add("p", Mat::Constant(1, 1, -2.0));
    ad::ParamStore::AdamConfig cfg;
    cfg.lr = 0.05;
    double prev = 1e30;
    for (int it = 0; it < 400; ++it) {
        ad::Tape t;
        int p = t.param(store.value("p"), 0);
        int L = t.square(t.add_const(p, -3.0));
        t.backward(L);
        auto grads = store.zero_grads();
        ad::ParamStore::accumulate(grads, t.param_grads());
        store.adam_step(grads, cfg);
        if (it % 100 == 99) {
            double loss = std::pow(store.value("p")(0, 0) - 3.0, 2.0);
            CHECK(loss < prev);
            prev = loss;
        }
    }
    CHECK(store.value("p")(0, 0) == doctest::Approx(3.0).epsilon(0.05));
}

TEST_CASE("checkpoint round-trips values and optimizer state") {
    namespace fs = std::filesystem;
    auto path = (fs::temp_directory_path() / "ocsr_ckpt_test.bin").string();

    Rng rng(5, 4);
    ad::ParamStore a;
    a.add("w", random_mat(rng, 3, 2));
    a.add("b", random_mat(rng, 1, 2));
    ad::ParamStore::AdamConfig cfg;
    for (int it = 0; it < 3; ++it) {
        std::vector<Mat> g = {random_mat(rng, 3, 2), random_mat(rng, 1, 2)};
        a.adam_step(g, cfg);
    }
    a.save_and_sync(path);

    ad::ParamStore b;
    b.add("w", Mat::Zero(3, 2));
    b.add("b", Mat::Zero(1, 2));
    b.load(path);

    CHECK((a.value("w") - b.value("w")).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.entry(0).m - b.entry(0).m).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.entry(0).v - b.entry(0).v).cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.entry(0).step == b.entry(0).step);

    // one more identical step after save/load stays bit-exact
    std::vector<Mat> g = {Mat::Constant(3, 2, 0.25), Mat::Constant(1, 2, -0.5)};
    a.adam_step(g, cfg);
    b.adam_step(g, cfg);
    CHECK((a.value("w") - b.value("w")).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.value("b") - b.value("b")).cwiseAbs().maxCoeff() == 0.0);
    fs::remove(path);
}

TEST_CASE("checkpoint rejects corrupt files") {
    namespace fs = std::filesystem;
    auto path = (fs::temp_directory_path() / "ocsr_ckpt_bad.bin").string();
    {
        std::ofstream os(path, std::ios::binary);
        os << "NOPE1234";
    }
    ad::ParamStore s;
    s.add("w", Mat::Zero(1, 1));
    CHECK_THROWS_AS(s.load(path), std::runtime_error);
    CHECK_THROWS_AS(s.load(path + ".missing"), std::runtime_error);
    fs::remove(path);
}

TEST_CASE("rng streams are deterministic and independent") {
    Rng a(99, 0), b(99, 0), c(99, 1);
    bool same = true, diff = false;
    for (int i = 0; i < 64; ++i) {
        double va = a.uniform(), vb = b.uniform(), vc = c.uniform();
        same = same && (va == vb);
        diff = diff || (va != vc);
        CHECK(va >= 0.0);
        CHECK(va < 1.0);
    }
    CHECK(same);
    CHECK(diff);

    Rng d(7, 2);
    for (int i = 0; i < 100; ++i) {
        uint64_t v = d.below(13);
        CHECK(v < 13);
    }

    Rng e(3, 5);
    double sum = 0.0, sq = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        double v = e.normal();
        sum += v;
        sq += v * v;
    }
    CHECK(std::abs(sum / n) < 0.05);
    CHECK(std::abs(sq / n - 1.0) < 0.05);
}

TEST_SUITE_END();
