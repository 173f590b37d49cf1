#include "ocsr/fields.hpp"

#include <cmath>
#include <stdexcept>

namespace ocsr {

namespace {

Mat he_init(Rng& rng, int rows, int cols, double gain = 1.0) {
    Mat w(rows, cols);
    double std = gain * std::sqrt(2.0 / double(rows));
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) w(i, j) = rng.normal(0.0, std);
    return w;
}

// Damp the initial weights feeding from high-frequency encoding channels so
// the freshly initialized field is smooth; training grows them back as needed.
void damp_pe_rows(Mat& w, int offset, int levels) {
    for (int k = 0; k < levels; ++k) {
        double s = std::pow(2.0, -1.0 * k);
        w.middleRows(offset + 3 + 6 * k, 6) *= s;
    }
}

} // namespace

void FieldSet::register_params(uint64_t seed) {
    Rng rng(seed, 100);
    auto dense = [&](const std::string& name, int in, int out, double gain, int& wi, int& bi) {
        wi = ps_.add(name + ".w", he_init(rng, in, out, gain));
        bi = ps_.add(name + ".b", Mat::Zero(1, out));
    };

    sdf_w_.assign(size_t(cfg_.sdf_hidden), -1);
    sdf_b_.assign(size_t(cfg_.sdf_hidden), -1);
    int in = cfg_.enc_x_dim();
    for (int i = 0; i < cfg_.sdf_hidden; ++i) {
        bool skip = i == cfg_.skip_layer() && i > 0;
        int layer_in = skip ? cfg_.width + cfg_.enc_x_dim() : in;
        dense("sdf.l" + std::to_string(i), layer_in, cfg_.width, 1.0, sdf_w_[size_t(i)], sdf_b_[size_t(i)]);
        if (i == 0) damp_pe_rows(ps_.entry(sdf_w_[0]).value, 0, cfg_.pe_x);
        if (skip) damp_pe_rows(ps_.entry(sdf_w_[size_t(i)]).value, cfg_.width, cfg_.pe_x);
        in = cfg_.width;
    }
    dense("sdf.out", cfg_.width, 1, 0.5, sdf_out_w_, sdf_out_b_);
    dense("sdf.feat", cfg_.width, cfg_.feat_dim, 1.0, feat_out_w_, feat_out_b_);

    color_w_.assign(size_t(cfg_.color_hidden), -1);
    color_b_.assign(size_t(cfg_.color_hidden), -1);
    in = cfg_.enc_x_dim() + cfg_.enc_d_dim() + 3 + cfg_.feat_dim;
    for (int i = 0; i < cfg_.color_hidden; ++i) {
        dense("color.l" + std::to_string(i), in, cfg_.width, 1.0, color_w_[size_t(i)], color_b_[size_t(i)]);
        if (i == 0) {
            damp_pe_rows(ps_.entry(color_w_[0]).value, 0, cfg_.pe_x);
            damp_pe_rows(ps_.entry(color_w_[0]).value, cfg_.enc_x_dim(), cfg_.pe_d);
        }
        in = cfg_.width;
    }
    dense("color.out", cfg_.width, 3, 0.5, color_out_w_, color_out_b_);

    dense("sem", cfg_.feat_dim, 2, 0.5, sem_w_, sem_b_);
}

void FieldSet::bind() {
    sdf_w_.assign(size_t(cfg_.sdf_hidden), -1);
    sdf_b_.assign(size_t(cfg_.sdf_hidden), -1);
    for (int i = 0; i < cfg_.sdf_hidden; ++i) {
        sdf_w_[size_t(i)] = ps_.index("sdf.l" + std::to_string(i) + ".w");
        sdf_b_[size_t(i)] = ps_.index("sdf.l" + std::to_string(i) + ".b");
    }
    sdf_out_w_ = ps_.index("sdf.out.w");
    sdf_out_b_ = ps_.index("sdf.out.b");
    feat_out_w_ = ps_.index("sdf.feat.w");
    feat_out_b_ = ps_.index("sdf.feat.b");
    color_w_.assign(size_t(cfg_.color_hidden), -1);
    color_b_.assign(size_t(cfg_.color_hidden), -1);
    for (int i = 0; i < cfg_.color_hidden; ++i) {
        color_w_[size_t(i)] = ps_.index("color.l" + std::to_string(i) + ".w");
        color_b_[size_t(i)] = ps_.index("color.l" + std::to_string(i) + ".b");
    }
    color_out_w_ = ps_.index("color.out.w");
    color_out_b_ = ps_.index("color.out.b");
    sem_w_ = ps_.index("sem.w");
    sem_b_ = ps_.index("sem.b");
}

Mat FieldSet::eval_sdf_batch(const Mat& X) const {
    PlainCtx cx(ps_);
    return sdf_only(cx, X);
}

double FieldSet::eval_sdf(const Eigen::Vector3d& x) const {
    if (!x.allFinite()) throw std::invalid_argument("eval_sdf: non-finite input point");
    return eval_sdf_batch(x.transpose())(0, 0);
}

Mat FieldSet::eval_gradient_batch(const Mat& X) const {
    PlainCtx cx(ps_);
    return spatial_gradient(cx, Mat(X));
}

Eigen::Vector3d FieldSet::eval_gradient(const Eigen::Vector3d& x) const {
    return eval_gradient_batch(x.transpose()).row(0).transpose();
}

Mat FieldSet::eval_semantic_batch(const Mat& X) const {
    PlainCtx cx(ps_);
    Mat feat;
    sdf_feat(cx, Mat(X), static_cast<Mat*>(nullptr), &feat);
    return semantic_logits(cx, feat);
}

void FieldSet::init_geometric_sphere(double radius, uint64_t seed, int steps) {
    if (radius <= 0.0 || radius > 1.0)
        throw std::invalid_argument("init_geometric_sphere: radius must be in (0, 1]");
    Rng rng(seed, 101);
    ad::ParamStore::AdamConfig cfg;
    const double lr0 = 2e-3;
    const int batch = 1024;
    for (int it = 0; it < steps; ++it) {
        cfg.lr = lr0 * (0.05 + 0.95 * 0.5 * (1.0 + std::cos(std::numbers::pi * it / steps)));
        Mat X(batch, 3);
        Mat target(batch, 1);
        for (int i = 0; i < batch; ++i) {
            // radius mix: uniform for bulk coverage (extended past the eval
            // domain so the shell is not a fit boundary), plus stress on the
            // unit shell and the target surface where accuracy matters
            Eigen::Vector3d dir(rng.normal(), rng.normal(), rng.normal());
            dir.normalize();
            double r;
            switch (i % 3) {
            case 0: r = rng.uniform(0.0, 1.3); break;
            case 1: r = std::clamp(rng.normal(1.0, 0.12), 0.0, 1.3); break;
            default: r = std::clamp(rng.normal(radius, 0.12), 0.0, 1.3); break;
            }
            Eigen::Vector3d p = r * dir;
            X.row(i) = p.transpose();
            target(i, 0) = r - radius;
        }
        ad::Tape t;
        TapeCtx cx(t, ps_);
        int pred = sdf_only(cx, cx.leaf(X));
        int err = t.sub(pred, t.leaf(target));
        int loss = t.scale(t.sum_all(t.square(err)), 1.0 / batch);
        t.backward(loss);
        auto grads = ps_.zero_grads();
        ad::ParamStore::accumulate(grads, t.param_grads());
        ps_.adam_step(grads, cfg);
    }
}

} // namespace ocsr
