#pragma once

#include "ocsr/ctx.hpp"
#include "ocsr/rng.hpp"

#include <numbers>
#include <vector>

namespace ocsr {

struct FieldConfig {
    int pe_x = 6;        // positional-encoding levels for spatial points
    int pe_d = 4;        // levels for view directions
    int width = 64;
    int sdf_hidden = 4;  // skip connection feeds the input into layer sdf_hidden/2
    int color_hidden = 4;
    int feat_dim = 64;
    double fd_step = 1e-4; // spatial-gradient stencil half-width

    int enc_x_dim() const { return 3 + 6 * pe_x; }
    int enc_d_dim() const { return 3 + 6 * pe_d; }
    int skip_layer() const { return sdf_hidden / 2; }
};

// The three implicit fields: SDF geometry (scalar + feature vector), color
// (sigmoid rgb from x, d, normal, feature) and semantic logits (2 classes,
// a single extra layer on the feature vector). Parameters live in an external
// ParamStore so the optimizer and checkpoints see one flat name space.
class FieldSet {
public:
    FieldSet(ad::ParamStore& ps, FieldConfig cfg) : ps_(ps), cfg_(cfg) {}

    // Creates all field parameters. Call once on a fresh store; a store
    // loaded from a checkpoint already has them, use bind() instead.
    void register_params(uint64_t seed);
    // Resolve parameter indices against a store that already has them.
    void bind();

    const FieldConfig& config() const { return cfg_; }
    ad::ParamStore& params() { return ps_; }

    // gamma(x) = [x, sin(2^k pi x), cos(2^k pi x)]_{k<L}, columnwise blocks of 3.
    template <class Ctx> typename Ctx::V encode(Ctx& cx, typename Ctx::V x, int levels) const {
        auto out = x;
        for (int k = 0; k < levels; ++k) {
            double f = std::numbers::pi * double(1 << k);
            auto s = cx.scale(x, f);
            out = cx.concat(out, cx.sin(s));
            out = cx.concat(out, cx.cos(s));
        }
        return out;
    }

    // x: N x 3 raw points. Returns sdf (N x 1) and feature (N x feat_dim).
    template <class Ctx>
    void sdf_feat(Ctx& cx, typename Ctx::V x, typename Ctx::V* sdf, typename Ctx::V* feat) const {
        auto h = sdf_trunk(cx, x);
        if (sdf) *sdf = cx.affine(h, cx.param(sdf_out_w_), cx.param(sdf_out_b_));
        if (feat) *feat = cx.affine(h, cx.param(feat_out_w_), cx.param(feat_out_b_));
    }

    template <class Ctx> typename Ctx::V sdf_only(Ctx& cx, typename Ctx::V x) const {
        typename Ctx::V s{};
        sdf_feat(cx, x, &s, nullptr);
        return s;
    }

    // Central differences of six first-order forward passes; N x 3 result is
    // itself differentiable w.r.t. parameters and the input points.
    template <class Ctx> typename Ctx::V spatial_gradient(Ctx& cx, typename Ctx::V x) const {
        double h = cfg_.fd_step;
        typename Ctx::V cols{};
        for (int j = 0; j < 3; ++j) {
            Mat step = Mat::Zero(1, 3);
            step(0, j) = h;
            auto fp = sdf_only(cx, cx.add(x, cx.leaf(step)));
            auto fm = sdf_only(cx, cx.sub(x, cx.leaf(step)));
            auto g = cx.scale(cx.sub(fp, fm), 1.0 / (2.0 * h));
            cols = (j == 0) ? g : cx.concat(cols, g);
        }
        return cols;
    }

    // x, d raw (N x 3 each), n N x 3, feat N x feat_dim. Returns N x 3 rgb in [0,1].
    template <class Ctx>
    typename Ctx::V color(Ctx& cx, typename Ctx::V x, typename Ctx::V d, typename Ctx::V n,
                          typename Ctx::V feat) const {
        auto in = cx.concat(cx.concat(encode(cx, x, cfg_.pe_x), encode(cx, d, cfg_.pe_d)),
                            cx.concat(n, feat));
        auto h = in;
        for (int i = 0; i < cfg_.color_hidden; ++i)
            h = cx.relu(cx.affine(h, cx.param(color_w_[size_t(i)]), cx.param(color_b_[size_t(i)])));
        return cx.sigmoid(cx.affine(h, cx.param(color_out_w_), cx.param(color_out_b_)));
    }

    template <class Ctx> typename Ctx::V semantic_logits(Ctx& cx, typename Ctx::V feat) const {
        return cx.affine(feat, cx.param(sem_w_), cx.param(sem_b_));
    }

    // --- plain-eval conveniences (PlainCtx under the hood) -------------------
    Mat eval_sdf_batch(const Mat& X) const;              // N x 3 -> N x 1
    double eval_sdf(const Eigen::Vector3d& x) const;     // rejects non-finite input
    Mat eval_gradient_batch(const Mat& X) const;         // N x 3 -> N x 3
    Eigen::Vector3d eval_gradient(const Eigen::Vector3d& x) const;
    Mat eval_semantic_batch(const Mat& X) const;         // N x 3 -> N x 2 logits

    // Short Adam pre-fit of the sdf net toward ||x|| - radius.
    void init_geometric_sphere(double radius, uint64_t seed, int steps = 500);

private:
    template <class Ctx> typename Ctx::V sdf_trunk(Ctx& cx, typename Ctx::V x) const {
        auto enc = encode(cx, x, cfg_.pe_x);
        auto h = enc;
        for (int i = 0; i < cfg_.sdf_hidden; ++i) {
            if (i == cfg_.skip_layer() && i > 0) h = cx.concat(h, enc);
            h = cx.softplus(cx.affine(h, cx.param(sdf_w_[size_t(i)]), cx.param(sdf_b_[size_t(i)])));
        }
        return h;
    }

    ad::ParamStore& ps_;
    FieldConfig cfg_;
    std::vector<int> sdf_w_, sdf_b_, color_w_, color_b_;
    int sdf_out_w_ = -1, sdf_out_b_ = -1;
    int feat_out_w_ = -1, feat_out_b_ = -1;
    int color_out_w_ = -1, color_out_b_ = -1;
    int sem_w_ = -1, sem_b_ = -1;
};

} // namespace ocsr
