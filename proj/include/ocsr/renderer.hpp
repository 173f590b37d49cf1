#pragma once

#include "ocsr/ctx.hpp"
#include "ocsr/fields.hpp"
#include "ocsr/rng.hpp"

#include <functional>

namespace ocsr {

using Vec3 = Eigen::Vector3d;

Eigen::Matrix3d rodrigues(const Vec3& omega);

// Pinhole camera with a world->camera rigid pose (x_cam = R x + t) and an
// optional learnable pose delta applied on the camera side:
// x_cam = R_d (R x + t) + t_d.
struct Camera {
    Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
    Vec3 t = Vec3::Zero();
    double fx = 0, fy = 0, cx = 0, cy = 0;
    int w = 0, h = 0;
    Vec3 delta_omega = Vec3::Zero();
    Vec3 delta_trans = Vec3::Zero();

    void validate() const; // orthonormal R with det +1
    Camera effective() const; // pose delta folded in, delta zeroed
    Vec3 center() const;
    // u, v in pixels (may carry subpixel jitter); d unit in world frame
    void ray(double u, double v, Vec3& o, Vec3& d) const;
};

// Entry/exit depths of the ray against a centered sphere. False if it misses.
bool ray_sphere_bounds(const Vec3& o, const Vec3& d, double radius, double& t_n, double& t_f);

struct RaySamples {
    Vec3 o = Vec3::Zero();
    Vec3 d = Vec3::Zero();
    std::vector<double> t; // strictly increasing depths
    Eigen::Vector3d point(size_t i) const { return o + t[i] * d; }
};

// Stratified coarse samples plus one round of importance samples drawn from
// the coarse alpha weights. Counts are always n_coarse + n_importance; merged
// depths are sorted and equal neighbors nudged apart so the sequence is
// strictly increasing.
RaySamples sample_ray(const std::function<Mat(const Mat&)>& sdf, const Vec3& o, const Vec3& d,
                      double t_n, double t_f, int n_coarse, int n_importance, double s_val,
                      Rng& rng, bool jitter = true);

// alpha = max((Phi_s(f_i) - Phi_s(f_next)) / Phi_s(f_i), 0) with the logistic
// CDF Phi_s(x) = sigmoid(s x), evaluated in log space so large |s f| is exact.
double neus_alpha(double f_i, double f_next, double s);

// Transmittance weights w_i = alpha_i * prod_{j<i}(1 - alpha_j).
std::vector<double> composite_weights(const std::vector<double>& alphas);
// sum_i w_i * payload_i; payload may have any number of channels.
std::vector<double> composite(const std::vector<double>& alphas,
                              const std::vector<std::vector<double>>& payload);

// --- tape-side batched versions ---------------------------------------------
// sdf: R x (S+1) consecutive samples per ray -> alphas R x S.
int neus_alpha_cols(TapeCtx& cx, int sdf, int s_log_param);
// alphas R x S -> weights R x S.
int composite_weights_t(TapeCtx& cx, int alphas);
// weights R x S, payload (R*S) x C laid out ray-major -> rendered R x C.
int composite_t(TapeCtx& cx, int weights, int payload, int channels);

// Rotation from an axis-angle row vector (1x3 node) built on the tape;
// returns R_d and its transpose (both 3x3 nodes, transpose is the inverse
// rotation, computed as I - a K + b K^2 so no transpose op is needed).
struct TapeRotation {
    int R;
    int Rt;
};
TapeRotation rodrigues_t(TapeCtx& cx, int omega);

struct SurfaceHit {
    bool hit = false;
    Vec3 x = Vec3::Zero();
    Vec3 n = Vec3::Zero();
    double t = 0;
};

// First entering sign change along dense samples, refined by bisection until
// |sdf| < 1e-6 or 20 halvings. Normal from central differences.
SurfaceHit intersect_surface(const std::function<Mat(const Mat&)>& sdf, const Vec3& o,
                             const Vec3& d, double t_n, double t_f, int dense_samples = 128,
                             double grad_h = 1e-4);
SurfaceHit intersect_surface(const FieldSet& fs, const Vec3& o, const Vec3& d, double t_n,
                             double t_f, int dense_samples = 128);

} // namespace ocsr
