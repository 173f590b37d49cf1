#include "ocsr/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ocsr {

Eigen::Matrix3d rodrigues(const Vec3& omega) {
    double theta = omega.norm();
    Eigen::Matrix3d I = Eigen::Matrix3d::Identity();
    if (theta < 1e-12) return I;
    Vec3 a = omega / theta;
    Eigen::Matrix3d K;
    K << 0, -a.z(), a.y(), a.z(), 0, -a.x(), -a.y(), a.x(), 0;
    return I + std::sin(theta) * K + (1.0 - std::cos(theta)) * K * K;
}

void Camera::validate() const {
    double ortho = (R.transpose() * R - Eigen::Matrix3d::Identity()).norm();
    if (ortho >= 1e-8) throw std::runtime_error("camera: rotation not orthonormal");
    if (R.determinant() < 0) throw std::runtime_error("camera: rotation is a reflection");
    if (fx <= 0 || fy <= 0 || w <= 0 || h <= 0) throw std::runtime_error("camera: bad intrinsics");
}

Camera Camera::effective() const {
    Camera c = *this;
    Eigen::Matrix3d Rd = rodrigues(delta_omega);
    c.R = Rd * R;
    c.t = Rd * t + delta_trans;
    c.delta_omega.setZero();
    c.delta_trans.setZero();
    return c;
}

Vec3 Camera::center() const {
    Camera e = effective();
    return -e.R.transpose() * e.t;
}

void Camera::ray(double u, double v, Vec3& o, Vec3& d) const {
    Camera e = effective();
    Vec3 dir_cam((u - cx) / fx, (v - cy) / fy, 1.0);
    d = (e.R.transpose() * dir_cam).normalized();
    o = -e.R.transpose() * e.t;
}

bool ray_sphere_bounds(const Vec3& o, const Vec3& d, double radius, double& t_n, double& t_f) {
    double b = o.dot(d);
    double c = o.squaredNorm() - radius * radius;
    double disc = b * b - c;
    if (disc <= 0) return false;
    double sq = std::sqrt(disc);
    double t0 = -b - sq, t1 = -b + sq;
    if (t1 <= 1e-6) return false;
    t_n = std::max(t0, 1e-6);
    t_f = t1;
    return t_n < t_f;
}

double neus_alpha(double f_i, double f_next, double s) {
    if (s <= 0) throw std::invalid_argument("neus_alpha: s must be positive");
    auto sp = [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); };
    double a = 1.0 - std::exp(sp(-s * f_i) - sp(-s * f_next));
    return std::max(a, 0.0);
}

std::vector<double> composite_weights(const std::vector<double>& alphas) {
    std::vector<double> w(alphas.size());
    double T = 1.0;
    for (size_t i = 0; i < alphas.size(); ++i) {
        w[i] = T * alphas[i];
        T *= 1.0 - alphas[i];
    }
    return w;
}

std::vector<double> composite(const std::vector<double>& alphas,
                              const std::vector<std::vector<double>>& payload) {
    if (payload.size() != alphas.size())
        throw std::invalid_argument("composite: payload count mismatch");
    auto w = composite_weights(alphas);
    size_t ch = payload.empty() ? 0 : payload[0].size();
    std::vector<double> out(ch, 0.0);
    for (size_t i = 0; i < w.size(); ++i)
        for (size_t c = 0; c < ch; ++c) out[c] += w[i] * payload[i][c];
    return out;
}

RaySamples sample_ray(const std::function<Mat(const Mat&)>& sdf, const Vec3& o, const Vec3& d,
                      double t_n, double t_f, int n_coarse, int n_importance, double s_val,
                      Rng& rng, bool jitter) {
    if (!(t_n < t_f)) throw std::invalid_argument("sample_ray: need t_n < t_f");
    if (n_coarse < 1 || n_importance < 0) throw std::invalid_argument("sample_ray: bad counts");

    RaySamples rs;
    rs.o = o;
    rs.d = d;
    rs.t.reserve(size_t(n_coarse + n_importance));
    double span = t_f - t_n;
    for (int k = 0; k < n_coarse; ++k) {
        double u = jitter ? rng.uniform() : 0.5;
        rs.t.push_back(t_n + (k + u) / n_coarse * span);
    }

    if (n_importance > 0) {
        Mat P(n_coarse, 3);
        for (int k = 0; k < n_coarse; ++k) P.row(k) = (o + rs.t[size_t(k)] * d).transpose();
        Mat f = sdf(P);
        std::vector<double> alphas(size_t(n_coarse) - 1);
        for (int k = 0; k + 1 < n_coarse; ++k)
            alphas[size_t(k)] = neus_alpha(f(k, 0), f(k + 1, 0), s_val);
        auto w = composite_weights(alphas);
        // floor keeps the CDF supported everywhere even for empty space
        double floor = 0.01 / double(w.size());
        std::vector<double> cdf(w.size() + 1, 0.0);
        for (size_t i = 0; i < w.size(); ++i) cdf[i + 1] = cdf[i] + w[i] + floor;
        double total = cdf.back();

        for (int j = 0; j < n_importance; ++j) {
            double u = (j + (jitter ? rng.uniform() : 0.5)) / n_importance * total;
            size_t seg = size_t(std::upper_bound(cdf.begin(), cdf.end() - 1, u) - cdf.begin());
            seg = std::min(std::max(seg, size_t(1)), w.size()) - 1;
            double frac = (u - cdf[seg]) / std::max(cdf[seg + 1] - cdf[seg], 1e-300);
            rs.t.push_back(rs.t[seg] + frac * (rs.t[seg + 1] - rs.t[seg]));
        }
        std::sort(rs.t.begin(), rs.t.end());
        for (size_t i = 1; i < rs.t.size(); ++i)
            if (rs.t[i] <= rs.t[i - 1]) rs.t[i] = rs.t[i - 1] + 1e-9;
    }
    return rs;
}

int neus_alpha_cols(TapeCtx& cx, int sdf, int s_log_param) {
    auto& t = cx.t;
    int cols = int(t.val(sdf).cols());
    if (cols < 2) throw std::invalid_argument("neus_alpha_cols: need at least 2 samples");
    int s = t.exp_(cx.param(s_log_param));
    int f_i = t.slice_cols(sdf, 0, cols - 1);
    int f_next = t.slice_cols(sdf, 1, cols - 1);
    int neg_s = t.neg(s);
    int sp_i = t.softplus(t.mul(f_i, neg_s));
    int sp_next = t.softplus(t.mul(f_next, neg_s));
    int ratio = t.exp_(t.sub(sp_i, sp_next));
    return t.relu(t.add_const(t.neg(ratio), 1.0));
}

int composite_weights_t(TapeCtx& cx, int alphas) {
    auto& t = cx.t;
    int trans = t.cumprod_exclusive(t.add_const(t.neg(alphas), 1.0));
    return t.mul(trans, alphas);
}

int composite_t(TapeCtx& cx, int weights, int payload, int channels) {
    auto& t = cx.t;
    int rays = int(t.val(weights).rows());
    int samples = int(t.val(weights).cols());
    if (t.val(payload).rows() != Eigen::Index(rays) * samples)
        throw std::invalid_argument("composite_t: payload rows must be rays*samples");
    int out = -1;
    for (int c = 0; c < channels; ++c) {
        int pc = t.reshape(t.slice_cols(payload, c, 1), rays, samples);
        int rc = t.row_sum(t.mul(weights, pc));
        out = (c == 0) ? rc : t.concat_cols(out, rc);
    }
    return out;
}

TapeRotation rodrigues_t(TapeCtx& cx, int omega) {
    auto& t = cx.t;
    if (t.val(omega).rows() != 1 || t.val(omega).cols() != 3)
        throw std::invalid_argument("rodrigues_t: omega must be 1x3");
    int th2 = t.row_sum(t.square(omega));           // theta^2
    int th2s = t.add_const(th2, 1e-24);
    int th = t.sqrt_(th2s);
    int a = t.div(t.sin_(th), th);                  // sin(theta)/theta
    int b = t.div(t.add_const(t.neg(t.cos_(th)), 1.0), th2s);

    int wx = t.slice_cols(omega, 0, 1);
    int wy = t.slice_cols(omega, 1, 1);
    int wz = t.slice_cols(omega, 2, 1);
    int zero = t.scalar(0.0);
    // row-major [0 -z y; z 0 -x; -y x 0]
    int row = t.concat_cols(t.concat_cols(zero, t.neg(wz)), wy);
    row = t.concat_cols(row, t.concat_cols(t.concat_cols(wz, zero), t.neg(wx)));
    row = t.concat_cols(row, t.concat_cols(t.concat_cols(t.neg(wy), wx), zero));
    int K = t.reshape(row, 3, 3);
    int K2 = t.matmul(K, K);
    int I = t.leaf(Mat::Identity(3, 3));
    int aK = t.mul(K, a);
    int bK2 = t.mul(K2, b);
    TapeRotation out;
    out.R = t.add(t.add(I, aK), bK2);
    out.Rt = t.add(t.sub(I, aK), bK2); // K^T = -K, (K^2)^T = K^2
    return out;
}

SurfaceHit intersect_surface(const std::function<Mat(const Mat&)>& sdf, const Vec3& o,
                             const Vec3& d, double t_n, double t_f, int dense_samples,
                             double grad_h) {
    SurfaceHit out;
    if (!(t_n < t_f) || dense_samples < 2) return out;
    Mat P(dense_samples, 3);
    std::vector<double> depths(static_cast<size_t>(dense_samples), 0.0);
    for (int i = 0; i < dense_samples; ++i) {
        depths[size_t(i)] = t_n + (t_f - t_n) * i / double(dense_samples - 1);
        P.row(i) = (o + depths[size_t(i)] * d).transpose();
    }
    Mat f = sdf(P);
    int seg = -1;
    for (int i = 0; i + 1 < dense_samples; ++i)
        if (f(i, 0) > 0.0 && f(i + 1, 0) <= 0.0) {
            seg = i;
            break;
        }
    if (seg < 0) return out;

    double lo = depths[size_t(seg)], hi = depths[size_t(seg) + 1];
    double fmid = f(seg, 0);
    double tmid = lo;
    auto eval1 = [&](double tt) {
        Mat p = (o + tt * d).transpose();
        return sdf(p)(0, 0);
    };
    for (int it = 0; it < 20; ++it) {
        tmid = 0.5 * (lo + hi);
        fmid = eval1(tmid);
        if (std::abs(fmid) < 1e-6) break;
        if (fmid > 0.0)
            lo = tmid;
        else
            hi = tmid;
    }
    out.hit = true;
    out.t = tmid;
    out.x = o + tmid * d;

    Mat S(6, 3);
    for (int j = 0; j < 3; ++j) {
        Vec3 e = Vec3::Zero();
        e(j) = grad_h;
        S.row(2 * j) = (out.x + e).transpose();
        S.row(2 * j + 1) = (out.x - e).transpose();
    }
    Mat fs = sdf(S);
    Vec3 g((fs(0, 0) - fs(1, 0)) / (2 * grad_h), (fs(2, 0) - fs(3, 0)) / (2 * grad_h),
           (fs(4, 0) - fs(5, 0)) / (2 * grad_h));
    out.n = g.normalized();
    return out;
}

SurfaceHit intersect_surface(const FieldSet& fs, const Vec3& o, const Vec3& d, double t_n,
                             double t_f, int dense_samples) {
    return intersect_surface([&fs](const Mat& P) { return fs.eval_sdf_batch(P); }, o, d, t_n, t_f,
                             dense_samples, fs.config().fd_step);
}

} // namespace ocsr
