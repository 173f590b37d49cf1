#include "ocsr/hand.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace ocsr {

HandState HandState::rest(int n_frames) {
    HandState st;
    st.beta = Eigen::VectorXd::Zero(10);
    st.theta = Mat::Zero(16, 3);
    st.frames.assign(size_t(n_frames), HandFramePose{});
    return st;
}

namespace {

HandTemplate make_standard() {
    HandTemplate t;
    t.parent[0] = -1;
    for (int f = 0; f < 5; ++f) {
        t.parent[size_t(1 + 3 * f)] = 0;
        t.parent[size_t(2 + 3 * f)] = 1 + 3 * f;
        t.parent[size_t(3 + 3 * f)] = 2 + 3 * f;
    }
    t.offsets = Mat::Zero(16, 3);
    t.tip = Mat::Zero(5, 3);
    // finger rays in the palm plane (fingers along +x, palm normal +z)
    const Vec3 mcp[5] = {
        {0.09, 0.13, 0.0},   // thumb
        {0.22, 0.065, 0.0},  // index
        {0.23, 0.0, 0.0},    // middle
        {0.22, -0.065, 0.0}, // ring
        {0.20, -0.13, 0.0},  // pinky
    };
    Vec3 dir[5] = {
        {0.55, 0.83, 0.0}, {1.0, 0.14, 0.0}, {1.0, 0.0, 0.0}, {1.0, -0.14, 0.0}, {1.0, -0.28, 0.0}};
    const double len[5][3] = {
        {0.100, 0.090, 0.075}, // thumb
        {0.110, 0.085, 0.070}, // index
        {0.115, 0.090, 0.072}, // middle
        {0.110, 0.085, 0.070}, // ring
        {0.090, 0.070, 0.060}, // pinky
    };
    for (int f = 0; f < 5; ++f) {
        dir[f].normalize();
        t.offsets.row(1 + 3 * f) = mcp[f].transpose();
        t.offsets.row(2 + 3 * f) = (len[f][0] * dir[f]).transpose();
        t.offsets.row(3 + 3 * f) = (len[f][1] * dir[f]).transpose();
        t.tip.row(f) = (len[f][2] * dir[f]).transpose();
    }
    return t;
}

} // namespace

const HandTemplate& HandTemplate::standard() {
    static const HandTemplate t = make_standard();
    return t;
}

HandTemplate HandTemplate::scaled(double s) const {
    HandTemplate t = *this;
    t.offsets *= s;
    t.tip *= s;
    t.palm_radius *= s;
    t.finger_radius *= s;
    return t;
}

Vec3 HandTemplate::curl_axis(int finger) const {
    Vec3 d = offsets.row(2 + 3 * finger).transpose();
    return Vec3::UnitZ().cross(d).normalized();
}

Mat HandTemplate::scaled_offsets(const Eigen::VectorXd& beta) const {
    if (beta.size() != 10) throw std::invalid_argument("hand: beta must have 10 entries");
    Mat o = offsets;
    for (int f = 0; f < 5; ++f) {
        o.row(1 + 3 * f) *= 1.0 + beta[2 * f];
        o.row(2 + 3 * f) *= 1.0 + beta[2 * f + 1];
        o.row(3 + 3 * f) *= 1.0 + beta[2 * f + 1];
    }
    return o;
}

Mat HandTemplate::scaled_tip(const Eigen::VectorXd& beta) const {
    Mat tp = tip;
    for (int f = 0; f < 5; ++f) tp.row(f) *= 1.0 + beta[2 * f + 1];
    return tp;
}

JointTransforms forward_kinematics_full(const HandTemplate& tpl, const HandState& st, int frame) {
    if (frame < 0 || size_t(frame) >= st.frames.size())
        throw std::out_of_range("forward_kinematics: frame index");
    if (st.theta.rows() != 16 || st.theta.cols() != 3)
        throw std::invalid_argument("hand: theta must be 16x3");
    const Mat off = tpl.scaled_offsets(st.beta);
    const auto& fp = st.frames[size_t(frame)];
    const Eigen::Matrix3d Rk = rodrigues(fp.omega);

    JointTransforms out;
    out.R.resize(16);
    out.p = Mat::Zero(16, 3);
    for (int j = 0; j < 16; ++j) {
        Eigen::Matrix3d Rp = tpl.parent[size_t(j)] < 0 ? Rk : out.R[size_t(tpl.parent[size_t(j)])];
        Vec3 pp = tpl.parent[size_t(j)] < 0 ? fp.T : Vec3(out.p.row(tpl.parent[size_t(j)]).transpose());
        out.p.row(j) = (pp + Rp * off.row(j).transpose()).transpose();
        out.R[size_t(j)] = Rp * rodrigues(st.theta.row(j).transpose());
    }
    return out;
}

Mat forward_kinematics(const HandTemplate& tpl, const HandState& st, int frame) {
    return forward_kinematics_full(tpl, st, frame).p;
}

namespace {

// low-poly capsule from a to b; every vertex is tagged with `joint`
void add_capsule(TriMesh& mesh, std::vector<int>& vj, const Vec3& a, const Vec3& b, double r,
                 int joint) {
    Vec3 z = b - a;
    double len = z.norm();
    z = len > 1e-12 ? Vec3(z / len) : Vec3::UnitX();
    Vec3 u = std::abs(z.z()) < 0.9 ? Vec3::UnitZ().cross(z).normalized()
                                   : Vec3::UnitX().cross(z).normalized();
    Vec3 v = z.cross(u);

    const int nseg = 5;
    const double c45 = std::sqrt(0.5);
    // 4 rings between the two pole vertices
    struct Ring {
        Vec3 center;
        double radius;
    };
    const Ring rings[4] = {
        {a - c45 * r * z, c45 * r}, {a, r}, {b, r}, {b + c45 * r * z, c45 * r}};

    int base = int(mesh.verts.size());
    mesh.verts.push_back(a - r * z); // bottom pole
    for (const auto& ring : rings)
        for (int s = 0; s < nseg; ++s) {
            double ang = 2.0 * M_PI * s / nseg;
            mesh.verts.push_back(ring.center + ring.radius * (std::cos(ang) * u + std::sin(ang) * v));
        }
    mesh.verts.push_back(b + r * z); // top pole
    vj.insert(vj.end(), size_t(2 + 4 * nseg), joint);

    auto rv = [&](int ring, int s) { return base + 1 + ring * nseg + (s % nseg); };
    for (int s = 0; s < nseg; ++s) mesh.tris.push_back({base, rv(0, s + 1), rv(0, s)});
    for (int ring = 0; ring < 3; ++ring)
        for (int s = 0; s < nseg; ++s) {
            mesh.tris.push_back({rv(ring, s), rv(ring, s + 1), rv(ring + 1, s)});
            mesh.tris.push_back({rv(ring, s + 1), rv(ring + 1, s + 1), rv(ring + 1, s)});
        }
    int top = base + 1 + 4 * nseg;
    for (int s = 0; s < nseg; ++s) mesh.tris.push_back({top, rv(3, s), rv(3, s + 1)});
}

} // namespace

SkinnedHand build_skin(const HandTemplate& tpl, const Eigen::VectorXd& beta) {
    const Mat off = tpl.scaled_offsets(beta);
    const Mat tip = tpl.scaled_tip(beta);
    // rest joint positions (theta = 0, identity frame)
    Mat joints = Mat::Zero(16, 3);
    for (int j = 1; j < 16; ++j)
        joints.row(j) = joints.row(tpl.parent[size_t(j)]) + off.row(j);

    SkinnedHand sk;
    for (int f = 0; f < 5; ++f) {
        int mcp = 1 + 3 * f, pip = 2 + 3 * f, dip = 3 + 3 * f;
        Vec3 pw = joints.row(0).transpose(), pm = joints.row(mcp).transpose(),
             pp = joints.row(pip).transpose(), pd = joints.row(dip).transpose();
        Vec3 pt = pd + Vec3(tip.row(f).transpose());
        add_capsule(sk.rest_mesh, sk.vertex_joint, pw, pm, tpl.palm_radius, 0);
        add_capsule(sk.rest_mesh, sk.vertex_joint, pm, pp, tpl.finger_radius, mcp);
        add_capsule(sk.rest_mesh, sk.vertex_joint, pp, pd, tpl.finger_radius, pip);
        add_capsule(sk.rest_mesh, sk.vertex_joint, pd, pt, tpl.finger_radius, dip);
    }
    return sk;
}

TriMesh skin_mesh(const HandTemplate& tpl, const HandState& st, int frame) {
    SkinnedHand sk = build_skin(tpl, st.beta);
    JointTransforms posed = forward_kinematics_full(tpl, st, frame);

    HandState rest = st;
    rest.theta.setZero();
    rest.frames.assign(1, HandFramePose{});
    JointTransforms ref = forward_kinematics_full(tpl, rest, 0);

    TriMesh out = sk.rest_mesh;
    for (size_t i = 0; i < out.verts.size(); ++i) {
        int j = sk.vertex_joint[i];
        // single-joint LBS: v' = G_j (G_j^rest)^{-1} v
        Vec3 local = ref.R[size_t(j)].transpose() * (out.verts[i] - Vec3(ref.p.row(j).transpose()));
        out.verts[i] = posed.R[size_t(j)] * local + Vec3(posed.p.row(j).transpose());
    }
    return out;
}

std::vector<Capsule> hand_capsules(const HandTemplate& tpl, const HandState& st, int frame) {
    JointTransforms jt = forward_kinematics_full(tpl, st, frame);
    const Mat tip = tpl.scaled_tip(st.beta);
    std::vector<Capsule> caps;
    caps.reserve(20);
    for (int f = 0; f < 5; ++f) {
        int mcp = 1 + 3 * f, pip = 2 + 3 * f, dip = 3 + 3 * f;
        Vec3 pw = jt.p.row(0).transpose(), pm = jt.p.row(mcp).transpose(),
             pp = jt.p.row(pip).transpose(), pd = jt.p.row(dip).transpose();
        Vec3 pt = pd + jt.R[size_t(dip)] * Vec3(tip.row(f).transpose());
        caps.push_back({pw, pm, tpl.palm_radius});
        caps.push_back({pm, pp, tpl.finger_radius});
        caps.push_back({pp, pd, tpl.finger_radius});
        caps.push_back({pd, pt, tpl.finger_radius});
    }
    return caps;
}

double capsules_sdf(const std::vector<Capsule>& caps, const Vec3& p) {
    double best = std::numeric_limits<double>::max();
    for (const auto& c : caps) {
        Vec3 ab = c.b - c.a, ap = p - c.a;
        double t = ab.squaredNorm() > 0 ? std::clamp(ap.dot(ab) / ab.squaredNorm(), 0.0, 1.0) : 0.0;
        best = std::min(best, (ap - t * ab).norm() - c.r);
    }
    return best;
}

ProjectedJoints project_joints(const Mat& joints, const Camera& cam) {
    if (joints.cols() != 3) throw std::invalid_argument("project_joints: joints must be Nx3");
    Camera c = cam.effective();
    ProjectedJoints out;
    out.uv = Mat::Zero(joints.rows(), 2);
    out.valid.assign(size_t(joints.rows()), false);
    for (Eigen::Index i = 0; i < joints.rows(); ++i) {
        Vec3 xc = c.R * Vec3(joints.row(i).transpose()) + c.t;
        if (xc.z() <= 1e-9) continue;
        out.uv(i, 0) = c.fx * xc.x() / xc.z() + c.cx;
        out.uv(i, 1) = c.fy * xc.y() / xc.z() + c.cy;
        out.valid[size_t(i)] = true;
    }
    return out;
}

HandState average_states(const std::vector<HandState>& estimates) {
    if (estimates.empty()) throw std::invalid_argument("average_states: no estimates");
    HandState out = HandState::rest(int(estimates.size()));
    for (size_t k = 0; k < estimates.size(); ++k) {
        const auto& e = estimates[k];
        if (e.frames.size() != 1)
            throw std::invalid_argument("average_states: one frame per estimate expected");
        out.beta += e.beta;
        out.theta += e.theta;
        out.frames[k] = e.frames[0];
    }
    out.beta /= double(estimates.size());
    out.theta /= double(estimates.size());
    return out;
}

namespace {

// parameter packing: [omega_k, T_k]*N then optionally beta(10), theta(48)
Eigen::VectorXd pack(const HandState& st, bool with_shape) {
    const int n = int(st.frames.size());
    Eigen::VectorXd x(6 * n + (with_shape ? 58 : 0));
    for (int k = 0; k < n; ++k) {
        x.segment<3>(6 * k) = st.frames[size_t(k)].omega;
        x.segment<3>(6 * k + 3) = st.frames[size_t(k)].T;
    }
    if (with_shape) {
        x.segment<10>(6 * n) = st.beta;
        for (int j = 0; j < 16; ++j) x.segment<3>(6 * n + 10 + 3 * j) = st.theta.row(j).transpose();
    }
    return x;
}

void unpack(const Eigen::VectorXd& x, bool with_shape, HandState& st) {
    const int n = int(st.frames.size());
    for (int k = 0; k < n; ++k) {
        st.frames[size_t(k)].omega = x.segment<3>(6 * k);
        st.frames[size_t(k)].T = x.segment<3>(6 * k + 3);
    }
    if (with_shape) {
        st.beta = x.segment<10>(6 * n);
        for (int j = 0; j < 16; ++j) st.theta.row(j) = x.segment<3>(6 * n + 10 + 3 * j).transpose();
    }
}

struct ResidualBlocks {
    // per (frame, joint) 2-vector reprojection errors with confidences;
    // invalid joints are dropped
    std::vector<Eigen::Vector2d> err;
    std::vector<double> conf;
    std::vector<Eigen::Vector<double, 6>> temporal; // pose differences
};

ResidualBlocks eval_blocks(const HandTemplate& tpl, const HandState& st,
                           const std::vector<KeypointTrack>& tracks,
                           const std::vector<Camera>& cams) {
    ResidualBlocks rb;
    const int n = int(st.frames.size());
    for (int k = 0; k < n; ++k) {
        ProjectedJoints pj = project_joints(forward_kinematics(tpl, st, k), cams[size_t(k)]);
        for (int i = 0; i < 16; ++i) {
            if (!pj.valid[size_t(i)]) continue;
            rb.err.push_back(pj.uv.row(i).transpose() - tracks[size_t(k)].uv.row(i).transpose());
            rb.conf.push_back(tracks[size_t(k)].conf[i]);
        }
    }
    for (int k = 1; k < n; ++k) {
        Eigen::Vector<double, 6> d;
        d << st.frames[size_t(k)].omega - st.frames[size_t(k - 1)].omega,
            st.frames[size_t(k)].T - st.frames[size_t(k - 1)].T;
        rb.temporal.push_back(d);
    }
    return rb;
}

} // namespace

double hand_fit_loss(const HandTemplate& tpl, const HandState& st,
                     const std::vector<KeypointTrack>& tracks, const std::vector<Camera>& cams,
                     const FitOptions& opt) {
    ResidualBlocks rb = eval_blocks(tpl, st, tracks, cams);
    double loss = 0.0;
    for (size_t i = 0; i < rb.err.size(); ++i) loss += rb.conf[i] * rb.err[i].norm();
    loss += opt.lambda_reg * (st.beta.squaredNorm() + st.theta.squaredNorm());
    for (const auto& d : rb.temporal) loss += opt.lambda_temp * d.norm();
    return loss;
}

namespace {

// IRLS residual vector: squared norm equals the robust objective at the
// linearization point (weights frozen from `ref`).
Eigen::VectorXd weighted_residual(const HandTemplate& tpl, const HandState& st,
                                  const std::vector<KeypointTrack>& tracks,
                                  const std::vector<Camera>& cams, const FitOptions& opt,
                                  const ResidualBlocks& ref) {
    constexpr double kMinNorm = 1e-6;
    ResidualBlocks rb = eval_blocks(tpl, st, tracks, cams);
    if (rb.err.size() != ref.err.size())
        throw std::runtime_error("hand fit: joint visibility changed during linearization");
    Eigen::Index m = Eigen::Index(2 * rb.err.size() + 58 + 6 * rb.temporal.size());
    Eigen::VectorXd r(m);
    Eigen::Index at = 0;
    for (size_t i = 0; i < rb.err.size(); ++i) {
        double w = std::sqrt(rb.conf[i] / std::max(ref.err[i].norm(), kMinNorm));
        r.segment<2>(at) = w * rb.err[i];
        at += 2;
    }
    double sreg = std::sqrt(opt.lambda_reg);
    r.segment<10>(at) = sreg * st.beta;
    at += 10;
    for (int j = 0; j < 16; ++j, at += 3) r.segment<3>(at) = sreg * st.theta.row(j).transpose();
    for (size_t k = 0; k < rb.temporal.size(); ++k, at += 6) {
        double w = std::sqrt(opt.lambda_temp / std::max(ref.temporal[k].norm(), kMinNorm));
        r.segment<6>(at) = w * rb.temporal[k];
    }
    return r;
}

// one Levenberg-Marquardt stage over the packed parameters
int lm_stage(const HandTemplate& tpl, HandState& st, const std::vector<KeypointTrack>& tracks,
             const std::vector<Camera>& cams, const FitOptions& opt, bool with_shape,
             bool* diverged) {
    Eigen::VectorXd x = pack(st, with_shape);
    double loss = hand_fit_loss(tpl, st, tracks, cams, opt);
    double mu = 1e-3;
    int iters = 0, rejected_run = 0;

    for (int it = 0; it < opt.max_iters; ++it) {
        ResidualBlocks ref = eval_blocks(tpl, st, tracks, cams);
        Eigen::VectorXd r0 = weighted_residual(tpl, st, tracks, cams, opt, ref);
        Mat J(r0.size(), x.size());
        const double h = 1e-6;
        HandState probe = st;
        for (Eigen::Index p = 0; p < x.size(); ++p) {
            Eigen::VectorXd xp = x;
            xp[p] += h;
            unpack(xp, with_shape, probe);
            J.col(p) = (weighted_residual(tpl, probe, tracks, cams, opt, ref) - r0) / h;
        }
        Mat JtJ = J.transpose() * J;
        Eigen::VectorXd g = J.transpose() * r0;

        bool accepted = false;
        for (int tries = 0; tries < 12 && !accepted; ++tries) {
            Mat A = JtJ;
            A.diagonal().array() += mu;
            Eigen::VectorXd dx = A.ldlt().solve(-g);
            Eigen::VectorXd xn = x + dx;
            unpack(xn, with_shape, probe);
            double ln = hand_fit_loss(tpl, probe, tracks, cams, opt);
            if (std::isfinite(ln) && ln < loss) {
                x = xn;
                st = probe;
                double drop = loss - ln;
                loss = ln;
                mu = std::max(mu / 3.0, 1e-9);
                accepted = true;
                rejected_run = 0;
                if (drop < 1e-12 * (1.0 + loss)) return iters + 1;
            } else {
                mu *= 4.0;
                ++rejected_run;
                if (rejected_run >= opt.divergence_patience) {
                    std::fprintf(stderr,
                                 "hand fit: no improving step after %d attempts "
                                 "(stage=%d iter=%d loss=%.6g mu=%.3g)\n",
                                 rejected_run, with_shape ? 2 : 1, it, loss, mu);
                    if (diverged) *diverged = true;
                    return iters;
                }
            }
        }
        ++iters;
        if (!accepted) break; // damping exhausted at this linearization
    }
    return iters;
}

} // namespace

HandState fit_hand_sequence(const HandTemplate& tpl, const std::vector<KeypointTrack>& tracks,
                            const std::vector<Camera>& cams, const HandState& init,
                            const FitOptions& opt, FitReport* report) {
    if (tracks.size() < 2) throw std::invalid_argument("fit_hand_sequence: need at least 2 frames");
    if (tracks.size() != cams.size() || tracks.size() != init.frames.size())
        throw std::invalid_argument("fit_hand_sequence: tracks/cams/frames size mismatch");

    HandState st = init;
    FitReport rep;
    rep.initial_loss = hand_fit_loss(tpl, st, tracks, cams, opt);
    rep.stage1_iters = lm_stage(tpl, st, tracks, cams, opt, false, &rep.diverged);
    rep.stage1_loss = hand_fit_loss(tpl, st, tracks, cams, opt);
    if (!rep.diverged) rep.stage2_iters = lm_stage(tpl, st, tracks, cams, opt, true, &rep.diverged);
    rep.final_loss = hand_fit_loss(tpl, st, tracks, cams, opt);
    if (opt.verbose)
        std::fprintf(stderr, "hand fit: loss %.6g -> %.6g -> %.6g (%d + %d iters)\n",
                     rep.initial_loss, rep.stage1_loss, rep.final_loss, rep.stage1_iters,
                     rep.stage2_iters);
    if (report) *report = rep;
    return st;
}

} // namespace ocsr
