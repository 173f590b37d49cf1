#include <doctest.h>

#include "ocsr/hand.hpp"
#include "ocsr/rng.hpp"

#include <Eigen/Geometry>
#include <cmath>

using namespace ocsr;

namespace {

// template joint positions by explicit chain summation
Mat template_joints(const HandTemplate& tpl) {
    Mat j = Mat::Zero(16, 3);
    for (int f = 0; f < 5; ++f) {
        j.row(1 + 3 * f) = tpl.offsets.row(1 + 3 * f);
        j.row(2 + 3 * f) = j.row(1 + 3 * f) + tpl.offsets.row(2 + 3 * f);
        j.row(3 + 3 * f) = j.row(2 + 3 * f) + tpl.offsets.row(3 + 3 * f);
    }
    return j;
}

Camera test_camera() {
    Camera c;
    c.R = Eigen::Matrix3d::Identity();
    c.t = Vec3(0, 0, 1.5);
    c.fx = c.fy = 300;
    c.cx = c.cy = 128;
    c.w = c.h = 256;
    return c;
}

// mean joint error after per-frame similarity alignment, normalized by the
// reference bounding-box diagonal
double pa_mpjpe_frac(const Mat& est, const Mat& ref) {
    Eigen::Matrix3Xd src = est.transpose(), dst = ref.transpose();
    Eigen::Matrix4d T = Eigen::umeyama(src, dst, true);
    double err = 0.0;
    for (Eigen::Index i = 0; i < src.cols(); ++i) {
        Vec3 a = T.topLeftCorner<3, 3>() * src.col(i) + T.topRightCorner<3, 1>();
        err += (a - dst.col(i)).norm();
    }
    err /= double(src.cols());
    Vec3 lo = ref.colwise().minCoeff().transpose(), hi = ref.colwise().maxCoeff().transpose();
    return err / (hi - lo).norm();
}

} // namespace

TEST_SUITE("hand") {

TEST_CASE("rest pose reproduces the template joints") {
    const auto& tpl = HandTemplate::standard();
    HandState st = HandState::rest(1);
    Mat j = forward_kinematics(tpl, st, 0);
    Mat ref = template_joints(tpl);
    CHECK((j - ref).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("global rotation and translation act rigidly on all joints") {
    const auto& tpl = HandTemplate::standard();
    Mat ref = template_joints(tpl);

    HandState st = HandState::rest(1);
    st.frames[0].omega = Vec3(0, 0, M_PI / 2);
    Mat j = forward_kinematics(tpl, st, 0);
    Eigen::Matrix3d Rz; // explicit 90 degree z rotation
    Rz << 0, -1, 0, 1, 0, 0, 0, 0, 1;
    for (int i = 0; i < 16; ++i) {
        Vec3 want = Rz * Vec3(ref.row(i).transpose());
        CHECK((Vec3(j.row(i).transpose()) - want).norm() < 1e-12);
    }

    st.frames[0].omega.setZero();
    st.frames[0].T = Vec3(0.1, 0, 0);
    j = forward_kinematics(tpl, st, 0);
    for (int i = 0; i < 16; ++i)
        CHECK((Vec3(j.row(i).transpose()) - Vec3(ref.row(i).transpose()) - Vec3(0.1, 0, 0)).norm() <
              1e-15);
}

TEST_CASE("bone scales stretch the right segments") {
    const auto& tpl = HandTemplate::standard();
    HandState st = HandState::rest(1);
    st.beta[2] = 0.3;  // index palm bone
    st.beta[3] = -0.2; // index phalanges
    Mat j = forward_kinematics(tpl, st, 0);
    Vec3 mcp = 1.3 * tpl.offsets.row(4).transpose();
    Vec3 pip = mcp + 0.8 * Vec3(tpl.offsets.row(5).transpose());
    Vec3 dip = pip + 0.8 * Vec3(tpl.offsets.row(6).transpose());
    CHECK((Vec3(j.row(4).transpose()) - mcp).norm() < 1e-14);
    CHECK((Vec3(j.row(5).transpose()) - pip).norm() < 1e-14);
    CHECK((Vec3(j.row(6).transpose()) - dip).norm() < 1e-14);
    // untouched finger stays put
    CHECK((j.row(10) - template_joints(tpl).row(10)).norm() < 1e-14);
}

TEST_CASE("rest pose skinning is the identity") {
    const auto& tpl = HandTemplate::standard();
    HandState st = HandState::rest(1);
    SkinnedHand sk = build_skin(tpl, st.beta);
    TriMesh posed = skin_mesh(tpl, st, 0);
    REQUIRE(posed.verts.size() == sk.rest_mesh.verts.size());
    double worst = 0.0;
    for (size_t i = 0; i < posed.verts.size(); ++i)
        worst = std::max(worst, (posed.verts[i] - sk.rest_mesh.verts[i]).norm());
    CHECK(worst < 1e-15);
    // capsule skin is closed and stays near the advertised triangle budget
    CHECK(posed.is_closed());
    CHECK(posed.tri_count() == 800);
    for (int vj : sk.vertex_joint) {
        CHECK(vj >= 0);
        CHECK(vj < 16);
    }
}

TEST_CASE("rigid global motion moves every skin vertex rigidly") {
    const auto& tpl = HandTemplate::standard();
    HandState st = HandState::rest(1);
    st.theta(5, 1) = 0.6; // a bent finger rides along
    st.beta[0] = 0.15;
    TriMesh base = skin_mesh(tpl, st, 0);

    HandState moved = st;
    moved.frames[0].omega = Vec3(0.3, -0.2, 0.5);
    moved.frames[0].T = Vec3(0.05, -0.1, 0.2);
    TriMesh posed = skin_mesh(tpl, moved, 0);
    Eigen::Matrix3d R = rodrigues(moved.frames[0].omega);
    double worst = 0.0;
    for (size_t i = 0; i < base.verts.size(); ++i)
        worst = std::max(worst,
                         (posed.verts[i] - (R * base.verts[i] + moved.frames[0].T)).norm());
    CHECK(worst < 1e-12);
}

TEST_CASE("vertices bound to a leaf joint follow its frame") {
    const auto& tpl = HandTemplate::standard();
    const int dip = 6; // index DIP
    const double a = 0.7;
    HandState st = HandState::rest(1);
    st.theta(dip, 2) = a; // rotate about z only

    SkinnedHand sk = build_skin(tpl, st.beta);
    TriMesh posed = skin_mesh(tpl, st, 0);
    Eigen::Matrix3d Rz;
    Rz << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
    Vec3 p_dip = template_joints(tpl).row(dip).transpose();
    int n = 0;
    for (size_t i = 0; i < posed.verts.size(); ++i) {
        if (sk.vertex_joint[i] != dip) continue;
        Vec3 want = Rz * (sk.rest_mesh.verts[i] - p_dip) + p_dip;
        CHECK((posed.verts[i] - want).norm() < 1e-12);
        ++n;
    }
    CHECK(n == 22); // one capsule worth of vertices
    // everything proximal to the bend is untouched
    for (size_t i = 0; i < posed.verts.size(); ++i)
        if (sk.vertex_joint[i] == 0 || sk.vertex_joint[i] == 4)
            CHECK((posed.verts[i] - sk.rest_mesh.verts[i]).norm() < 1e-15);
}

TEST_CASE("pinhole projection of joints") {
    Camera c = test_camera();
    c.t.setZero();
    c.fx = 100;
    c.fy = 120;
    c.cx = 32;
    c.cy = 24;
    Mat pts(3, 3);
    pts << 0, 0, 1, /* optical axis */
        0.1, 0, 1,  /* off axis */
        0, 0, -0.5; /* behind */
    ProjectedJoints pj = project_joints(pts, c);
    CHECK(pj.valid[0]);
    CHECK(pj.uv(0, 0) == doctest::Approx(32.0));
    CHECK(pj.uv(0, 1) == doctest::Approx(24.0));
    CHECK(pj.valid[1]);
    CHECK(pj.uv(1, 0) == doctest::Approx(42.0));
    CHECK_FALSE(pj.valid[2]);
}

TEST_CASE("projection round trips through unprojection") {
    Camera c = test_camera();
    c.R = rodrigues(Vec3(0.2, -0.3, 0.1));
    c.t = Vec3(0.05, -0.02, 1.2);
    Rng rng(11, 0);
    for (int trial = 0; trial < 50; ++trial) {
        double u = 20 + 200 * rng.uniform(), v = 20 + 200 * rng.uniform();
        double z = 0.5 + rng.uniform();
        Vec3 xc((u - c.cx) / c.fx * z, (v - c.cy) / c.fy * z, z);
        Mat X = (c.R.transpose() * (xc - c.t)).transpose();
        ProjectedJoints pj = project_joints(X, c);
        REQUIRE(pj.valid[0]);
        CHECK(std::abs(pj.uv(0, 0) - u) < 1e-9);
        CHECK(std::abs(pj.uv(0, 1) - v) < 1e-9);
    }
}

TEST_CASE("averaging per-frame estimates") {
    Rng rng(3, 0);
    std::vector<HandState> est;
    Eigen::VectorXd beta_sum = Eigen::VectorXd::Zero(10);
    Mat theta_sum = Mat::Zero(16, 3);
    for (int k = 0; k < 4; ++k) {
        HandState s = HandState::rest(1);
        for (int i = 0; i < 10; ++i) s.beta[i] = rng.normal() * 0.1;
        for (int i = 0; i < 16; ++i)
            for (int d = 0; d < 3; ++d) s.theta(i, d) = rng.normal() * 0.2;
        s.frames[0].T = Vec3(k * 0.1, 0, 0);
        beta_sum += s.beta;
        theta_sum += s.theta;
        est.push_back(s);
    }
    HandState avg = average_states(est);
    CHECK((avg.beta - beta_sum / 4).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((avg.theta - theta_sum / 4).cwiseAbs().maxCoeff() < 1e-15);
    REQUIRE(avg.frames.size() == 4);
    CHECK(avg.frames[2].T.x() == doctest::Approx(0.2));
}

static HandState make_gt_state(int n_frames) {
    const auto& tpl = HandTemplate::standard();
    HandState gt = HandState::rest(n_frames);
    for (int i = 0; i < 10; ++i) gt.beta[i] = (i % 2 ? -0.08 : 0.1);
    for (int f = 0; f < 5; ++f) {
        Vec3 ax = tpl.curl_axis(f);
        gt.theta.row(1 + 3 * f) = (0.45 * ax).transpose();
        gt.theta.row(2 + 3 * f) = (0.35 * ax).transpose();
        gt.theta.row(3 + 3 * f) = (0.22 * ax).transpose();
    }
    for (int k = 0; k < n_frames; ++k) {
        gt.frames[size_t(k)].omega = Vec3(0.12 * k, 0.2 * k, -0.05 * k);
        gt.frames[size_t(k)].T = Vec3(0.05 * std::sin(1.0 + k), 0.04 * std::cos(0.5 * k), 0.02 * k);
    }
    return gt;
}

TEST_CASE("noiseless keypoint tracks are recovered almost exactly") {
    const auto& tpl = HandTemplate::standard();
    const int n = 6;
    HandState gt = make_gt_state(n);
    Camera cam = test_camera();
    std::vector<Camera> cams(n, cam);
    std::vector<KeypointTrack> tracks(n);
    for (int k = 0; k < n; ++k) {
        ProjectedJoints pj = project_joints(forward_kinematics(tpl, gt, k), cam);
        for (bool v : pj.valid) REQUIRE(v);
        tracks[size_t(k)].uv = pj.uv;
        tracks[size_t(k)].conf = Eigen::VectorXd::Ones(16);
    }

    Rng rng(7, 0);
    HandState init = HandState::rest(n);
    for (int k = 0; k < n; ++k) {
        init.frames[size_t(k)].omega = gt.frames[size_t(k)].omega + 0.12 * Vec3(rng.normal(), rng.normal(), rng.normal());
        init.frames[size_t(k)].T = gt.frames[size_t(k)].T + 0.04 * Vec3(rng.normal(), rng.normal(), rng.normal());
    }

    FitOptions opt;
    FitReport rep;
    HandState fit = fit_hand_sequence(tpl, tracks, cams, init, opt, &rep);
    CHECK_FALSE(rep.diverged);
    CHECK(rep.stage1_loss <= rep.initial_loss);
    CHECK(rep.final_loss <= rep.stage1_loss);

    double worst_px = 0.0, worst_pa = 0.0;
    for (int k = 0; k < n; ++k) {
        Mat j_fit = forward_kinematics(tpl, fit, k);
        Mat j_gt = forward_kinematics(tpl, gt, k);
        ProjectedJoints pj = project_joints(j_fit, cam);
        for (int i = 0; i < 16; ++i)
            worst_px = std::max(worst_px,
                                (pj.uv.row(i) - tracks[size_t(k)].uv.row(i)).norm());
        worst_pa = std::max(worst_pa, pa_mpjpe_frac(j_fit, j_gt));
    }
    CHECK(worst_px < 0.1);
    CHECK(worst_pa < 0.005);
}

TEST_CASE("one pixel keypoint noise keeps joint error under two percent") {
    const auto& tpl = HandTemplate::standard();
    const int n = 8;
    HandState gt = make_gt_state(n);
    Camera cam = test_camera();
    std::vector<Camera> cams(n, cam);
    std::vector<KeypointTrack> tracks(n);
    Rng rng(19, 0);
    for (int k = 0; k < n; ++k) {
        ProjectedJoints pj = project_joints(forward_kinematics(tpl, gt, k), cam);
        tracks[size_t(k)].uv = pj.uv;
        for (int i = 0; i < 16; ++i) {
            tracks[size_t(k)].uv(i, 0) += rng.normal();
            tracks[size_t(k)].uv(i, 1) += rng.normal();
        }
        tracks[size_t(k)].conf = Eigen::VectorXd::Ones(16);
    }
    HandState init = HandState::rest(n);
    for (int k = 0; k < n; ++k) {
        init.frames[size_t(k)].omega = gt.frames[size_t(k)].omega + 0.1 * Vec3(rng.normal(), rng.normal(), rng.normal());
        init.frames[size_t(k)].T = gt.frames[size_t(k)].T + 0.03 * Vec3(rng.normal(), rng.normal(), rng.normal());
    }
    HandState fit = fit_hand_sequence(tpl, tracks, cams, init);
    double worst_pa = 0.0;
    for (int k = 0; k < n; ++k)
        worst_pa = std::max(worst_pa, pa_mpjpe_frac(forward_kinematics(tpl, fit, k),
                                                    forward_kinematics(tpl, gt, k)));
    CHECK(worst_pa < 0.02);
}

TEST_CASE("huge temporal weight collapses the per-frame poses") {
    const auto& tpl = HandTemplate::standard();
    const int n = 4;
    HandState gt = make_gt_state(n);
    Camera cam = test_camera();
    std::vector<Camera> cams(n, cam);
    std::vector<KeypointTrack> tracks(n);
    for (int k = 0; k < n; ++k) {
        tracks[size_t(k)].uv = project_joints(forward_kinematics(tpl, gt, k), cam).uv;
        tracks[size_t(k)].conf = Eigen::VectorXd::Ones(16);
    }
    FitOptions opt;
    opt.lambda_temp = 1e6;
    HandState fit = fit_hand_sequence(tpl, tracks, cams, gt, opt);
    double worst = 0.0;
    for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b) {
            Eigen::Vector<double, 6> da, db;
            da << fit.frames[size_t(a)].omega, fit.frames[size_t(a)].T;
            db << fit.frames[size_t(b)].omega, fit.frames[size_t(b)].T;
            worst = std::max(worst, (da - db).norm());
        }
    CHECK(worst < 1e-3);
}

} // TEST_SUITE
