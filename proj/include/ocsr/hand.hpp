#pragma once

#include "ocsr/mesh.hpp"
#include "ocsr/renderer.hpp"

#include <Eigen/Dense>
#include <array>
#include <vector>

namespace ocsr {

// Parametric proxy hand: a 16-joint kinematic tree (wrist + 5 fingers x
// MCP/PIP/DIP) with 10 bone-length scales, per-joint axis-angle rotations and
// a capsule skin. Shape/articulation are shared across frames; only the
// per-frame rigid motion (R_k, T_k) varies.

struct HandFramePose {
    Vec3 omega = Vec3::Zero(); // axis-angle of the frame rotation R_k
    Vec3 T = Vec3::Zero();
};

struct HandState {
    Eigen::VectorXd beta;  // 10 bone scales; 0 keeps the template lengths
    Mat theta;             // 16x3 per-joint axis-angle, radians
    std::vector<HandFramePose> frames;

    static HandState rest(int n_frames);
};

struct HandTemplate {
    // joint 0 = wrist; finger f in {thumb..pinky} owns joints 1+3f (MCP),
    // 2+3f (PIP), 3+3f (DIP)
    std::array<int, 16> parent{};
    Mat offsets;  // 16x3 rest offset from parent
    Mat tip;      // 5x3 fingertip extension beyond the DIP, in the DIP frame
    Vec3 curl_axis(int finger) const; // local bend axis (curls toward -z)
    double palm_radius = 0.055;
    double finger_radius = 0.042;

    static const HandTemplate& standard();
    // uniform enlargement of every offset and radius
    HandTemplate scaled(double s) const;

    // (1 + beta[2f]) scales the wrist->MCP offset of finger f,
    // (1 + beta[2f+1]) its phalanges and tip.
    Mat scaled_offsets(const Eigen::VectorXd& beta) const;
    Mat scaled_tip(const Eigen::VectorXd& beta) const;
};

struct JointTransforms {
    std::vector<Eigen::Matrix3d> R; // 16 world rotations
    Mat p;                          // 16x3 world positions
};

JointTransforms forward_kinematics_full(const HandTemplate& tpl, const HandState& st, int frame);
// 16x3 world joint positions
Mat forward_kinematics(const HandTemplate& tpl, const HandState& st, int frame);

// Capsule skin in the rest pose of the scaled skeleton. Each vertex carries a
// single unit skinning weight on the joint whose frame drives its bone.
struct SkinnedHand {
    TriMesh rest_mesh;
    std::vector<int> vertex_joint;
};
SkinnedHand build_skin(const HandTemplate& tpl, const Eigen::VectorXd& beta);

// Linear blend skinning of the capsule skin under (theta, R_k, T_k).
TriMesh skin_mesh(const HandTemplate& tpl, const HandState& st, int frame);

struct ProjectedJoints {
    Mat uv;                  // 16x2 pixel coordinates
    std::vector<bool> valid; // false when the joint is behind the camera
};
ProjectedJoints project_joints(const Mat& joints, const Camera& cam);

// The posed hand as its 20 defining capsules (the skin mesh tessellates
// exactly these). Useful as an analytic hand SDF.
struct Capsule {
    Vec3 a, b;
    double r;
};
std::vector<Capsule> hand_capsules(const HandTemplate& tpl, const HandState& st, int frame);
double capsules_sdf(const std::vector<Capsule>& caps, const Vec3& p);

struct KeypointTrack {
    Mat uv;               // 16x2 detections, pixels
    Eigen::VectorXd conf; // 16 confidences in [0,1]
};

struct FitOptions {
    double lambda_reg = 1e-3;
    double lambda_temp = 1e-2;
    int max_iters = 150; // per stage
    int divergence_patience = 100;
    bool verbose = false;
};

struct FitReport {
    double initial_loss = 0, stage1_loss = 0, final_loss = 0;
    int stage1_iters = 0, stage2_iters = 0;
    bool diverged = false;
};

// Mean of per-frame (beta, theta) estimates; per-frame rigid poses are kept in
// order, one frame per estimate.
HandState average_states(const std::vector<HandState>& estimates);

// Keypoint-fitting objective:
//   sum_k sum_i conf ||pi(J3d) - J2d|| + lambda_reg (||beta||^2 + ||theta||^2)
//   + lambda_temp sum_k ||(omega_k, T_k) - (omega_{k-1}, T_{k-1})||
// Joints behind the camera are dropped from the data term.
double hand_fit_loss(const HandTemplate& tpl, const HandState& st,
                     const std::vector<KeypointTrack>& tracks, const std::vector<Camera>& cams,
                     const FitOptions& opt);

// Two-stage fit: stage 1 moves only the per-frame rigid poses, stage 2 adds
// (beta, theta). Levenberg-Marquardt on numerically differentiated residuals;
// steps are accepted only when the true loss decreases.
HandState fit_hand_sequence(const HandTemplate& tpl, const std::vector<KeypointTrack>& tracks,
                            const std::vector<Camera>& cams, const HandState& init,
                            const FitOptions& opt = {}, FitReport* report = nullptr);

} // namespace ocsr
