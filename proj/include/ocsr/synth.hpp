#pragma once

#include "ocsr/hand.hpp"
#include "ocsr/image.hpp"
#include "ocsr/meshing.hpp"

#include <json.hpp>
#include <memory>
#include <string>
#include <vector>

namespace ocsr {

// Analytic SDF expression tree. JSON form:
//   {"prim":"sphere","r":0.35}
//   {"prim":"box","half":[hx,hy,hz]}
//   {"prim":"torus","R":0.3,"r":0.1}
//   {"prim":"capsule","a":[..],"b":[..],"r":0.05}
//   {"op":"union"|"intersection"|"smooth_union","k":0.06,"children":[..]}
// Any node may carry "translate":[tx,ty,tz] and "rotate":[axis-angle].
struct SdfNode;
using SdfPtr = std::shared_ptr<const SdfNode>;

struct SdfNode {
    enum class Kind { Sphere, Box, Torus, Capsule, Union, Intersection, SmoothUnion };
    Kind kind = Kind::Sphere;
    double r = 0, big_r = 0, k = 0;
    Vec3 half = Vec3::Zero(), a = Vec3::Zero(), b = Vec3::Zero();
    std::vector<SdfPtr> children;
    bool has_xform = false;
    Eigen::Matrix3d rot = Eigen::Matrix3d::Identity();
    Vec3 trans = Vec3::Zero();

    double eval(const Vec3& p) const;
};

SdfPtr parse_sdf_expr(const nlohmann::json& j);

struct CameraRingSpec {
    int count = 32;
    double radius = 2.2;
    double elevation = 0.35; // radians above the equator
    double jitter = 0.02;    // radians, per-view seeded
};

struct SceneSpec {
    nlohmann::json object_expr;
    bool with_hand = true;
    double target_occlusion = 0.30; // occluded share of amodal object pixels
    double contact_gap = 0.002;
    Vec3 light_dir = Vec3(0.45, 0.25, 0.85);
    double ambient = 0.25;
    std::string albedo = "checker"; // or "constant"
    Vec3 albedo_a = Vec3(0.85, 0.35, 0.25);
    Vec3 albedo_b = Vec3(0.92, 0.85, 0.30);
    double checker_cell = 0.12;
    Vec3 hand_color = Vec3(0.80, 0.62, 0.52);
    CameraRingSpec ring;
    int image_size = 64;
    double keypoint_noise = 1.0; // pixels
    uint64_t seed = 1;
    double scale_to_cm = 10.0; // scene unit in centimeters
    int gt_mesh_res = 128;
};

// smooth-union(sphere, offset box) grasped by the proxy hand, 32 views
SceneSpec default_scene_spec();

struct Scene {
    SceneSpec spec;
    SdfPtr object;
    HandTemplate tpl;    // possibly enlarged by the occlusion search
    double hand_scale = 1.0;
    HandState hand; // grasp pose; one frame per view, all identical
    std::vector<Capsule> capsules;
    std::vector<Camera> cams;
    TriMesh gt_object;
    double achieved_occlusion = 0.0;

    double object_sdf1(const Vec3& p) const { return object->eval(p); }
    double hand_sdf1(const Vec3& p) const;
    Mat object_sdf(const Mat& P) const;
};

Scene build_scene(const SceneSpec& spec);

struct TraceHit {
    bool hit = false;
    double t = 0;
    Vec3 p = Vec3::Zero(), n = Vec3::Zero();
    int material = -1; // 0 object, 1 hand
};

// Sphere tracing against the scene (object only when hand=false); converges to
// |sdf| < 1e-5 at reported hits.
TraceHit trace_scene(const Scene& sc, const Vec3& o, const Vec3& d, bool with_hand);
// Fixed fine marching plus bisection; the reference for the tracer.
TraceHit trace_scene_brute(const Scene& sc, const Vec3& o, const Vec3& d, bool with_hand,
                           int steps = 2000);

Vec3 shade_hit(const Scene& sc, const TraceHit& hit);

struct ViewRender {
    Image rgb;      // shaded, union of object and hand
    Image visible;  // object strictly nearest
    Image amodal;   // object-only render
    Image handmask; // hand strictly nearest
};
ViewRender render_view(const Scene& sc, const Camera& cam);
// identical composition driven by the fine-marching tracer
ViewRender render_view_reference(const Scene& sc, const Camera& cam, int steps = 2000);

// Writes manifest.json, rgb/NNN.ppm, mask/NNN.ppm, amodal/NNN.ppm,
// handmask/NNN.ppm, gt/object.obj and gt/hand_NNN.obj.
void render_dataset(const Scene& sc, const std::string& out_dir);

struct Dataset {
    std::string dir;
    nlohmann::json manifest;
    std::vector<Camera> cams;
    std::vector<Image> rgb, visible, amodal, handmask;
    HandTemplate tpl;
    double hand_scale = 1.0;
    HandState hand;
    std::vector<KeypointTrack> keypoints;
    double scale_to_cm = 10.0;
    double achieved_occlusion = 0.0;
};
Dataset load_dataset(const std::string& dir);

} // namespace ocsr
