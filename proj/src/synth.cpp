#include "ocsr/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "ocsr/rng.hpp"

namespace ocsr {

namespace {

double sd_sphere(const Vec3& p, double r) { return p.norm() - r; }

double sd_box(const Vec3& p, const Vec3& half) {
    Vec3 q = p.cwiseAbs() - half;
    return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
}

double sd_torus(const Vec3& p, double big_r, double r) {
    double qx = std::hypot(p.x(), p.y()) - big_r;
    return std::hypot(qx, p.z()) - r;
}

double sd_capsule(const Vec3& p, const Vec3& a, const Vec3& b, double r) {
    Vec3 ab = b - a, ap = p - a;
    double t = ab.squaredNorm() > 0 ? std::clamp(ap.dot(ab) / ab.squaredNorm(), 0.0, 1.0) : 0.0;
    return (ap - t * ab).norm() - r;
}

double smooth_union(double a, double b, double k) {
    if (k <= 0) return std::min(a, b);
    double h = std::clamp(0.5 + 0.5 * (b - a) / k, 0.0, 1.0);
    return b * (1.0 - h) + a * h - k * h * (1.0 - h);
}

} // namespace

double SdfNode::eval(const Vec3& p_in) const {
    Vec3 p = has_xform ? Vec3(rot.transpose() * (p_in - trans)) : p_in;
    switch (kind) {
    case Kind::Sphere: return sd_sphere(p, r);
    case Kind::Box: return sd_box(p, half);
    case Kind::Torus: return sd_torus(p, big_r, r);
    case Kind::Capsule: return sd_capsule(p, a, b, r);
    case Kind::Union: {
        double v = children[0]->eval(p);
        for (size_t i = 1; i < children.size(); ++i) v = std::min(v, children[i]->eval(p));
        return v;
    }
    case Kind::Intersection: {
        double v = children[0]->eval(p);
        for (size_t i = 1; i < children.size(); ++i) v = std::max(v, children[i]->eval(p));
        return v;
    }
    case Kind::SmoothUnion: {
        double v = children[0]->eval(p);
        for (size_t i = 1; i < children.size(); ++i) v = smooth_union(v, children[i]->eval(p), k);
        return v;
    }
    }
    return 0.0;
}

namespace {

Vec3 json_vec3(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != 3) throw std::invalid_argument("sdf expr: expected 3-vector");
    return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

} // namespace

SdfPtr parse_sdf_expr(const nlohmann::json& j) {
    auto node = std::make_shared<SdfNode>();
    if (j.contains("prim")) {
        std::string p = j["prim"].get<std::string>();
        if (p == "sphere") {
            node->kind = SdfNode::Kind::Sphere;
            node->r = j.at("r").get<double>();
        } else if (p == "box") {
            node->kind = SdfNode::Kind::Box;
            node->half = json_vec3(j.at("half"));
        } else if (p == "torus") {
            node->kind = SdfNode::Kind::Torus;
            node->big_r = j.at("R").get<double>();
            node->r = j.at("r").get<double>();
        } else if (p == "capsule") {
            node->kind = SdfNode::Kind::Capsule;
            node->a = json_vec3(j.at("a"));
            node->b = json_vec3(j.at("b"));
            node->r = j.at("r").get<double>();
        } else {
            throw std::invalid_argument("sdf expr: unknown primitive '" + p + "'");
        }
    } else if (j.contains("op")) {
        std::string op = j["op"].get<std::string>();
        if (op == "union") node->kind = SdfNode::Kind::Union;
        else if (op == "intersection") node->kind = SdfNode::Kind::Intersection;
        else if (op == "smooth_union") node->kind = SdfNode::Kind::SmoothUnion;
        else throw std::invalid_argument("sdf expr: unknown op '" + op + "'");
        node->k = j.value("k", 0.0);
        const auto& ch = j.at("children");
        if (!ch.is_array() || ch.size() < 2)
            throw std::invalid_argument("sdf expr: op needs at least 2 children");
        for (const auto& c : ch) node->children.push_back(parse_sdf_expr(c));
    } else {
        throw std::invalid_argument("sdf expr: node needs 'prim' or 'op'");
    }
    if (j.contains("translate") || j.contains("rotate")) {
        node->has_xform = true;
        if (j.contains("translate")) node->trans = json_vec3(j["translate"]);
        if (j.contains("rotate")) node->rot = rodrigues(json_vec3(j["rotate"]));
    }
    return node;
}

SceneSpec default_scene_spec() {
    SceneSpec spec;
    spec.object_expr = nlohmann::json{
        {"op", "smooth_union"},
        {"k", 0.06},
        {"children",
         {nlohmann::json{{"prim", "sphere"}, {"r", 0.35}},
          nlohmann::json{{"prim", "box"},
                         {"half", {0.125, 0.125, 0.125}},
                         {"translate", {0.30, 0.0, 0.05}},
                         {"rotate", {0.0, 0.0, 0.4}}}}}};
    return spec;
}

double Scene::hand_sdf1(const Vec3& p) const {
    return capsules.empty() ? 1e9 : capsules_sdf(capsules, p);
}

Mat Scene::object_sdf(const Mat& P) const {
    Mat f(P.rows(), 1);
    for (Eigen::Index i = 0; i < P.rows(); ++i) f(i, 0) = object->eval(Vec3(P.row(i).transpose()));
    return f;
}

namespace {

std::vector<Camera> make_ring(const CameraRingSpec& ring, int image_size, uint64_t seed) {
    std::vector<Camera> cams;
    Rng rng(seed, 31);
    for (int k = 0; k < ring.count; ++k) {
        double az = 2.0 * M_PI * k / ring.count + ring.jitter * rng.normal();
        double el = ring.elevation + ring.jitter * rng.normal();
        Vec3 c(ring.radius * std::cos(az) * std::cos(el), ring.radius * std::sin(az) * std::cos(el),
               ring.radius * std::sin(el));
        Vec3 fwd = (-c).normalized();
        Vec3 right = fwd.cross(Vec3::UnitZ()).normalized();
        Vec3 down = fwd.cross(right);
        Camera cam;
        cam.R.row(0) = right.transpose();
        cam.R.row(1) = down.transpose();
        cam.R.row(2) = fwd.transpose();
        cam.t = -cam.R * c;
        cam.w = cam.h = image_size;
        cam.fx = cam.fy = 1.9 * image_size;
        cam.cx = cam.cy = 0.5 * image_size;
        cam.validate();
        cams.push_back(cam);
    }
    return cams;
}

// leftmost object surface x over the palm footprint, for side-grip placement
double object_left_extent(const SdfNode& obj, double z0, double z1) {
    double left = 1e9;
    for (int iz = 0; iz <= 10; ++iz)
        for (int iy = -3; iy <= 3; ++iy) {
            double z = z0 + (z1 - z0) * iz / 10.0, y = 0.045 * iy;
            double prev = obj.eval(Vec3(-1.05, y, z));
            for (int ix = 1; ix <= 70; ++ix) { // march toward +x for the first crossing
                double x = -1.05 + 0.02 * ix;
                double cur = obj.eval(Vec3(x, y, z));
                if (prev > 0 && cur <= 0) {
                    double lo = x - 0.02, hi = x;
                    for (int it = 0; it < 40; ++it) {
                        double mid = 0.5 * (lo + hi);
                        (obj.eval(Vec3(mid, y, z)) > 0 ? lo : hi) = mid;
                    }
                    left = std::min(left, hi);
                    break;
                }
                prev = cur;
            }
        }
    return left;
}

// scale each finger's fixed curl profile until its capsules reach the surface
void solve_grasp_curl(const HandTemplate& tpl, HandState& st, const SdfNode& obj, double gap) {
    const double profile[3] = {1.1, 0.9, 0.65};
    const double s_max = 1.45;
    SkinnedHand ref = build_skin(tpl, st.beta);
    auto finger_clearance = [&](int f, double s) {
        for (int j = 0; j < 3; ++j)
            st.theta.row(1 + 3 * f + j) = (s * profile[j] * tpl.curl_axis(f)).transpose();
        TriMesh posed = skin_mesh(tpl, st, 0);
        double best = 1e9;
        for (size_t v = 0; v < posed.verts.size(); ++v) {
            int j = ref.vertex_joint[v];
            if (j < 1 + 3 * f || j > 3 + 3 * f) continue;
            best = std::min(best, obj.eval(posed.verts[v]));
        }
        return best;
    };
    for (int f = 0; f < 5; ++f) {
        double s = s_max;
        if (finger_clearance(f, s_max) < gap) { // reaches the surface somewhere
            double lo = 0.0, hi = s_max;
            for (int it = 0; it < 42; ++it) {
                double mid = 0.5 * (lo + hi);
                (finger_clearance(f, mid) < gap ? hi : lo) = mid;
            }
            s = hi;
        }
        finger_clearance(f, s); // leaves theta set to the solved curl
    }
}

template <class F>
TraceHit trace_sdf(F&& sdf, const Vec3& o, const Vec3& d, double bound) {
    TraceHit hit;
    double t0, t1;
    if (!ray_sphere_bounds(o, d, bound, t0, t1)) return hit;
    t0 = std::max(t0, 0.0);
    double t = t0, t_prev = t0;
    for (int step = 0; step < 384 && t <= t1; ++step) {
        double f = sdf(o + t * d);
        if (f < 1e-5) {
            if (f < -1e-5) { // overshot: bisect back to the surface
                double lo = t_prev, hi = t;
                for (int it = 0; it < 64; ++it) {
                    double mid = 0.5 * (lo + hi);
                    double fm = sdf(o + mid * d);
                    if (std::abs(fm) < 1e-5) {
                        hi = mid;
                        break;
                    }
                    (fm > 0 ? lo : hi) = mid;
                }
                t = hi;
            }
            hit.hit = true;
            hit.t = t;
            hit.p = o + t * d;
            return hit;
        }
        t_prev = t;
        t += 0.9 * f;
    }
    return hit;
}

template <class F>
TraceHit trace_brute(F&& sdf, const Vec3& o, const Vec3& d, double bound, int steps) {
    TraceHit hit;
    double t0, t1;
    if (!ray_sphere_bounds(o, d, bound, t0, t1)) return hit;
    t0 = std::max(t0, 0.0);
    double f_prev = sdf(o + t0 * d), t_prev = t0;
    for (int i = 1; i <= steps; ++i) {
        double t = t0 + (t1 - t0) * i / steps;
        double f = sdf(o + t * d);
        if (f_prev > 0 && f <= 0) {
            double lo = t_prev, hi = t;
            for (int it = 0; it < 64; ++it) {
                double mid = 0.5 * (lo + hi);
                (sdf(o + mid * d) > 0 ? lo : hi) = mid;
            }
            hit.hit = true;
            hit.t = hi;
            hit.p = o + hi * d;
            return hit;
        }
        f_prev = f;
        t_prev = t;
    }
    return hit;
}

template <class F> Vec3 sdf_normal(F&& sdf, const Vec3& p) {
    const double h = 1e-4;
    Vec3 n;
    for (int a = 0; a < 3; ++a) {
        Vec3 e = Vec3::Zero();
        e[a] = h;
        n[a] = sdf(p + e) - sdf(p - e);
    }
    double len = n.norm();
    return len > 0 ? Vec3(n / len) : Vec3::UnitZ();
}

double scene_bound(const Scene& sc) {
    double b = 1.05;
    for (const auto& c : sc.capsules)
        b = std::max({b, c.a.norm() + c.r, c.b.norm() + c.r});
    return b + 0.05;
}

// compose a view from per-pixel object and hand hits; tracer is swappable so
// the reference renderer shares the exact same mask/shading logic
template <class Tracer>
ViewRender compose_view(const Scene& sc, const Camera& cam, Tracer&& tracer) {
    ViewRender vr;
    vr.rgb = Image(cam.w, cam.h, 3);
    vr.visible = Image(cam.w, cam.h, 1);
    vr.amodal = Image(cam.w, cam.h, 1);
    vr.handmask = Image(cam.w, cam.h, 1);
    const bool hand = !sc.capsules.empty();
    for (int y = 0; y < cam.h; ++y)
        for (int x = 0; x < cam.w; ++x) {
            Vec3 o, d;
            cam.ray(x + 0.5, y + 0.5, o, d);
            TraceHit ho = tracer([&](const Vec3& p) { return sc.object_sdf1(p); }, o, d);
            TraceHit hh;
            if (hand) hh = tracer([&](const Vec3& p) { return sc.hand_sdf1(p); }, o, d);
            if (ho.hit) vr.amodal.at(x, y) = 1.0;
            bool obj_front = ho.hit && (!hh.hit || ho.t < hh.t);
            bool hand_front = hh.hit && !obj_front;
            if (obj_front) vr.visible.at(x, y) = 1.0;
            if (hand_front) vr.handmask.at(x, y) = 1.0;
            Vec3 c(0.10, 0.10, 0.12); // background
            if (obj_front) {
                ho.material = 0;
                ho.n = sdf_normal([&](const Vec3& p) { return sc.object_sdf1(p); }, ho.p);
                c = shade_hit(sc, ho);
            } else if (hand_front) {
                hh.material = 1;
                hh.n = sdf_normal([&](const Vec3& p) { return sc.hand_sdf1(p); }, hh.p);
                c = shade_hit(sc, hh);
            }
            for (int ch = 0; ch < 3; ++ch) vr.rgb.at(x, y, ch) = c[ch];
        }
    return vr;
}

double measure_occlusion(const Scene& sc, int probe_size) {
    double acc = 0.0;
    int counted = 0;
    for (const auto& cam0 : sc.cams) {
        Camera cam = cam0;
        double s = double(probe_size) / cam0.w;
        cam.w = cam.h = probe_size;
        cam.fx *= s;
        cam.fy *= s;
        cam.cx *= s;
        cam.cy *= s;
        ViewRender vr = compose_view(sc, cam, [&](auto&& f, const Vec3& o, const Vec3& d) {
            return trace_sdf(f, o, d, scene_bound(sc));
        });
        double amodal = 0, occl = 0;
        for (int i = 0; i < probe_size * probe_size; ++i) {
            amodal += vr.amodal.data[size_t(i)];
            occl += vr.amodal.data[size_t(i)] * (1.0 - vr.visible.data[size_t(i)]);
        }
        if (amodal > 0) {
            acc += occl / amodal;
            ++counted;
        }
    }
    return counted ? acc / counted : 0.0;
}

} // namespace

Vec3 shade_hit(const Scene& sc, const TraceHit& hit) {
    Vec3 albedo;
    if (hit.material == 1) {
        albedo = sc.spec.hand_color;
    } else if (sc.spec.albedo == "checker") {
        long par = long(std::floor(hit.p.x() / sc.spec.checker_cell)) +
                   long(std::floor(hit.p.y() / sc.spec.checker_cell)) +
                   long(std::floor(hit.p.z() / sc.spec.checker_cell));
        albedo = (par & 1) ? sc.spec.albedo_b : sc.spec.albedo_a;
    } else {
        albedo = sc.spec.albedo_a;
    }
    Vec3 l = sc.spec.light_dir.normalized();
    double diffuse = std::max(0.0, hit.n.dot(l));
    return albedo * (sc.spec.ambient + (1.0 - sc.spec.ambient) * diffuse);
}

TraceHit trace_scene(const Scene& sc, const Vec3& o, const Vec3& d, bool with_hand) {
    auto sdf = [&](const Vec3& p) {
        double f = sc.object_sdf1(p);
        if (with_hand && !sc.capsules.empty()) f = std::min(f, sc.hand_sdf1(p));
        return f;
    };
    TraceHit hit = trace_sdf(sdf, o, d, scene_bound(sc));
    if (hit.hit) {
        hit.material = sc.capsules.empty() || sc.object_sdf1(hit.p) <= sc.hand_sdf1(hit.p) ? 0 : 1;
        hit.n = sdf_normal(sdf, hit.p);
    }
    return hit;
}

TraceHit trace_scene_brute(const Scene& sc, const Vec3& o, const Vec3& d, bool with_hand,
                           int steps) {
    auto sdf = [&](const Vec3& p) {
        double f = sc.object_sdf1(p);
        if (with_hand && !sc.capsules.empty()) f = std::min(f, sc.hand_sdf1(p));
        return f;
    };
    TraceHit hit = trace_brute(sdf, o, d, scene_bound(sc), steps);
    if (hit.hit) {
        hit.material = sc.capsules.empty() || sc.object_sdf1(hit.p) <= sc.hand_sdf1(hit.p) ? 0 : 1;
        hit.n = sdf_normal(sdf, hit.p);
    }
    return hit;
}

ViewRender render_view(const Scene& sc, const Camera& cam) {
    return compose_view(sc, cam, [&](auto&& f, const Vec3& o, const Vec3& d) {
        return trace_sdf(f, o, d, scene_bound(sc));
    });
}

ViewRender render_view_reference(const Scene& sc, const Camera& cam, int steps) {
    return compose_view(sc, cam, [&](auto&& f, const Vec3& o, const Vec3& d) {
        return trace_brute(f, o, d, scene_bound(sc), steps);
    });
}

Scene build_scene(const SceneSpec& spec) {
    Scene sc;
    sc.spec = spec;
    sc.object = parse_sdf_expr(spec.object_expr);

    // containment check: nothing solid on or beyond the unit sphere
    {
        Rng rng(spec.seed, 67);
        for (int i = 0; i < 4096; ++i) {
            Vec3 dir(rng.normal(), rng.normal(), rng.normal());
            dir.normalize();
            double r = 1.0 + 0.3 * rng.uniform();
            if (sc.object->eval(r * dir) <= 0)
                throw std::invalid_argument("build_scene: object escapes the unit sphere");
        }
    }

    sc.cams = make_ring(spec.ring, spec.image_size, spec.seed);
    sc.gt_object = marching_cubes([&sc](const Mat& P) { return sc.object_sdf(P); },
                                  spec.gt_mesh_res, Vec3(-1, -1, -1), Vec3(1, 1, 1))
                       .mesh;

    sc.tpl = HandTemplate::standard();
    sc.hand = HandState::rest(int(sc.cams.size()));
    if (spec.with_hand) {
        // side grip: the palm plate faces +x toward the object, fingers point
        // up and curl over it; wrist height and hand size are searched so the
        // rendered occlusion lands near the target
        const Vec3 grip_omega(0.0, -M_PI / 2.0, 0.0);
        double best_err = 1e9;
        for (double s : {1.0, 1.2, 1.4, 1.6, 1.8}) {
            HandTemplate tpl = HandTemplate::standard().scaled(s);
            for (int cand = 0; cand < 5; ++cand) {
                double zw = -0.34 + 0.07 * cand;
                double left = object_left_extent(*sc.object, zw, zw + 0.26 * s);
                if (left > 1.0) continue; // palm footprint misses the object band
                HandState st = HandState::rest(int(sc.cams.size()));
                Vec3 wrist(left - tpl.palm_radius - 0.012, 0.0, zw);
                for (auto& fr : st.frames) {
                    fr.omega = grip_omega;
                    fr.T = wrist;
                }
                solve_grasp_curl(tpl, st, *sc.object, spec.contact_gap);
                Scene probe = sc;
                probe.tpl = tpl;
                probe.hand = st;
                probe.capsules = hand_capsules(tpl, st, 0);
                double occ = measure_occlusion(probe, 24);
                double err = std::abs(occ - spec.target_occlusion);
                if (err < best_err) {
                    best_err = err;
                    sc.tpl = tpl;
                    sc.hand_scale = s;
                    sc.hand = st;
                    sc.capsules = probe.capsules;
                }
            }
        }
        sc.achieved_occlusion = measure_occlusion(sc, spec.image_size);
    }
    return sc;
}

void render_dataset(const Scene& sc, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir + "/rgb");
    fs::create_directories(out_dir + "/mask");
    fs::create_directories(out_dir + "/amodal");
    fs::create_directories(out_dir + "/handmask");
    fs::create_directories(out_dir + "/gt");

    const HandTemplate& tpl = sc.tpl;
    const int n = int(sc.cams.size());
    nlohmann::json manifest;
    manifest["version"] = 1;
    manifest["seed"] = sc.spec.seed;
    manifest["image_size"] = sc.spec.image_size;
    manifest["scale_to_cm"] = sc.spec.scale_to_cm;
    manifest["achieved_occlusion"] = sc.achieved_occlusion;
    manifest["with_hand"] = sc.spec.with_hand;
    manifest["object_expr"] = sc.spec.object_expr;
    manifest["light"] = {{"dir", {sc.spec.light_dir.x(), sc.spec.light_dir.y(), sc.spec.light_dir.z()}},
                         {"ambient", sc.spec.ambient}};
    manifest["views"] = n;

    nlohmann::json jcams = nlohmann::json::array();
    for (const auto& c : sc.cams) {
        nlohmann::json jc;
        std::vector<double> R(c.R.data(), c.R.data() + 9); // column-major
        jc["R"] = R;
        jc["t"] = {c.t.x(), c.t.y(), c.t.z()};
        jc["fx"] = c.fx;
        jc["fy"] = c.fy;
        jc["cx"] = c.cx;
        jc["cy"] = c.cy;
        jc["w"] = c.w;
        jc["h"] = c.h;
        jcams.push_back(jc);
    }
    manifest["cameras"] = jcams;

    nlohmann::json jhand;
    jhand["beta"] = std::vector<double>(sc.hand.beta.data(), sc.hand.beta.data() + 10);
    std::vector<double> theta;
    for (int j = 0; j < 16; ++j)
        for (int d = 0; d < 3; ++d) theta.push_back(sc.hand.theta(j, d));
    jhand["theta"] = theta;
    nlohmann::json jframes = nlohmann::json::array();
    for (const auto& fr : sc.hand.frames)
        jframes.push_back({{"omega", {fr.omega.x(), fr.omega.y(), fr.omega.z()}},
                           {"T", {fr.T.x(), fr.T.y(), fr.T.z()}}});
    jhand["frames"] = jframes;
    jhand["palm_radius"] = tpl.palm_radius;
    jhand["finger_radius"] = tpl.finger_radius;
    jhand["scale"] = sc.hand_scale;
    manifest["hand"] = jhand;

    nlohmann::json jkp = nlohmann::json::array();
    char name[64];
    for (int k = 0; k < n; ++k) {
        ViewRender vr = render_view(sc, sc.cams[size_t(k)]);
        std::snprintf(name, sizeof name, "/%03d.ppm", k);
        write_ppm(out_dir + "/rgb" + name, vr.rgb);
        write_ppm(out_dir + "/mask" + name, vr.visible);
        write_ppm(out_dir + "/amodal" + name, vr.amodal);
        write_ppm(out_dir + "/handmask" + name, vr.handmask);

        nlohmann::json jk = nlohmann::json::array();
        if (sc.spec.with_hand) {
            Rng rng(sc.spec.seed, 400 + uint64_t(k));
            ProjectedJoints pj =
                project_joints(forward_kinematics(tpl, sc.hand, k), sc.cams[size_t(k)]);
            for (int i = 0; i < 16; ++i) {
                double u = pj.uv(i, 0) + sc.spec.keypoint_noise * rng.normal();
                double v = pj.uv(i, 1) + sc.spec.keypoint_noise * rng.normal();
                jk.push_back({u, v, pj.valid[size_t(i)] ? 1.0 : 0.0});
            }
            TriMesh hm = skin_mesh(tpl, sc.hand, k);
            std::snprintf(name, sizeof name, "/gt/hand_%03d.obj", k);
            write_obj(out_dir + name, hm);
        }
        jkp.push_back(jk);
    }
    manifest["keypoints"] = jkp;
    write_obj(out_dir + "/gt/object.obj", sc.gt_object);

    std::ofstream os(out_dir + "/manifest.json");
    if (!os) throw std::runtime_error("render_dataset: cannot write manifest");
    os << manifest.dump(1) << "\n";
}

Dataset load_dataset(const std::string& dir) {
    Dataset ds;
    ds.dir = dir;
    std::ifstream is(dir + "/manifest.json");
    if (!is) throw std::runtime_error("load_dataset: missing manifest in " + dir);
    is >> ds.manifest;

    ds.scale_to_cm = ds.manifest.value("scale_to_cm", 10.0);
    ds.achieved_occlusion = ds.manifest.value("achieved_occlusion", 0.0);
    const int n = ds.manifest.at("views").get<int>();
    for (const auto& jc : ds.manifest.at("cameras")) {
        Camera c;
        std::vector<double> R = jc.at("R").get<std::vector<double>>();
        c.R = Eigen::Map<const Eigen::Matrix3d>(R.data()); // column-major
        c.t = json_vec3(jc.at("t"));
        c.fx = jc.at("fx");
        c.fy = jc.at("fy");
        c.cx = jc.at("cx");
        c.cy = jc.at("cy");
        c.w = jc.at("w");
        c.h = jc.at("h");
        c.validate();
        ds.cams.push_back(c);
    }

    ds.hand = HandState::rest(n);
    const auto& jh = ds.manifest.at("hand");
    ds.hand_scale = jh.value("scale", 1.0);
    ds.tpl = HandTemplate::standard().scaled(ds.hand_scale);
    std::vector<double> beta = jh.at("beta").get<std::vector<double>>();
    ds.hand.beta = Eigen::Map<const Eigen::VectorXd>(beta.data(), 10);
    std::vector<double> theta = jh.at("theta").get<std::vector<double>>();
    for (int j = 0; j < 16; ++j)
        for (int d = 0; d < 3; ++d) ds.hand.theta(j, d) = theta[size_t(3 * j + d)];
    int k = 0;
    for (const auto& jf : jh.at("frames")) {
        ds.hand.frames[size_t(k)].omega = json_vec3(jf.at("omega"));
        ds.hand.frames[size_t(k)].T = json_vec3(jf.at("T"));
        ++k;
    }

    for (const auto& jk : ds.manifest.at("keypoints")) {
        KeypointTrack tr;
        tr.uv = Mat::Zero(16, 2);
        tr.conf = Eigen::VectorXd::Zero(16);
        int i = 0;
        for (const auto& row : jk) {
            tr.uv(i, 0) = row[0];
            tr.uv(i, 1) = row[1];
            tr.conf[i] = row[2];
            ++i;
        }
        ds.keypoints.push_back(tr);
    }

    char name[64];
    for (int v = 0; v < n; ++v) {
        std::snprintf(name, sizeof name, "/%03d.ppm", v);
        ds.rgb.push_back(read_ppm(dir + "/rgb" + name));
        ds.visible.push_back(read_ppm(dir + "/mask" + name));
        ds.amodal.push_back(read_ppm(dir + "/amodal" + name));
        ds.handmask.push_back(read_ppm(dir + "/handmask" + name));
    }
    return ds;
}

} // namespace ocsr
