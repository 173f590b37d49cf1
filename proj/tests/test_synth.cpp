#include <doctest.h>

#include "ocsr/synth.hpp"

#include <filesystem>
#include <fstream>

using namespace ocsr;
using nlohmann::json;

namespace {

SceneSpec small_spec() {
    SceneSpec spec = default_scene_spec();
    spec.ring.count = 6;
    spec.image_size = 32;
    spec.gt_mesh_res = 48;
    return spec;
}

double local_chamfer(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
    auto one_way = [](const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
        double acc = 0.0;
        for (const auto& p : from) {
            double best = 1e18;
            for (const auto& q : to) best = std::min(best, (p - q).squaredNorm());
            acc += std::sqrt(best);
        }
        return acc / double(from.size());
    };
    return 0.5 * (one_way(a, b) + one_way(b, a));
}

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    REQUIRE(bool(is));
    return std::string(std::istreambuf_iterator<char>(is), {});
}

} // namespace

TEST_SUITE("synth") {

TEST_CASE("primitive expressions evaluate to their analytic distances") {
    auto ev = [](const json& j, const Vec3& p) { return parse_sdf_expr(j)->eval(p); };

    CHECK(ev({{"prim", "sphere"}, {"r", 0.5}}, Vec3(1, 0, 0)) == doctest::Approx(0.5));
    CHECK(ev({{"prim", "sphere"}, {"r", 0.5}}, Vec3(0, 0, 0)) == doctest::Approx(-0.5));

    json box = {{"prim", "box"}, {"half", {0.1, 0.2, 0.3}}};
    CHECK(ev(box, Vec3(0.2, 0.3, 0.4)) == doctest::Approx(std::sqrt(3.0) * 0.1));
    CHECK(ev(box, Vec3(0, 0, 0)) == doctest::Approx(-0.1));
    CHECK(ev(box, Vec3(0.05, 0, 0.35)) == doctest::Approx(0.05));

    json torus = {{"prim", "torus"}, {"R", 0.4}, {"r", 0.1}};
    CHECK(ev(torus, Vec3(0.5, 0, 0)) == doctest::Approx(0.0));
    CHECK(ev(torus, Vec3(0.4, 0, 0.05)) == doctest::Approx(-0.05));
    CHECK(ev(torus, Vec3(0, 0, 0)) == doctest::Approx(0.3));

    json caps = {{"prim", "capsule"}, {"a", {0, 0, 0}}, {"b", {0, 0, 0.5}}, {"r", 0.1}};
    CHECK(ev(caps, Vec3(0.1, 0, 0.25)) == doctest::Approx(0.0));
    CHECK(ev(caps, Vec3(0, 0, 0.7)) == doctest::Approx(0.1));

    json s1 = {{"prim", "sphere"}, {"r", 0.2}, {"translate", {0.5, 0, 0}}};
    json s2 = {{"prim", "sphere"}, {"r", 0.3}};
    json uni = {{"op", "union"}, {"children", {s1, s2}}};
    json inter = {{"op", "intersection"}, {"children", {s1, s2}}};
    Vec3 probe(0.25, 0.1, -0.05);
    double d1 = ev(s1, probe), d2 = ev(s2, probe);
    CHECK(ev(uni, probe) == doctest::Approx(std::min(d1, d2)));
    CHECK(ev(inter, probe) == doctest::Approx(std::max(d1, d2)));

    // translated sphere really moved
    CHECK(ev(s1, Vec3(0.5, 0, 0)) == doctest::Approx(-0.2));
    // rotation: box rotated 90 degrees about z swaps its x/y extents
    json rbox = {{"prim", "box"}, {"half", {0.1, 0.3, 0.1}}, {"rotate", {0, 0, M_PI / 2}}};
    CHECK(ev(rbox, Vec3(0.35, 0, 0)) == doctest::Approx(0.05));
    CHECK(ev(rbox, Vec3(0, 0.35, 0)) == doctest::Approx(0.25));
}

TEST_CASE("smooth union blends but never exceeds the hard union") {
    json a = {{"prim", "sphere"}, {"r", 0.3}, {"translate", {-0.25, 0, 0}}};
    json b = {{"prim", "sphere"}, {"r", 0.3}, {"translate", {0.25, 0, 0}}};
    json su = {{"op", "smooth_union"}, {"k", 0.08}, {"children", {a, b}}};
    auto sa = parse_sdf_expr(a), sb = parse_sdf_expr(b), ss = parse_sdf_expr(su);
    Rng rng(5, 0);
    bool blended = false;
    for (int i = 0; i < 500; ++i) {
        Vec3 p(rng.normal() * 0.4, rng.normal() * 0.4, rng.normal() * 0.4);
        double hard = std::min(sa->eval(p), sb->eval(p));
        double soft = ss->eval(p);
        CHECK(soft <= hard + 1e-12);
        CHECK(soft >= hard - 0.08 / 4.0 - 1e-12); // polynomial smin lower bound
        if (soft < hard - 1e-6) blended = true;
    }
    CHECK(blended);
    // when one shape is much closer than the other the blend is inactive
    Vec3 far(0.9, 0, 0);
    CHECK(ss->eval(far) == doctest::Approx(std::min(sa->eval(far), sb->eval(far))));
}

TEST_CASE("malformed expressions are rejected") {
    CHECK_THROWS_AS((void)parse_sdf_expr(json{{"prim", "cone"}, {"r", 1.0}}),
                    std::invalid_argument);
    CHECK_THROWS_AS((void)parse_sdf_expr(json{{"op", "union"}, {"children", json::array()}}),
                    std::invalid_argument);
    CHECK_THROWS_AS((void)parse_sdf_expr(json{{"x", 1}}), std::invalid_argument);
}

TEST_CASE("objects escaping the unit sphere are rejected") {
    SceneSpec spec = small_spec();
    spec.with_hand = false;
    spec.object_expr = json{{"prim", "sphere"}, {"r", 1.2}};
    CHECK_THROWS_AS((void)build_scene(spec), std::invalid_argument);
    spec.object_expr = json{{"prim", "sphere"}, {"r", 0.4}, {"translate", {0.8, 0, 0}}};
    CHECK_THROWS_AS((void)build_scene(spec), std::invalid_argument);
}

TEST_CASE("gt mesh of a sphere-only spec matches analytic sampling") {
    SceneSpec spec = small_spec();
    spec.with_hand = false;
    spec.gt_mesh_res = 64;
    spec.object_expr = json{{"prim", "sphere"}, {"r", 0.35}};
    Scene sc = build_scene(spec);
    REQUIRE_FALSE(sc.gt_object.tris.empty());

    std::vector<Vec3> analytic;
    for (int i = 0; i < 1500; ++i) { // fibonacci sphere
        double z = 1.0 - 2.0 * (i + 0.5) / 1500.0;
        double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        double phi = i * 2.399963229728653;
        analytic.push_back(0.35 * Vec3(r * std::cos(phi), r * std::sin(phi), z));
    }
    std::vector<Vec3> mesh_pts = sc.gt_object.sample_surface(1500, 3);
    double cd = local_chamfer(analytic, mesh_pts);
    CHECK(cd < 2.0 * (2.0 / 64)); // two marching cubes cells
    CHECK(cd < 0.02);
}

TEST_CASE("same spec and seed produce a bit-identical dataset") {
    SceneSpec spec = small_spec();
    spec.image_size = 24;
    spec.ring.count = 4;
    spec.gt_mesh_res = 32;
    namespace fs = std::filesystem;
    fs::path base = fs::temp_directory_path() / "ocsr_det";
    fs::remove_all(base);
    for (int run = 0; run < 2; ++run) {
        Scene sc = build_scene(spec);
        render_dataset(sc, (base / std::to_string(run)).string());
    }
    std::vector<std::string> rels = {"manifest.json", "gt/object.obj", "gt/hand_000.obj"};
    for (int v = 0; v < 4; ++v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%03d.ppm", v);
        for (const char* d : {"rgb/", "mask/", "amodal/", "handmask/"})
            rels.push_back(std::string(d) + buf);
    }
    for (const auto& rel : rels) {
        INFO("file: ", rel);
        CHECK(slurp((base / "0" / rel).string()) == slurp((base / "1" / rel).string()));
    }
    fs::remove_all(base);
}

TEST_CASE("amodal masks contain visible masks and equal them without a hand") {
    SceneSpec spec = small_spec();
    Scene sc = build_scene(spec);
    long occluded_total = 0;
    for (const auto& cam : sc.cams) {
        ViewRender vr = render_view(sc, cam);
        for (size_t i = 0; i < vr.visible.data.size(); ++i) {
            CHECK(vr.amodal.data[i] >= vr.visible.data[i]);
            occluded_total += vr.amodal.data[i] > 0.5 && vr.visible.data[i] < 0.5;
        }
    }
    CHECK(occluded_total > 0);

    SceneSpec bare = spec;
    bare.with_hand = false;
    Scene sc2 = build_scene(bare);
    for (const auto& cam : sc2.cams) {
        ViewRender vr = render_view(sc2, cam);
        for (size_t i = 0; i < vr.visible.data.size(); ++i)
            CHECK(vr.amodal.data[i] == vr.visible.data[i]);
    }
}

TEST_CASE("sphere tracing matches the brute force reference renderer") {
    SceneSpec spec = small_spec();
    spec.ring.count = 3;
    Scene sc = build_scene(spec);
    long total = 0, close = 0, mask_agree = 0;
    for (const auto& cam : sc.cams) {
        ViewRender fast = render_view(sc, cam);
        ViewRender ref = render_view_reference(sc, cam, 1500);
        for (size_t i = 0; i < fast.rgb.data.size(); ++i) {
            ++total;
            close += std::abs(fast.rgb.data[i] - ref.rgb.data[i]) <= 1.0 / 255.0;
        }
        for (size_t i = 0; i < fast.visible.data.size(); ++i)
            mask_agree += fast.visible.data[i] == ref.visible.data[i];
    }
    CHECK(double(close) / double(total) >= 0.99);
    CHECK(double(mask_agree) / double(3 * 32 * 32) >= 0.99);
}

TEST_CASE("reported hits converge to the surface and masks follow depth order") {
    SceneSpec spec = small_spec();
    Scene sc = build_scene(spec);
    const Camera& cam = sc.cams[1];
    ViewRender vr = render_view(sc, cam);
    int hits = 0, ordered = 0, comparable = 0;
    for (int y = 0; y < cam.h; ++y)
        for (int x = 0; x < cam.w; ++x) {
            Vec3 o, d;
            cam.ray(x + 0.5, y + 0.5, o, d);
            TraceHit u = trace_scene(sc, o, d, true);
            if (u.hit) {
                ++hits;
                double f = std::min(sc.object_sdf1(u.p), sc.hand_sdf1(u.p));
                CHECK(std::abs(f) < 1e-5);
            }
            // independent per-surface marches for the ordering check
            TraceHit obj = trace_scene(sc, o, d, false);
            double t_hand = -1.0;
            {
                double t = 0.0;
                for (int it = 0; it < 400; ++it) {
                    double f = capsules_sdf(sc.capsules, o + t * d);
                    if (f < 1e-6) {
                        t_hand = t;
                        break;
                    }
                    t += 0.9 * f;
                    if (t > 5.0) break;
                }
            }
            bool vis = vr.visible.at(x, y) > 0.5;
            if (obj.hit && t_hand >= 0 && std::abs(obj.t - t_hand) > 1e-3) {
                ++comparable;
                ordered += vis == (obj.t < t_hand);
            } else if (obj.hit && t_hand < 0) {
                ++comparable;
                ordered += vis;
            }
        }
    REQUIRE(hits > 200);
    REQUIRE(comparable > 100);
    CHECK(ordered == comparable);
}

TEST_CASE("datasets round trip through the loader") {
    SceneSpec spec = small_spec();
    spec.ring.count = 5;
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "ocsr_roundtrip";
    fs::remove_all(dir);
    Scene sc = build_scene(spec);
    render_dataset(sc, dir.string());
    Dataset ds = load_dataset(dir.string());

    REQUIRE(ds.cams.size() == 5);
    REQUIRE(ds.rgb.size() == 5);
    for (int k = 0; k < 5; ++k) {
        CHECK((ds.cams[size_t(k)].R - sc.cams[size_t(k)].R).norm() < 1e-12);
        CHECK((ds.cams[size_t(k)].t - sc.cams[size_t(k)].t).norm() < 1e-12);
        CHECK(ds.rgb[size_t(k)].w == 32);
        CHECK(ds.rgb[size_t(k)].channels == 3);
        CHECK(ds.visible[size_t(k)].channels == 1);
        REQUIRE(ds.keypoints[size_t(k)].uv.rows() == 16);
        CHECK(ds.keypoints[size_t(k)].conf.maxCoeff() == 1.0);
    }
    CHECK((ds.hand.beta - sc.hand.beta).norm() < 1e-12);
    CHECK((ds.hand.theta - sc.hand.theta).norm() < 1e-12);
    CHECK(ds.achieved_occlusion == doctest::Approx(sc.achieved_occlusion));
    // grasp actually touches: some capsule point sits within the contact gap
    double closest = 1e9;
    TriMesh hand_mesh = skin_mesh(sc.tpl, sc.hand, 0);
    for (const auto& v : hand_mesh.verts) closest = std::min(closest, sc.object_sdf1(v));
    CHECK(closest <= spec.contact_gap + 1e-6);
    CHECK(closest > -0.05); // no deep penetration either
    fs::remove_all(dir);
}

TEST_CASE("default grasp scene lands near the occlusion target") {
    SceneSpec spec = default_scene_spec();
    Scene sc = build_scene(spec);
    CHECK(sc.achieved_occlusion >= 0.25);
    CHECK(sc.achieved_occlusion <= 0.35);
}

} // TEST_SUITE
