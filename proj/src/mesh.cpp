#include "ocsr/mesh.hpp"
#include "ocsr/rng.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace ocsr {

Vec3 TriMesh::tri_normal(int f) const {
    const auto& t = tris[size_t(f)];
    return (verts[size_t(t[1])] - verts[size_t(t[0])]).cross(verts[size_t(t[2])] - verts[size_t(t[0])]);
}

double TriMesh::surface_area() const {
    double a = 0.0;
    for (size_t f = 0; f < tris.size(); ++f) a += 0.5 * tri_normal(int(f)).norm();
    return a;
}

double TriMesh::signed_volume() const {
    double v = 0.0;
    for (const auto& t : tris)
        v += verts[size_t(t[0])].dot(verts[size_t(t[1])].cross(verts[size_t(t[2])])) / 6.0;
    return v;
}

void TriMesh::bounds(Vec3& lo, Vec3& hi) const {
    lo = Vec3::Constant(std::numeric_limits<double>::max());
    hi = Vec3::Constant(std::numeric_limits<double>::lowest());
    for (const auto& v : verts) {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
    }
}

long TriMesh::euler_characteristic() const {
    std::map<std::pair<int, int>, int> edges;
    for (const auto& t : tris)
        for (int k = 0; k < 3; ++k) {
            int a = t[size_t(k)], b = t[size_t((k + 1) % 3)];
            edges[{std::min(a, b), std::max(a, b)}]++;
        }
    return long(verts.size()) - long(edges.size()) + long(tris.size());
}

bool TriMesh::is_closed() const {
    std::map<std::pair<int, int>, int> edges;
    for (const auto& t : tris)
        for (int k = 0; k < 3; ++k) {
            int a = t[size_t(k)], b = t[size_t((k + 1) % 3)];
            edges[{std::min(a, b), std::max(a, b)}]++;
        }
    for (const auto& [e, n] : edges)
        if (n != 2) return false;
    return !tris.empty();
}

std::vector<Vec3> TriMesh::sample_surface(int n, uint64_t seed) const {
    std::vector<double> cdf(tris.size());
    double acc = 0.0;
    for (size_t f = 0; f < tris.size(); ++f) {
        acc += 0.5 * tri_normal(int(f)).norm();
        cdf[f] = acc;
    }
    if (acc <= 0.0) throw std::runtime_error("sample_surface: degenerate mesh");
    Rng rng(seed, 17);
    std::vector<Vec3> out;
    out.reserve(size_t(n));
    for (int i = 0; i < n; ++i) {
        double u = rng.uniform() * acc;
        size_t f = size_t(std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
        if (f >= tris.size()) f = tris.size() - 1;
        double r1 = std::sqrt(rng.uniform()), r2 = rng.uniform();
        const auto& t = tris[f];
        out.push_back((1 - r1) * verts[size_t(t[0])] + r1 * (1 - r2) * verts[size_t(t[1])] +
                      r1 * r2 * verts[size_t(t[2])]);
    }
    return out;
}

void write_obj(const std::string& path, const TriMesh& mesh) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("write_obj: cannot open " + path);
    os.precision(9);
    for (const auto& v : mesh.verts) os << "v " << v.x() << " " << v.y() << " " << v.z() << "\n";
    for (const auto& t : mesh.tris) os << "f " << t[0] + 1 << " " << t[1] + 1 << " " << t[2] + 1 << "\n";
    if (!os) throw std::runtime_error("write_obj: write failed for " + path);
}

TriMesh read_obj(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("read_obj: cannot open " + path);
    TriMesh mesh;
    std::string line;
    while (std::getline(is, line)) {
        std::istringstream ss(line);
        std::string tag;
        ss >> tag;
        if (tag == "v") {
            Vec3 v;
            ss >> v.x() >> v.y() >> v.z();
            mesh.verts.push_back(v);
        } else if (tag == "f") {
            std::array<int, 3> f{};
            for (int k = 0; k < 3; ++k) {
                std::string tok;
                ss >> tok;
                f[size_t(k)] = std::stoi(tok.substr(0, tok.find('/'))) - 1;
            }
            mesh.tris.push_back(f);
        }
    }
    return mesh;
}

} // namespace ocsr
