#pragma once

#include <Eigen/Dense>
#include <array>
#include <string>
#include <vector>

namespace ocsr {

using Vec3 = Eigen::Vector3d;

struct TriMesh {
    std::vector<Vec3> verts;
    std::vector<std::array<int, 3>> tris;

    size_t vert_count() const { return verts.size(); }
    size_t tri_count() const { return tris.size(); }
    bool empty() const { return tris.empty(); }

    Vec3 tri_normal(int f) const;   // unnormalized (2x area)
    double surface_area() const;
    // Divergence-theorem volume; positive when triangles wind outward.
    double signed_volume() const;
    void bounds(Vec3& lo, Vec3& hi) const;
    // V - E + F with edges counted once; 2 - 2g for a closed orientable surface
    long euler_characteristic() const;
    // Every edge shared by exactly two triangles.
    bool is_closed() const;
    // Uniform area-weighted surface samples, deterministic in the seed.
    std::vector<Vec3> sample_surface(int n, uint64_t seed) const;
};

void write_obj(const std::string& path, const TriMesh& mesh);
TriMesh read_obj(const std::string& path);

} // namespace ocsr
