#include "ocsr/meshing.hpp"

#include <stdexcept>
#include <unordered_map>

namespace ocsr {

namespace {

// cube corner offsets, Bourke numbering
constexpr int kCorner[8][3] = {
    {0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
    {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1},
};
constexpr int kEdgeEnds[12][2] = {
    {0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
    {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7},
};

} // namespace

MarchResult marching_cubes(const std::function<Mat(const Mat&)>& sdf, int resolution,
                           const Vec3& lo, const Vec3& hi) {
    if (resolution < 8) throw std::invalid_argument("marching_cubes: resolution must be >= 8");
    const int n = resolution + 1;
    const Vec3 cell = (hi - lo) / resolution;

    // evaluate the field on the full grid in slabs to bound batch size
    std::vector<double> grid(size_t(n) * n * n);
    auto gid = [n](int i, int j, int k) { return (size_t(i) * n + j) * n + k; };
    {
        const int slab = std::max(1, 65536 / (n * n));
        for (int i0 = 0; i0 < n; i0 += slab) {
            int cnt = std::min(slab, n - i0);
            Mat P(cnt * n * n, 3);
            Eigen::Index r = 0;
            for (int i = i0; i < i0 + cnt; ++i)
                for (int j = 0; j < n; ++j)
                    for (int k = 0; k < n; ++k, ++r)
                        P.row(r) = (lo + Vec3(i * cell.x(), j * cell.y(), k * cell.z())).transpose();
            Mat f = sdf(P);
            r = 0;
            for (int i = i0; i < i0 + cnt; ++i)
                for (int j = 0; j < n; ++j)
                    for (int k = 0; k < n; ++k, ++r) grid[gid(i, j, k)] = f(r, 0);
        }
    }

    MarchResult out;
    TriMesh& mesh = out.mesh;
    // global edge key: owning grid point and axis
    std::unordered_map<uint64_t, int> edge_vertex;
    auto vertex_on_edge = [&](int i, int j, int k, int axis) {
        uint64_t key = (uint64_t(gid(i, j, k)) << 2) | uint64_t(axis);
        auto it = edge_vertex.find(key);
        if (it != edge_vertex.end()) return it->second;
        int di = axis == 0, dj = axis == 1, dk = axis == 2;
        double f0 = grid[gid(i, j, k)];
        double f1 = grid[gid(i + di, j + dj, k + dk)];
        double t = f0 / (f0 - f1); // linear zero crossing; signs differ by construction
        Vec3 p0 = lo + Vec3(i * cell.x(), j * cell.y(), k * cell.z());
        Vec3 p1 = lo + Vec3((i + di) * cell.x(), (j + dj) * cell.y(), (k + dk) * cell.z());
        mesh.verts.push_back(p0 + t * (p1 - p0));
        int idx = int(mesh.verts.size()) - 1;
        edge_vertex.emplace(key, idx);
        return idx;
    };
    // cube-local edge -> (corner offset, axis)
    auto cube_edge_vertex = [&](int i, int j, int k, int e) {
        int c0 = kEdgeEnds[e][0], c1 = kEdgeEnds[e][1];
        int ax = 0;
        for (int a = 0; a < 3; ++a)
            if (kCorner[c0][a] != kCorner[c1][a]) ax = a;
        int base = kCorner[c0][ax] <= kCorner[c1][ax] ? c0 : c1;
        return vertex_on_edge(i + kCorner[base][0], j + kCorner[base][1], k + kCorner[base][2], ax);
    };

    for (int i = 0; i < resolution; ++i)
        for (int j = 0; j < resolution; ++j)
            for (int k = 0; k < resolution; ++k) {
                int ci = 0;
                for (int c = 0; c < 8; ++c) {
                    double v = grid[gid(i + kCorner[c][0], j + kCorner[c][1], k + kCorner[c][2])];
                    if (v < 0.0) ci |= 1 << c;
                }
                const signed char* tri = mc::kTriTable[ci];
                for (int e = 0; tri[e] != -1; e += 3) {
                    // reversed order so normals point out of the negative region
                    int a = cube_edge_vertex(i, j, k, tri[e]);
                    int b = cube_edge_vertex(i, j, k, tri[e + 2]);
                    int c = cube_edge_vertex(i, j, k, tri[e + 1]);
                    if (a == b || b == c || a == c) continue;
                    mesh.tris.push_back({a, b, c});
                }
            }

    // drop exact zero-area leftovers (welded slivers along grid faces)
    std::vector<std::array<int, 3>> kept;
    kept.reserve(mesh.tris.size());
    for (size_t f = 0; f < mesh.tris.size(); ++f)
        if (mesh.tri_normal(int(f)).norm() > 1e-12) kept.push_back(mesh.tris[f]);
    mesh.tris.swap(kept);

    out.empty_surface = mesh.tris.empty();
    return out;
}

MarchResult marching_cubes(const FieldSet& fs, int resolution, const Vec3& lo, const Vec3& hi) {
    return marching_cubes([&fs](const Mat& P) { return fs.eval_sdf_batch(P); }, resolution, lo, hi);
}

} // namespace ocsr
