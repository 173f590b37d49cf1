#pragma once

#include "ocsr/fields.hpp"
#include "ocsr/mesh.hpp"

#include <functional>

namespace ocsr {

namespace mc {
extern const signed char kTriTable[256][16];
}

struct MarchResult {
    TriMesh mesh;
    bool empty_surface = false;
};

// Classic marching cubes over a regular grid: resolution cells per axis,
// vertices interpolated at zero crossings and welded by (grid edge) key so
// closed level sets produce watertight meshes. Cells are visited in fixed
// (i,j,k) order, making vertex and triangle order deterministic.
MarchResult marching_cubes(const std::function<Mat(const Mat&)>& sdf, int resolution,
                           const Vec3& lo, const Vec3& hi);
MarchResult marching_cubes(const FieldSet& fs, int resolution, const Vec3& lo, const Vec3& hi);

} // namespace ocsr
