#pragma once

#include <array>
#include <string>
#include <vector>

#include "fieldgen/asset.hpp"
#include "fieldgen/geometry.hpp"
#include "fieldgen/image.hpp"
#include "fieldgen/inr.hpp"

namespace fieldgen {

// Regular lattice of field values over a cubic domain, [R,R,R] with x as
// the outer axis. Values stay attached to the graph that produced them.
struct ScalarGrid {
    int res = 0;
    double lo = -1.2, hi = 1.2;
    Tensor values;

    double spacing() const { return (hi - lo) / (res - 1); }
    Vec3 point(int x, int y, int z) const {
        double h = spacing();
        return {lo + x * h, lo + y * h, lo + z * h};
    }
};

// SDF head sampled at every lattice point, zero direction embedding.
ScalarGrid query_sdf_grid(const INRParams& inr, int resolution, double lo = -1.2,
                          double hi = 1.2);

struct TriMesh {
    Tensor vertices;  // [V,3], differentiable w.r.t. the source grid
    Tensor colors;    // [V,3] in [0,1]; undefined until colored
    std::vector<std::array<int, 3>> faces;

    bool empty() const { return faces.empty(); }
    int64_t vertex_count() const { return vertices.defined() ? vertices.dim(0) : 0; }
};

// Zero-level-set extraction with edge-linear vertex placement. Outward
// normals point toward negative values (positive-inside convention); face
// ambiguities are resolved with the bilinear saddle value, so the result
// is watertight and sign-flip symmetric.
TriMesh marching_cubes(const ScalarGrid& grid, double iso = 0.0);

// Texture head at each vertex; differentiable w.r.t. latent and shared
// parameters (and vertex positions).
void color_vertices(const INRParams& inr, TriMesh& mesh);

// Ray-cast diffuse render, [H,W,4] RGBA tensor. Alpha is 1 on hit.
// Gradients reach vertex colors and, through shading and barycentric
// interpolation, vertex positions; the hit decision itself is frozen.
Tensor render_mesh(const TriMesh& mesh, const Camera& cam,
                   const LightRig& light = {});

// [H,W,C] tensor to a float image.
Image tensor_to_image(const Tensor& t);

// Mean over leading image count of sum of squared differences, divided by
// resolution^2: identical images 0, unit difference in all 4 channels 4.
Tensor stf_loss(const Tensor& render, const Tensor& target);

// ASCII OBJ with "v x y z r g b" vertex lines.
void write_obj(const std::string& path, const TriMesh& mesh);
// Binary little-endian PLY with uchar vertex colors.
void write_ply(const std::string& path, const TriMesh& mesh);

}  // namespace fieldgen
