#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fieldgen/geometry.hpp"
#include "fieldgen/image.hpp"

namespace fieldgen {

// Sign convention: sdf > 0 strictly inside, < 0 outside, 0 on the surface.
enum class ShapeKind { Sphere, Box, Torus, Cylinder, UnionPair };

const char* shape_kind_name(ShapeKind k);
ShapeKind shape_kind_from_name(const std::string& name);

struct AssetSpec {
    ShapeKind kind = ShapeKind::Sphere;
    uint64_t seed = 0;
    // Size/color factors in [0,1]; mapped to shape-specific ranges.
    double size = 0.5;
    double aspect = 0.5;
    double hue = 0.0;
};

struct Asset {
    std::string id;
    std::string label;
    int label_id = 0;
    std::function<double(const Vec3&)> sdf;    // positive inside
    std::function<Vec3(const Vec3&)> color;    // rgb in [0,1]^3
    Vec3 bounds_min{-1, -1, -1}, bounds_max{1, 1, 1};
};

struct PointCloud {
    std::vector<Vec3> points;
    std::vector<Vec3> colors;
};

// RGBA render plus per-foreground-pixel surface coordinates (7 channels:
// r,g,b,a,x,y,z).
struct MultiviewRender {
    Image image;  // 7 channels
    Camera camera;
};

struct LightRig {
    Vec3 direction{0.408, 0.204, 0.889};  // unit vector toward the light
    double ambient = 0.2;
    double diffuse = 0.8;
};

Asset make_asset(const AssetSpec& spec);

// n exact surface samples with colors from the color field; deterministic
// per (asset spec) seed.
PointCloud sample_point_cloud(const Asset& asset, int n, uint64_t seed);

// Sphere-traced ground-truth render: ambient + Lambert diffuse under one
// fixed directional light, alpha 1 on hit.
MultiviewRender render_view(const Asset& asset, const Camera& cam,
                            const LightRig& light = {});
std::vector<MultiviewRender> render_views(const Asset& asset,
                                          const std::vector<Camera>& cams,
                                          const LightRig& light = {});

// Dataset convenience: `count` assets cycling over the four primitive
// labels with seeded size/color variation.
std::vector<AssetSpec> make_dataset_specs(int count, uint64_t seed);

}  // namespace fieldgen
