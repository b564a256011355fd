#include "fieldgen/asset.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace fieldgen {

namespace {

constexpr double kPi = 3.14159265358979323846;

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

Vec3 hsv_to_rgb(double h, double s, double v) {
    h = h - std::floor(h);
    double c = v * s;
    double hp = h * 6.0;
    double xcomp = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    if (hp < 1) { r = c; g = xcomp; }
    else if (hp < 2) { r = xcomp; g = c; }
    else if (hp < 3) { g = c; b = xcomp; }
    else if (hp < 4) { g = xcomp; b = c; }
    else if (hp < 5) { r = xcomp; b = c; }
    else { r = c; b = xcomp; }
    double m = v - c;
    return {r + m, g + m, b + m};
}

// Conventional outside-positive distances; make_asset negates them.
double sd_sphere(const Vec3& p, double r) { return p.norm() - r; }

double sd_box(const Vec3& p, const Vec3& h) {
    Vec3 q{std::fabs(p.x) - h.x, std::fabs(p.y) - h.y, std::fabs(p.z) - h.z};
    Vec3 qp{std::max(q.x, 0.0), std::max(q.y, 0.0), std::max(q.z, 0.0)};
    return qp.norm() + std::min(std::max({q.x, q.y, q.z}), 0.0);
}

double sd_torus(const Vec3& p, double R, double r) {
    double qx = std::sqrt(p.x * p.x + p.y * p.y) - R;
    return std::sqrt(qx * qx + p.z * p.z) - r;
}

double sd_cylinder(const Vec3& p, double r, double h) {
    double dx = std::sqrt(p.x * p.x + p.y * p.y) - r;
    double dz = std::fabs(p.z) - h;
    double ox = std::max(dx, 0.0), oz = std::max(dz, 0.0);
    return std::min(std::max(dx, dz), 0.0) + std::sqrt(ox * ox + oz * oz);
}

struct ShapeParams {
    // Shared slots, meaning depends on kind.
    double a = 0, b = 0, c = 0;
    Vec3 offset1, offset2;  // UnionPair component centers
};

ShapeParams derive_params(const AssetSpec& s) {
    ShapeParams p;
    switch (s.kind) {
        case ShapeKind::Sphere:
            p.a = 0.35 + 0.5 * s.size;
            break;
        case ShapeKind::Box:
            p.a = 0.3 + 0.4 * s.size;
            p.b = p.a * (0.55 + 0.45 * s.aspect);
            p.c = p.a * (0.55 + 0.45 * (1.0 - s.aspect));
            break;
        case ShapeKind::Torus:
            p.a = 0.4 + 0.25 * s.size;                // major radius
            p.b = p.a * (0.28 + 0.3 * s.aspect);      // minor radius
            break;
        case ShapeKind::Cylinder:
            p.a = 0.25 + 0.3 * s.size;                // radius
            p.b = 0.3 + 0.45 * s.aspect;              // half height
            break;
        case ShapeKind::UnionPair:
            p.a = 0.25 + 0.2 * s.size;                // sphere radius
            p.b = 0.22 + 0.15 * s.aspect;             // box half extent
            p.offset1 = {-0.35, 0, 0};
            p.offset2 = {0.35, 0, 0};
            break;
    }
    return p;
}

}  // namespace

const char* shape_kind_name(ShapeKind k) {
    switch (k) {
        case ShapeKind::Sphere: return "sphere";
        case ShapeKind::Box: return "box";
        case ShapeKind::Torus: return "torus";
        case ShapeKind::Cylinder: return "cylinder";
        case ShapeKind::UnionPair: return "union";
    }
    return "?";
}

ShapeKind shape_kind_from_name(const std::string& name) {
    for (ShapeKind k : {ShapeKind::Sphere, ShapeKind::Box, ShapeKind::Torus,
                        ShapeKind::Cylinder, ShapeKind::UnionPair})
        if (name == shape_kind_name(k)) return k;
    throw std::invalid_argument("unknown shape kind: " + name);
}

Asset make_asset(const AssetSpec& spec) {
    if (spec.size < 0 || spec.size > 1 || spec.aspect < 0 || spec.aspect > 1)
        throw std::invalid_argument(
            "make_asset: size/aspect must lie in [0,1] to keep the shape in bounds");
    ShapeParams p = derive_params(spec);

    Asset a;
    a.id = std::string(shape_kind_name(spec.kind)) + "_" + std::to_string(spec.seed);
    a.label = shape_kind_name(spec.kind);
    a.label_id = static_cast<int>(spec.kind);

    switch (spec.kind) {
        case ShapeKind::Sphere: {
            double r = p.a;
            a.sdf = [r](const Vec3& x) { return -sd_sphere(x, r); };
            a.bounds_min = {-r, -r, -r};
            a.bounds_max = {r, r, r};
            break;
        }
        case ShapeKind::Box: {
            Vec3 h{p.a, p.b, p.c};
            a.sdf = [h](const Vec3& x) { return -sd_box(x, h); };
            a.bounds_min = -h;
            a.bounds_max = h;
            break;
        }
        case ShapeKind::Torus: {
            double R = p.a, r = p.b;
            a.sdf = [R, r](const Vec3& x) { return -sd_torus(x, R, r); };
            a.bounds_min = {-(R + r), -(R + r), -r};
            a.bounds_max = {R + r, R + r, r};
            break;
        }
        case ShapeKind::Cylinder: {
            double r = p.a, h = p.b;
            a.sdf = [r, h](const Vec3& x) { return -sd_cylinder(x, r, h); };
            a.bounds_min = {-r, -r, -h};
            a.bounds_max = {r, r, h};
            break;
        }
        case ShapeKind::UnionPair: {
            double r = p.a, h = p.b;
            Vec3 o1 = p.offset1, o2 = p.offset2;
            a.sdf = [r, h, o1, o2](const Vec3& x) {
                return std::max(-sd_sphere(x - o1, r), -sd_box(x - o2, {h, h, h}));
            };
            a.bounds_min = {o1.x - r, -std::max(r, h), -std::max(r, h)};
            a.bounds_max = {o2.x + h, std::max(r, h), std::max(r, h)};
            break;
        }
    }
    for (double v : {a.bounds_min.x, a.bounds_min.y, a.bounds_min.z, a.bounds_max.x,
                     a.bounds_max.y, a.bounds_max.z})
        if (v < -1.0 - 1e-12 || v > 1.0 + 1e-12)
            throw std::invalid_argument("make_asset: shape exceeds [-1,1]^3");

    Vec3 base = hsv_to_rgb(spec.hue, 0.75, 0.9);
    Vec3 second = hsv_to_rgb(spec.hue + 0.35, 0.75, 0.85);
    double z0 = a.bounds_min.z, z1 = a.bounds_max.z;
    a.color = [base, second, z0, z1](const Vec3& x) {
        double t = clamp01((x.z - z0) / std::max(z1 - z0, 1e-9));
        Vec3 c = base * (1.0 - t) + second * t;
        return Vec3{clamp01(c.x), clamp01(c.y), clamp01(c.z)};
    };
    return a;
}

PointCloud sample_point_cloud(const Asset& asset, int n, uint64_t seed) {
    if (n < 1) throw std::invalid_argument("sample_point_cloud: n must be >= 1");
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    // Surface samplers are exact per primitive; union components get
    // rejection against the partner shape.
    AssetSpec spec;
    spec.kind = shape_kind_from_name(asset.label);
    // Geometry is recovered through the asset's own sdf for rejection, and
    // through bounds for parameter-free sampling below.
    PointCloud pc;
    pc.points.reserve(n);
    pc.colors.reserve(n);

    auto try_push = [&](const Vec3& p) {
        if (std::fabs(asset.sdf(p)) < 1e-9) {
            pc.points.push_back(p);
            pc.colors.push_back(asset.color(p));
            return true;
        }
        return false;
    };

    const Vec3 lo = asset.bounds_min, hi = asset.bounds_max;
    int guard = 0;
    while (static_cast<int>(pc.points.size()) < n) {
        if (++guard > 200 * n)
            throw std::runtime_error("sample_point_cloud: degenerate surface for " +
                                     asset.id);
        switch (spec.kind) {
            case ShapeKind::Sphere: {
                double r = hi.x;
                Vec3 d{gauss(rng), gauss(rng), gauss(rng)};
                try_push(d.normalized() * r);
                break;
            }
            case ShapeKind::Box: {
                Vec3 h = hi;
                double ax = h.y * h.z, ay = h.x * h.z, az = h.x * h.y;
                double pick = uni(rng) * (ax + ay + az);
                double sgn = uni(rng) < 0.5 ? -1.0 : 1.0;
                double u = uni(rng) * 2 - 1, v = uni(rng) * 2 - 1;
                Vec3 q;
                if (pick < ax) q = {sgn * h.x, u * h.y, v * h.z};
                else if (pick < ax + ay) q = {u * h.x, sgn * h.y, v * h.z};
                else q = {u * h.x, v * h.y, sgn * h.z};
                try_push(q);
                break;
            }
            case ShapeKind::Torus: {
                double r = hi.z;
                double R = hi.x - r;
                double u = uni(rng) * 2 * kPi;
                double v = uni(rng) * 2 * kPi;
                // area-proportional acceptance over the tube angle
                if (uni(rng) * (R + r) > R + r * std::cos(v)) break;
                Vec3 q{(R + r * std::cos(v)) * std::cos(u),
                       (R + r * std::cos(v)) * std::sin(u), r * std::sin(v)};
                try_push(q);
                break;
            }
            case ShapeKind::Cylinder: {
                double r = hi.x, h = hi.z;
                double side = 2 * kPi * r * 2 * h;
                double caps = 2 * kPi * r * r;
                if (uni(rng) * (side + caps) < side) {
                    double u = uni(rng) * 2 * kPi;
                    Vec3 q{r * std::cos(u), r * std::sin(u), (uni(rng) * 2 - 1) * h};
                    try_push(q);
                } else {
                    double u = uni(rng) * 2 * kPi;
                    double rr = r * std::sqrt(uni(rng));
                    double zc = uni(rng) < 0.5 ? -h : h;
                    try_push({rr * std::cos(u), rr * std::sin(u), zc});
                }
                break;
            }
            case ShapeKind::UnionPair: {
                // Regenerate component parameters from the bounds.
                Vec3 o1{-0.35, 0, 0}, o2{0.35, 0, 0};
                double r = o1.x - lo.x;     // sphere radius
                double h = hi.x - o2.x;     // box half extent
                Vec3 q;
                if (uni(rng) < 0.5) {
                    Vec3 d{gauss(rng), gauss(rng), gauss(rng)};
                    q = o1 + d.normalized() * r;
                } else {
                    double pick = uni(rng) * 3;
                    double sgn = uni(rng) < 0.5 ? -1.0 : 1.0;
                    double u = uni(rng) * 2 - 1, v = uni(rng) * 2 - 1;
                    if (pick < 1) q = o2 + Vec3{sgn * h, u * h, v * h};
                    else if (pick < 2) q = o2 + Vec3{u * h, sgn * h, v * h};
                    else q = o2 + Vec3{u * h, v * h, sgn * h};
                }
                if (asset.sdf(q) <= 1e-9) try_push(q);
                break;
            }
        }
    }
    return pc;
}

MultiviewRender render_view(const Asset& asset, const Camera& cam,
                            const LightRig& light) {
    MultiviewRender out;
    out.camera = cam;
    out.image = Image(cam.width, cam.height, 7);
    double dist = cam.origin.norm();
    double scene_r = 1.75;  // bounding sphere of [-1,1]^3 plus margin
    double t_near = std::max(dist - scene_r, 1e-3);
    double t_far = dist + scene_r;
    auto rays = cast_rays(cam, t_near, t_far);
    Vec3 L = light.direction.normalized();

    for (int i = 0; i < cam.height; ++i) {
        for (int j = 0; j < cam.width; ++j) {
            const Ray& r = rays[i * cam.width + j];
            double t = r.t_near;
            bool hit = false;
            for (int step = 0; step < 512 && t < r.t_far; ++step) {
                Vec3 p = r.origin + r.dir * t;
                double gap = -asset.sdf(p);  // distance when outside
                if (gap < 1e-5) {
                    hit = gap < 1e-3;
                    break;
                }
                t += gap;
            }
            if (!hit) continue;
            Vec3 p = r.origin + r.dir * t;
            const double h = 1e-5;
            Vec3 g{(asset.sdf({p.x + h, p.y, p.z}) - asset.sdf({p.x - h, p.y, p.z})),
                   (asset.sdf({p.x, p.y + h, p.z}) - asset.sdf({p.x, p.y - h, p.z})),
                   (asset.sdf({p.x, p.y, p.z + h}) - asset.sdf({p.x, p.y, p.z - h}))};
            Vec3 n = (-g).normalized();  // gradient points inward
            Vec3 albedo = asset.color(p);
            double shade = light.ambient + light.diffuse * std::max(0.0, n.dot(L));
            out.image.at(i, j, 0) = static_cast<float>(clamp01(albedo.x * shade));
            out.image.at(i, j, 1) = static_cast<float>(clamp01(albedo.y * shade));
            out.image.at(i, j, 2) = static_cast<float>(clamp01(albedo.z * shade));
            out.image.at(i, j, 3) = 1.0f;
            out.image.at(i, j, 4) = static_cast<float>(p.x);
            out.image.at(i, j, 5) = static_cast<float>(p.y);
            out.image.at(i, j, 6) = static_cast<float>(p.z);
        }
    }
    return out;
}

std::vector<MultiviewRender> render_views(const Asset& asset,
                                          const std::vector<Camera>& cams,
                                          const LightRig& light) {
    std::vector<MultiviewRender> out;
    out.reserve(cams.size());
    for (const Camera& c : cams) out.push_back(render_view(asset, c, light));
    return out;
}

std::vector<AssetSpec> make_dataset_specs(int count, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const ShapeKind kinds[] = {ShapeKind::Sphere, ShapeKind::Box, ShapeKind::Torus,
                               ShapeKind::Cylinder};
    std::vector<AssetSpec> specs;
    specs.reserve(count);
    for (int i = 0; i < count; ++i) {
        AssetSpec s;
        s.kind = kinds[i % 4];
        s.seed = seed * 1000003ULL + i;
        s.size = uni(rng);
        s.aspect = uni(rng);
        s.hue = uni(rng);
        specs.push_back(s);
    }
    return specs;
}

}  // namespace fieldgen
