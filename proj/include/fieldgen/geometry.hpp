#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace fieldgen {

struct Vec3 {
    double x = 0, y = 0, z = 0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator-() const { return {-x, -y, -z}; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm() const { return std::sqrt(dot(*this)); }
    Vec3 normalized() const {
        double n = norm();
        return {x / n, y / n, z / n};
    }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

// Pinhole camera looking at the origin, z as the vertical axis.
struct Camera {
    Vec3 origin;
    Vec3 forward, right, up;  // orthonormal
    double fov_y_deg = 50.0;
    int width = 64, height = 64;
};

Camera make_camera(double azimuth_deg, double elevation_deg, double distance,
                   double fov_y_deg, int width, int height);

// Orbit with the evaluation convention: fixed 30-degree elevation,
// azimuths uniform on the circle.
std::vector<Camera> eval_cameras(int views, double distance, double fov_y_deg,
                                 int resolution, double elevation_deg = 30.0);

struct Ray {
    Vec3 origin;
    Vec3 dir;  // unit
    double t_near = 0, t_far = 1;
};

// One ray per pixel through the pixel center, row-major.
std::vector<Ray> cast_rays(const Camera& cam, double t_near, double t_far);

}  // namespace fieldgen
