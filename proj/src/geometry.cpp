#include "fieldgen/geometry.hpp"

namespace fieldgen {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

Camera make_camera(double azimuth_deg, double elevation_deg, double distance,
                   double fov_y_deg, int width, int height) {
    if (distance <= 0) throw std::invalid_argument("make_camera: distance must be > 0");
    if (width <= 0 || height <= 0)
        throw std::invalid_argument("make_camera: resolution must be positive");
    double az = azimuth_deg * kPi / 180.0;
    double el = elevation_deg * kPi / 180.0;
    Camera cam;
    cam.origin = {distance * std::cos(el) * std::cos(az),
                  distance * std::cos(el) * std::sin(az), distance * std::sin(el)};
    cam.forward = (-cam.origin).normalized();
    Vec3 world_up{0, 0, 1};
    if (std::fabs(cam.forward.z) > 0.999) world_up = {1, 0, 0};  // pole view
    cam.right = world_up.cross(cam.forward).normalized();
    cam.up = cam.forward.cross(cam.right).normalized();
    cam.fov_y_deg = fov_y_deg;
    cam.width = width;
    cam.height = height;
    return cam;
}

std::vector<Camera> eval_cameras(int views, double distance, double fov_y_deg,
                                 int resolution, double elevation_deg) {
    std::vector<Camera> cams;
    cams.reserve(views);
    for (int i = 0; i < views; ++i)
        cams.push_back(make_camera(360.0 * i / views, elevation_deg, distance,
                                   fov_y_deg, resolution, resolution));
    return cams;
}

std::vector<Ray> cast_rays(const Camera& cam, double t_near, double t_far) {
    if (!(t_near < t_far)) throw std::invalid_argument("cast_rays: t_near >= t_far");
    double tan_half = std::tan(cam.fov_y_deg * kPi / 360.0);
    double aspect = static_cast<double>(cam.width) / cam.height;
    std::vector<Ray> rays;
    rays.reserve(static_cast<size_t>(cam.width) * cam.height);
    for (int i = 0; i < cam.height; ++i) {
        for (int j = 0; j < cam.width; ++j) {
            double px = (2.0 * (j + 0.5) / cam.width - 1.0) * tan_half * aspect;
            double py = (1.0 - 2.0 * (i + 0.5) / cam.height) * tan_half;
            Ray r;
            r.origin = cam.origin;
            r.dir = (cam.forward + cam.right * px + cam.up * py).normalized();
            r.t_near = t_near;
            r.t_far = t_far;
            rays.push_back(r);
        }
    }
    return rays;
}

}  // namespace fieldgen
