#include "motslam/camera.hpp"

namespace motslam {

CameraModel::CameraModel(double fx, double fy, double cx, double cy, int width, int height,
                         double depth_min, double depth_max)
    : fx_(fx), fy_(fy), cx_(cx), cy_(cy), width_(width), height_(height),
      depth_min_(depth_min), depth_max_(depth_max) {
  if (fx <= 0.0 || fy <= 0.0) throw ConfigError("camera focal lengths must be positive");
  if (cx < 0.0 || cx > width || cy < 0.0 || cy > height) {
    throw ConfigError("camera principal point outside image");
  }
  if (depth_min <= 0.0 || depth_max <= depth_min) throw ConfigError("bad camera depth range");
}

PixelDepth CameraModel::projectLocal(const Point3& local) const {
  if (local.z() <= 0.0) throw BehindCameraError();
  return {{fx_ * local.x() / local.z() + cx_, fy_ * local.y() / local.z() + cy_}, local.z()};
}

PixelDepth CameraModel::project(const Pose3& pose, const Point3& world) const {
  return projectLocal(pose.inverse() * world);
}

Point3 CameraModel::backProject(const Vector2& pixel, double depth) const {
  return {(pixel.x() - cx_) / fx_ * depth, (pixel.y() - cy_) / fy_ * depth, depth};
}

bool CameraModel::inImage(const Vector2& pixel) const {
  return pixel.x() >= 0.0 && pixel.x() <= width_ - 1 && pixel.y() >= 0.0 &&
         pixel.y() <= height_ - 1;
}

bool CameraModel::inDepthRange(double depth) const {
  return depth >= depth_min_ && depth <= depth_max_;
}

Eigen::Matrix<double, 2, 3> CameraModel::projectionJacobian(const Point3& local) const {
  const double z = local.z();
  const double z2 = z * z;
  Eigen::Matrix<double, 2, 3> j;
  j << fx_ / z, 0.0, -fx_ * local.x() / z2, 0.0, fy_ / z, -fy_ * local.y() / z2;
  return j;
}

}  // namespace motslam
