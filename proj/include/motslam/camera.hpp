#pragma once

#include "motslam/pose3.hpp"
#include "motslam/types.hpp"

namespace motslam {

struct PixelDepth {
  Vector2 pixel;  // (u, v), pixels
  double depth;   // m, local z
};

// Pinhole camera with a rectangular image and a usable depth range.
class CameraModel {
 public:
  CameraModel() = default;
  CameraModel(double fx, double fy, double cx, double cy, int width, int height,
              double depth_min, double depth_max);

  double fx() const { return fx_; }
  double fy() const { return fy_; }
  double cx() const { return cx_; }
  double cy() const { return cy_; }
  int width() const { return width_; }
  int height() const { return height_; }
  double depthMin() const { return depth_min_; }
  double depthMax() const { return depth_max_; }

  // Projects a camera-local point. Throws BehindCameraError when z <= 0.
  PixelDepth projectLocal(const Point3& local) const;

  // Projects a world point seen by a camera at `pose` (world-from-camera).
  PixelDepth project(const Pose3& pose, const Point3& world) const;

  // Inverse of projectLocal: pixel + depth to a camera-local point.
  Point3 backProject(const Vector2& pixel, double depth) const;

  bool inImage(const Vector2& pixel) const;
  bool inDepthRange(double depth) const;

  // d(pixel)/d(local point) of the pinhole projection, 2x3 at `local`.
  Eigen::Matrix<double, 2, 3> projectionJacobian(const Point3& local) const;

 private:
  double fx_ = 500.0, fy_ = 500.0, cx_ = 320.0, cy_ = 240.0;
  int width_ = 640, height_ = 480;
  double depth_min_ = 0.1, depth_max_ = 100.0;
};

}  // namespace motslam
