#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "tacrep/geom.hpp"
#include "tacrep/image.hpp"

namespace tacrep::synthgel {

enum class ShapeKind { Sphere, HexRod, TexturedBlob, Edge, Corner };

inline std::string to_string(ShapeKind k) {
  switch (k) {
    case ShapeKind::Sphere: return "sphere";
    case ShapeKind::HexRod: return "hex_rod";
    case ShapeKind::TexturedBlob: return "textured_blob";
    case ShapeKind::Edge: return "edge";
    case ShapeKind::Corner: return "corner";
  }
  return "?";
}

inline ShapeKind shape_kind_from_string(const std::string& s) {
  if (s == "sphere") return ShapeKind::Sphere;
  if (s == "hex_rod") return ShapeKind::HexRod;
  if (s == "textured_blob") return ShapeKind::TexturedBlob;
  if (s == "edge") return ShapeKind::Edge;
  if (s == "corner") return ShapeKind::Corner;
  throw std::invalid_argument("unknown shape kind: " + s);
}

// Millimeter-scale press geometry.
struct ObjectShape {
  ShapeKind kind = ShapeKind::Sphere;
  double radius_mm = 4.0;       // sphere / blob base radius
  double rod_width_mm = 3.0;    // hexagon inradius * 2
  double texture_amp_mm = 0.3;  // blob surface texture amplitude
  double texture_freq = 2.0;    // cycles per mm
  double wedge_slope = 1.0;     // edge/corner flank steepness (dz per lateral mm)

  void validate(double gel_thickness_mm = 2.0) const {
    if (radius_mm <= 0 || rod_width_mm <= 0 || texture_freq <= 0 || wedge_slope <= 0)
      throw std::invalid_argument("object size parameters must be > 0");
    if (texture_amp_mm < 0 || texture_amp_mm >= gel_thickness_mm)
      throw std::invalid_argument("texture amplitude must be in [0, gel thickness)");
  }
};

struct ContactScene {
  ObjectShape shape;
  Quat orientation;          // unit
  double offset_u = 0;       // px, along image x
  double offset_v = 0;       // px, along image y
  double depth_mm = 0;       // indentation, >= 0
  double shear_x = 0;        // px of tangential gel drag
  double shear_y = 0;

  void validate(double max_depth_mm = 1.5, double shear_max_px = 6.0) const {
    shape.validate();
    if (std::abs(orientation.norm() - 1.0) > 1e-6)
      throw std::invalid_argument("orientation quaternion must be unit norm");
    if (depth_mm < 0 || depth_mm > max_depth_mm)
      throw std::invalid_argument("indentation depth out of range");
    if (std::hypot(shear_x, shear_y) > shear_max_px + 1e-9)
      throw std::invalid_argument("shear exceeds shear_max");
  }
};

enum class FalloffKind { RaisedCosine, Unit };

struct SensorProfile {
  int h = 64, w = 80;
  double mm_per_px = 0.15;
  // Incoming light directions (surface -> light), unit vectors.
  std::array<Vec3, 3> light_dirs;
  std::array<std::array<double, 3>, 3> light_colors;  // RGB per light
  std::array<double, 3> tint = {0.35, 0.38, 0.42};
  double shading_gain = 1.0;
  // Marker grid.
  int marker_rows = 7, marker_cols = 9;
  double marker_radius_px = 1.6;
  double marker_spacing_px = 8.0;
  double marker_offset_x = 0, marker_offset_y = 0;  // grid shift, px
  double marker_darkness = 0.75;
  double noise_std = 0.01;
  double membrane_sigma_px = 2.0;
  FalloffKind falloff = FalloffKind::RaisedCosine;

  SensorProfile() {
    // Three lights at azimuths 90/210/330 deg, elevation 35 deg, each
    // dominantly one color channel.
    const double el = 35.0 * M_PI / 180.0;
    const double az[3] = {M_PI / 2, M_PI / 2 + 2 * M_PI / 3, M_PI / 2 + 4 * M_PI / 3};
    for (int i = 0; i < 3; ++i)
      light_dirs[i] = {std::cos(el) * std::cos(az[i]), std::cos(el) * std::sin(az[i]),
                       std::sin(el)};
    light_colors[0] = {0.55, 0.05, 0.05};
    light_colors[1] = {0.05, 0.55, 0.05};
    light_colors[2] = {0.05, 0.05, 0.55};
  }

  void validate() const {
    if (h < 8 || w < 8) throw std::invalid_argument("image size too small");
    for (auto& d : light_dirs)
      if (std::abs(d.norm() - 1.0) > 1e-9)
        throw std::invalid_argument("light directions must be unit vectors");
    if (marker_rows > 0 && marker_cols > 0) {
      double gw = (marker_cols - 1) * marker_spacing_px;
      double gh = (marker_rows - 1) * marker_spacing_px;
      double x0 = (w - 1 - gw) / 2 + marker_offset_x;
      double y0 = (h - 1 - gh) / 2 + marker_offset_y;
      if (x0 - marker_radius_px < 0 || y0 - marker_radius_px < 0 ||
          x0 + gw + marker_radius_px > w - 1 || y0 + gh + marker_radius_px > h - 1)
        throw std::invalid_argument("marker grid does not fit inside image bounds");
    }
  }

  // Rest positions of the marker grid, row-major, (x, y) px.
  std::vector<std::pair<double, double>> marker_rest() const {
    std::vector<std::pair<double, double>> out;
    if (marker_rows <= 0 || marker_cols <= 0) return out;
    double gw = (marker_cols - 1) * marker_spacing_px;
    double gh = (marker_rows - 1) * marker_spacing_px;
    double x0 = (w - 1 - gw) / 2 + marker_offset_x;
    double y0 = (h - 1 - gh) / 2 + marker_offset_y;
    for (int r = 0; r < marker_rows; ++r)
      for (int c = 0; c < marker_cols; ++c)
        out.emplace_back(x0 + c * marker_spacing_px, y0 + r * marker_spacing_px);
    return out;
  }
};

// Ground-truth marker motion: rest -> displaced, px.
struct MarkerField {
  struct Entry {
    double rest_x = 0, rest_y = 0;
    double cur_x = 0, cur_y = 0;
    bool valid = true;
  };
  std::vector<Entry> markers;
};

struct Frame {
  Image image;
  ContactScene scene;
  MarkerField markers;
};

struct EpisodeData {
  std::string id;
  double rate_hz = 10.0;
  std::vector<Frame> frames;
};

}  // namespace tacrep::synthgel
