#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "tacrep/rng.hpp"
#include "tacrep/synthgel/types.hpp"

namespace tacrep::synthgel {

struct Heightmap {
  int h = 0, w = 0;
  std::vector<double> mm;
  bool empty_contact = false;

  Heightmap() = default;
  Heightmap(int h_, int w_) : h(h_), w(w_), mm(static_cast<size_t>(h_) * w_, 0.0) {}
  double& at(int y, int x) { return mm[static_cast<size_t>(y) * w + x]; }
  double at(int y, int x) const { return mm[static_cast<size_t>(y) * w + x]; }
  double max_mm() const { return mm.empty() ? 0.0 : *std::max_element(mm.begin(), mm.end()); }
};

namespace detail {

// Signed distance (approximate for blob/edge/corner, exact sign) in the
// object frame. The gel presses along -z; objects open upward (+z).
inline double shape_sdf(const ObjectShape& s, const Vec3& p) {
  switch (s.kind) {
    case ShapeKind::Sphere:
      return p.norm() - s.radius_mm;
    case ShapeKind::HexRod: {
      // Hexagonal prism along x; inradius = rod_width/2.
      const double a = s.rod_width_mm / 2;
      // Face normals at 90, 150, 210 degrees in the (y,z) plane.
      double d = std::abs(p.z);
      const double c30 = std::sqrt(3.0) / 2, s30 = 0.5;
      d = std::max(d, std::abs(c30 * p.y + s30 * p.z));
      d = std::max(d, std::abs(-c30 * p.y + s30 * p.z));
      return d - a;
    }
    case ShapeKind::TexturedBlob: {
      const double f = 2 * M_PI * s.texture_freq;
      double tex = s.texture_amp_mm * std::sin(f * p.x) * std::sin(f * p.y) * std::sin(f * p.z);
      return p.norm() - s.radius_mm + tex;
    }
    case ShapeKind::Edge: {
      // Wedge, apex line along x, apex pointing -z.
      double d = s.wedge_slope * std::abs(p.y) - p.z;
      return d / std::sqrt(1 + s.wedge_slope * s.wedge_slope);
    }
    case ShapeKind::Corner: {
      double d = s.wedge_slope * std::hypot(p.x, p.y) - p.z;
      return d / std::sqrt(1 + s.wedge_slope * s.wedge_slope);
    }
  }
  return 1e9;
}

// Lowest surface z of the oriented object over the column at (x, y) mm,
// or +inf if the column misses the object. Coarse upward scan + bisection.
inline double column_elevation(const ObjectShape& shape, const Quat& inv_orient, double x,
                               double y, double z_lo, double z_hi, double coarse_step) {
  auto inside = [&](double z) {
    Vec3 p = inv_orient.rotate({x, y, z});
    return shape_sdf(shape, p) <= 0.0;
  };
  double z_in = std::numeric_limits<double>::quiet_NaN();
  for (double z = z_lo; z <= z_hi; z += coarse_step)
    if (inside(z)) {
      z_in = z;
      break;
    }
  if (std::isnan(z_in)) return std::numeric_limits<double>::infinity();
  double lo = z_in - coarse_step, hi = z_in;
  for (int it = 0; it < 40; ++it) {
    double mid = (lo + hi) / 2;
    if (inside(mid))
      hi = mid;
    else
      lo = mid;
  }
  return hi;
}

// Separable Gaussian blur, kernel truncated at 3 sigma, edge-clamped
// normalization.
inline void gaussian_blur(Heightmap& hm, double sigma) {
  if (sigma <= 0) return;
  const int r = static_cast<int>(std::ceil(3 * sigma));
  std::vector<double> k(2 * r + 1);
  double sum = 0;
  for (int i = -r; i <= r; ++i) sum += k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& v : k) v /= sum;
  std::vector<double> tmp(hm.mm.size());
  for (int y = 0; y < hm.h; ++y)
    for (int x = 0; x < hm.w; ++x) {
      double acc = 0;
      for (int i = -r; i <= r; ++i) {
        int xx = std::clamp(x + i, 0, hm.w - 1);
        acc += k[i + r] * hm.at(y, xx);
      }
      tmp[static_cast<size_t>(y) * hm.w + x] = acc;
    }
  for (int y = 0; y < hm.h; ++y)
    for (int x = 0; x < hm.w; ++x) {
      double acc = 0;
      for (int i = -r; i <= r; ++i) {
        int yy = std::clamp(y + i, 0, hm.h - 1);
        acc += k[i + r] * tmp[static_cast<size_t>(yy) * hm.w + x];
      }
      hm.at(y, x) = acc;
    }
}

}  // namespace detail

// Press geometry -> membrane-smoothed indentation heightmap (mm).
// Peak is rescaled back to the raw penetration maximum, so a centered
// convex press satisfies max == depth.
inline Heightmap render_heightmap(const ContactScene& scene, const SensorProfile& profile) {
  Heightmap hm(profile.h, profile.w);
  if (scene.depth_mm <= 0) {
    hm.empty_contact = true;
    return hm;
  }
  const Quat inv = scene.orientation.conj();
  const double cx = (profile.w - 1) / 2.0 + scene.offset_u;
  const double cy = (profile.h - 1) / 2.0 + scene.offset_v;
  // Column scan bounds sized to the largest object dimension plus the
  // wedge/corner growth across the image diagonal.
  const double img_mm = std::hypot(profile.h, profile.w) * profile.mm_per_px;
  const double obj_mm = std::max({scene.shape.radius_mm, scene.shape.rod_width_mm,
                                  scene.shape.wedge_slope * img_mm});
  const double zr = obj_mm + img_mm;
  const double coarse = 0.15;

  std::vector<double> elev(hm.mm.size());
  double emin = std::numeric_limits<double>::infinity();
  for (int y = 0; y < profile.h; ++y)
    for (int x = 0; x < profile.w; ++x) {
      double mx = (x - cx) * profile.mm_per_px;
      double my = (y - cy) * profile.mm_per_px;
      double e = detail::column_elevation(scene.shape, inv, mx, my, -zr, zr, coarse);
      elev[static_cast<size_t>(y) * profile.w + x] = e;
      emin = std::min(emin, e);
    }
  if (!std::isfinite(emin)) {
    hm.empty_contact = true;
    return hm;
  }
  double raw_max = 0;
  for (size_t i = 0; i < hm.mm.size(); ++i) {
    double pen = scene.depth_mm - (elev[i] - emin);
    hm.mm[i] = std::max(pen, 0.0);
    raw_max = std::max(raw_max, hm.mm[i]);
  }
  if (raw_max <= 0) {
    hm.empty_contact = true;
    std::fill(hm.mm.begin(), hm.mm.end(), 0.0);
    return hm;
  }
  detail::gaussian_blur(hm, profile.membrane_sigma_px);
  double smax = hm.max_mm();
  if (smax > 0) {
    double scale = raw_max / smax;
    for (auto& v : hm.mm) v *= scale;
  }
  return hm;
}

// Tri-light Lambertian shading relative to the flat-gel response, so a
// zero-gradient heightmap reproduces the background tint exactly.
inline Image shade(const Heightmap& hm, const SensorProfile& profile) {
  Image im(profile.h, profile.w);
  const Vec3 n0{0, 0, 1};
  double base[3];
  for (int l = 0; l < 3; ++l) base[l] = std::max(n0.dot(profile.light_dirs[l]), 0.0);
  for (int y = 0; y < profile.h; ++y)
    for (int x = 0; x < profile.w; ++x) {
      int xm = std::max(x - 1, 0), xp = std::min(x + 1, profile.w - 1);
      int ym = std::max(y - 1, 0), yp = std::min(y + 1, profile.h - 1);
      double gx = (hm.at(y, xp) - hm.at(y, xm)) / ((xp - xm) * profile.mm_per_px);
      double gy = (hm.at(yp, x) - hm.at(ym, x)) / ((yp - ym) * profile.mm_per_px);
      Vec3 n = Vec3{-gx, -gy, 1.0}.normalized();
      double rgb[3] = {profile.tint[0], profile.tint[1], profile.tint[2]};
      for (int l = 0; l < 3; ++l) {
        double lam = std::max(n.dot(profile.light_dirs[l]), 0.0) - base[l];
        for (int c = 0; c < 3; ++c) rgb[c] += profile.shading_gain * profile.light_colors[l][c] * lam;
      }
      for (int c = 0; c < 3; ++c) im.at(y, x, c) = static_cast<float>(rgb[c]);
    }
  im.clip01();
  return im;
}

namespace detail {

inline bool in_support(const Heightmap& hm, double x, double y) {
  int xi = static_cast<int>(std::lround(x)), yi = static_cast<int>(std::lround(y));
  if (xi < 0 || xi >= hm.w || yi < 0 || yi >= hm.h) return false;
  return hm.at(yi, xi) > 1e-9;
}

}  // namespace detail

// Shear-driven marker displacement. Markers inside the contact support
// move by shear scaled with a raised-cosine falloff from the contact
// center to the support boundary; markers outside do not move.
inline MarkerField displace_markers(const SensorProfile& profile, const ContactScene& scene,
                                    const Heightmap& hm) {
  MarkerField field;
  auto rest = profile.marker_rest();
  if (rest.empty()) return field;

  // Height-weighted support centroid = contact center.
  double wsum = 0, cx = 0, cy = 0;
  for (int y = 0; y < hm.h; ++y)
    for (int x = 0; x < hm.w; ++x) {
      double v = hm.at(y, x);
      if (v > 1e-9) {
        wsum += v;
        cx += v * x;
        cy += v * y;
      }
    }
  const bool has_contact = wsum > 0;
  if (has_contact) {
    cx /= wsum;
    cy /= wsum;
  }

  for (auto& [rx, ry] : rest) {
    MarkerField::Entry e;
    e.rest_x = rx;
    e.rest_y = ry;
    double f = 0;
    if (has_contact && detail::in_support(hm, rx, ry)) {
      if (profile.falloff == FalloffKind::Unit) {
        f = 1.0;
      } else {
        double dx = rx - cx, dy = ry - cy;
        double r = std::hypot(dx, dy);
        if (r < 1e-9) {
          f = 1.0;
        } else {
          double ux = dx / r, uy = dy / r;
          double t = r;
          while (detail::in_support(hm, cx + (t + 0.5) * ux, cy + (t + 0.5) * uy)) t += 0.5;
          double ratio = std::min(r / std::max(t, r), 1.0);
          f = 0.5 * (1 + std::cos(M_PI * ratio));
        }
      }
    }
    e.cur_x = rx + scene.shear_x * f;
    e.cur_y = ry + scene.shear_y * f;
    field.markers.push_back(e);
  }
  return field;
}

inline MarkerField displace_markers(const SensorProfile& profile, const ContactScene& scene) {
  return displace_markers(profile, scene, render_heightmap(scene, profile));
}

// Anti-aliased dark disks at the displaced marker positions.
inline void draw_markers(Image& im, const MarkerField& field, const SensorProfile& profile) {
  const double R = profile.marker_radius_px;
  for (auto& m : field.markers) {
    if (!m.valid) continue;
    int x0 = std::max(0, static_cast<int>(std::floor(m.cur_x - R - 1)));
    int x1 = std::min(im.w - 1, static_cast<int>(std::ceil(m.cur_x + R + 1)));
    int y0 = std::max(0, static_cast<int>(std::floor(m.cur_y - R - 1)));
    int y1 = std::min(im.h - 1, static_cast<int>(std::ceil(m.cur_y + R + 1)));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        double d = std::hypot(x - m.cur_x, y - m.cur_y);
        double cov = std::clamp(R + 0.5 - d, 0.0, 1.0);
        if (cov <= 0) continue;
        float k = static_cast<float>(1.0 - profile.marker_darkness * cov);
        for (int c = 0; c < 3; ++c) im.at(y, x, c) *= k;
      }
  }
}

inline void add_noise(Image& im, const SensorProfile& profile, Rng& rng) {
  if (profile.noise_std <= 0) return;
  for (auto& v : im.px) v = static_cast<float>(v + rng.normal(0.0, profile.noise_std));
  im.clip01();
}

// Flat gel + rest markers, no noise: the sensor's idle appearance.
inline Image background_template(const SensorProfile& profile) {
  Heightmap flat(profile.h, profile.w);
  Image im = shade(flat, profile);
  MarkerField field;
  for (auto& [rx, ry] : profile.marker_rest()) {
    MarkerField::Entry e;
    e.rest_x = e.cur_x = rx;
    e.rest_y = e.cur_y = ry;
    field.markers.push_back(e);
  }
  draw_markers(im, field, profile);
  return im;
}

inline Frame render_frame(const ContactScene& scene, const SensorProfile& profile, Rng& rng) {
  Frame f;
  f.scene = scene;
  Heightmap hm = render_heightmap(scene, profile);
  f.image = shade(hm, profile);
  f.markers = displace_markers(profile, scene, hm);
  draw_markers(f.image, f.markers, profile);
  add_noise(f.image, profile, rng);
  return f;
}

}  // namespace tacrep::synthgel
