#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "tacrep/image.hpp"
#include "tacrep/synthgel/types.hpp"

namespace tacrep::markertrack {

struct Centroid {
  double x = 0, y = 0;
};

struct DetectParams {
  double nominal_dot_area_px = 8.0;  // pi * r^2 of the expected dot
  // Area band tolerates reconstruction blur.
  double area_band_lo = 0.3, area_band_hi = 3.0;

  static DetectParams for_profile(const synthgel::SensorProfile& p) {
    DetectParams d;
    d.nominal_dot_area_px = M_PI * p.marker_radius_px * p.marker_radius_px;
    return d;
  }
};

namespace detail {

inline int otsu_threshold(const std::vector<int>& hist, int total) {
  double sum = 0;
  for (int i = 0; i < 256; ++i) sum += static_cast<double>(i) * hist[i];
  double sum_b = 0;
  int w_b = 0;
  double best_var = -1;
  int best_t = 127;
  for (int t = 0; t < 256; ++t) {
    w_b += hist[t];
    if (w_b == 0) continue;
    int w_f = total - w_b;
    if (w_f == 0) break;
    sum_b += static_cast<double>(t) * hist[t];
    double m_b = sum_b / w_b;
    double m_f = (sum - sum_b) / w_f;
    double between = static_cast<double>(w_b) * w_f * (m_b - m_f) * (m_b - m_f);
    if (between > best_var) {
      best_var = between;
      best_t = t;
    }
  }
  return best_t;
}

}  // namespace detail

// Dark-blob detector: Otsu threshold on grayscale, 8-connected components
// within an area band, intensity-weighted centroids. Output is sorted
// lexicographically by (y, x).
inline std::vector<Centroid> detect_markers(const Image& im, const DetectParams& params) {
  const int h = im.h, w = im.w;
  std::vector<float> gray(static_cast<size_t>(h) * w);
  std::vector<int> hist(256, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float g = (im.at(y, x, 0) + im.at(y, x, 1) + im.at(y, x, 2)) / 3.f;
      gray[static_cast<size_t>(y) * w + x] = g;
      ++hist[std::clamp(static_cast<int>(g * 255.f), 0, 255)];
    }
  const int t = detail::otsu_threshold(hist, h * w);
  const float thr = (t + 0.5f) / 255.f;

  // Degenerate image (effectively uniform): nothing to detect.
  int dark = 0;
  for (auto g : gray) dark += g < thr;
  if (dark == 0 || dark == h * w) return {};

  std::vector<int> label(gray.size(), -1);
  std::vector<Centroid> out;
  std::vector<size_t> stack;
  const double area_lo = params.area_band_lo * params.nominal_dot_area_px;
  const double area_hi = params.area_band_hi * params.nominal_dot_area_px;
  int next_label = 0;
  for (size_t start = 0; start < gray.size(); ++start) {
    if (label[start] >= 0 || gray[start] >= thr) continue;
    // Flood fill one component.
    stack.assign(1, start);
    label[start] = next_label;
    std::vector<size_t> pixels;
    while (!stack.empty()) {
      size_t p = stack.back();
      stack.pop_back();
      pixels.push_back(p);
      int py = static_cast<int>(p / w), px = static_cast<int>(p % w);
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          int ny = py + dy, nx = px + dx;
          if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
          size_t np = static_cast<size_t>(ny) * w + nx;
          if (label[np] < 0 && gray[np] < thr) {
            label[np] = next_label;
            stack.push_back(np);
          }
        }
    }
    ++next_label;
    double area = static_cast<double>(pixels.size());
    if (area < area_lo || area > area_hi) continue;
    double wsum = 0, cx = 0, cy = 0;
    for (size_t p : pixels) {
      double weight = thr - gray[p];  // darker pixels weigh more
      wsum += weight;
      cx += weight * static_cast<double>(p % w);
      cy += weight * static_cast<double>(p / w);
    }
    if (wsum <= 0) continue;
    out.push_back({cx / wsum, cy / wsum});
  }
  std::sort(out.begin(), out.end(), [](const Centroid& a, const Centroid& b) {
    return a.y != b.y ? a.y < b.y : a.x < b.x;
  });
  return out;
}

inline std::vector<Centroid> detect_markers(const Image& im,
                                            const synthgel::SensorProfile& profile) {
  return detect_markers(im, DetectParams::for_profile(profile));
}

// Mutual-nearest-neighbor matching with a max-displacement gate. The
// result keeps one entry per reference centroid; unmatched entries are
// flagged invalid.
inline synthgel::MarkerField match_markers(const std::vector<Centroid>& reference,
                                           const std::vector<Centroid>& current,
                                           double grid_spacing_px, double gate_factor = 0.6) {
  if (reference.empty() || current.empty())
    throw std::invalid_argument("match_markers: empty centroid list");
  const double gate = gate_factor * grid_spacing_px;
  auto nearest = [](const Centroid& c, const std::vector<Centroid>& list) {
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < list.size(); ++i) {
      double d = std::hypot(c.x - list[i].x, c.y - list[i].y);
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(i);
      }
    }
    return std::pair{best, best_d};
  };

  synthgel::MarkerField field;
  for (auto& r : reference) {
    synthgel::MarkerField::Entry e;
    e.rest_x = r.x;
    e.rest_y = r.y;
    auto [j, d] = nearest(r, current);
    bool ok = j >= 0 && d <= gate;
    if (ok) {
      auto [back, _] = nearest(current[j], reference);
      ok = back >= 0 && reference[back].x == r.x && reference[back].y == r.y;
    }
    if (ok) {
      e.cur_x = current[j].x;
      e.cur_y = current[j].y;
      e.valid = true;
    } else {
      e.cur_x = r.x;
      e.cur_y = r.y;
      e.valid = false;
    }
    field.markers.push_back(e);
  }
  return field;
}

struct FieldError {
  double mean_px = 0;
  double max_px = 0;
  std::vector<double> per_marker;  // indexed like the common-valid subset
  int common_valid = 0;
};

// Mean endpoint error between two displacement fields computed from the
// same reference grid (entries paired by index).
inline FieldError compare_fields(const synthgel::MarkerField& a, const synthgel::MarkerField& b) {
  if (a.markers.size() != b.markers.size())
    throw std::invalid_argument("compare_fields: fields use different reference grids");
  FieldError err;
  double sum = 0;
  for (size_t i = 0; i < a.markers.size(); ++i) {
    const auto& ma = a.markers[i];
    const auto& mb = b.markers[i];
    if (!ma.valid || !mb.valid) continue;
    double dax = ma.cur_x - ma.rest_x, day = ma.cur_y - ma.rest_y;
    double dbx = mb.cur_x - mb.rest_x, dby = mb.cur_y - mb.rest_y;
    double e = std::hypot(dax - dbx, day - dby);
    err.per_marker.push_back(e);
    sum += e;
    err.max_px = std::max(err.max_px, e);
    ++err.common_valid;
  }
  if (err.common_valid == 0)
    throw std::runtime_error("compare_fields: no commonly valid markers");
  err.mean_px = sum / err.common_valid;
  return err;
}

// Detect + match against the profile's rest grid in one call.
inline synthgel::MarkerField track(const Image& im, const synthgel::SensorProfile& profile) {
  auto rest = profile.marker_rest();
  std::vector<Centroid> ref;
  for (auto& [x, y] : rest) ref.push_back({x, y});
  auto cur = detect_markers(im, profile);
  if (cur.empty()) {
    synthgel::MarkerField f;
    for (auto& r : ref) f.markers.push_back({r.x, r.y, r.x, r.y, false});
    return f;
  }
  return match_markers(ref, cur, profile.marker_spacing_px);
}

}  // namespace tacrep::markertrack
