#include <catch2/catch_amalgamated.hpp>

#include "tacrep/markertrack.hpp"
#include "tacrep/synthgel/render.hpp"

using namespace tacrep;
using namespace tacrep::markertrack;
using namespace tacrep::synthgel;

static SensorProfile grid_profile(int rows = 7, int cols = 9) {
  SensorProfile p;
  p.h = 64;
  p.w = 80;
  p.mm_per_px = 0.15;
  p.marker_rows = rows;
  p.marker_cols = cols;
  p.marker_spacing_px = 8.0;
  p.marker_radius_px = 1.6;
  p.noise_std = 0.0;
  return p;
}

TEST_CASE("clean grid image yields exactly rows*cols centroids") {
  auto p = grid_profile();
  Image im = background_template(p);
  auto cents = detect_markers(im, p);
  CHECK(cents.size() == 63);
}

TEST_CASE("detected centroids are sub-pixel accurate against ground truth") {
  auto p = grid_profile();
  Image im = background_template(p);
  auto cents = detect_markers(im, p);
  auto rest = p.marker_rest();
  REQUIRE(cents.size() == rest.size());
  for (auto& [rx, ry] : rest) {
    double best = 1e9;
    for (auto& c : cents) best = std::min(best, std::hypot(c.x - rx, c.y - ry));
    CHECK(best <= 0.25);
  }
}

TEST_CASE("single off-grid dot is localized within 0.25 px") {
  auto p = grid_profile();
  p.marker_rows = 0;  // draw one dot manually
  Heightmap flat(p.h, p.w);
  Image im = shade(flat, p);
  MarkerField f;
  f.markers.push_back({40.0, 50.0, 40.0, 50.0, true});
  std::swap(f.markers.back().cur_x, f.markers.back().cur_x);
  f.markers.back().cur_x = 40.25;  // sub-pixel position
  f.markers.back().cur_y = 50.5;
  draw_markers(im, f, p);
  auto cents = detect_markers(im, DetectParams::for_profile(grid_profile()));
  REQUIRE(cents.size() == 1);
  CHECK(std::hypot(cents[0].x - 40.25, cents[0].y - 50.5) <= 0.25);
}

TEST_CASE("markerless image yields empty detection") {
  auto p = grid_profile();
  p.marker_rows = 0;
  p.marker_cols = 0;
  ContactScene s;
  s.shape.kind = ShapeKind::Sphere;
  s.depth_mm = 0.8;
  Rng rng(0);
  Frame f = render_frame(s, p, rng);
  auto cents = detect_markers(f.image, DetectParams::for_profile(grid_profile()));
  CHECK(cents.empty());
}

TEST_CASE("marker ground truth matches rendered centroids across a frame") {
  auto p = grid_profile();
  ContactScene s;
  s.shape.kind = ShapeKind::Sphere;
  s.shape.radius_mm = 4.0;
  s.depth_mm = 1.2;
  s.shear_x = 2.0;
  s.shear_y = -1.0;
  Rng rng(0);
  Frame fr = render_frame(s, p, rng);
  auto cents = detect_markers(fr.image, p);
  int checked = 0;
  for (auto& m : fr.markers.markers) {
    double best = 1e9;
    for (auto& c : cents) best = std::min(best, std::hypot(c.x - m.cur_x, c.y - m.cur_y));
    if (best < 4.0) {  // skip any marker lost to overlap with dark shading
      CHECK(best <= 0.25);
      ++checked;
    }
  }
  CHECK(checked >= static_cast<int>(fr.markers.markers.size()) * 3 / 4);
}

TEST_CASE("identical centroid lists match with zero displacement") {
  std::vector<Centroid> ref{{10, 10}, {20, 10}, {30, 10}};
  auto field = match_markers(ref, ref, 8.0);
  for (auto& m : field.markers) {
    REQUIRE(m.valid);
    CHECK(m.cur_x - m.rest_x == 0.0);
    CHECK(m.cur_y - m.rest_y == 0.0);
  }
}

TEST_CASE("uniform shift within the gate is recovered exactly") {
  std::vector<Centroid> ref, cur;
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 4; ++x) {
      ref.push_back({10.0 + 8 * x, 10.0 + 8 * y});
      cur.push_back({12.0 + 8 * x, 10.0 + 8 * y});
    }
  auto field = match_markers(ref, cur, 8.0);
  for (auto& m : field.markers) {
    REQUIRE(m.valid);
    CHECK(m.cur_x - m.rest_x == Catch::Approx(2.0).margin(0.25));
    CHECK(m.cur_y - m.rest_y == Catch::Approx(0.0).margin(0.25));
  }
}

TEST_CASE("occluded marker is flagged invalid, others still match") {
  std::vector<Centroid> ref, cur;
  for (int i = 0; i < 5; ++i) ref.push_back({10.0 + 8 * i, 10.0});
  for (int i = 0; i < 5; ++i)
    if (i != 2) cur.push_back({10.0 + 8 * i, 11.0});
  auto field = match_markers(ref, cur, 8.0);
  REQUIRE(field.markers.size() == 5);
  CHECK_FALSE(field.markers[2].valid);
  for (int i = 0; i < 5; ++i)
    if (i != 2) {
      REQUIRE(field.markers[i].valid);
      CHECK(field.markers[i].cur_y - field.markers[i].rest_y == Catch::Approx(1.0));
    }
}

TEST_CASE("matching is invariant to current-list ordering") {
  std::vector<Centroid> ref, cur;
  Rng rng(5);
  for (int i = 0; i < 12; ++i) {
    double x = 8.0 + 8 * (i % 4), y = 8.0 + 8 * (i / 4);
    ref.push_back({x, y});
    cur.push_back({x + rng.uniform(-2, 2), y + rng.uniform(-2, 2)});
  }
  auto shuffled = cur;
  rng.shuffle(shuffled.begin(), shuffled.end());
  auto f1 = match_markers(ref, cur, 8.0);
  auto f2 = match_markers(ref, shuffled, 8.0);
  for (size_t i = 0; i < f1.markers.size(); ++i) {
    CHECK(f1.markers[i].valid == f2.markers[i].valid);
    CHECK(f1.markers[i].cur_x == f2.markers[i].cur_x);
    CHECK(f1.markers[i].cur_y == f2.markers[i].cur_y);
  }
}

TEST_CASE("field error is a pseudometric with analytic bias case") {
  MarkerField a;
  for (int i = 0; i < 6; ++i) a.markers.push_back({8.0 * i, 0, 8.0 * i + 1.5, 0.5, true});
  auto self = compare_fields(a, a);
  CHECK(self.mean_px == 0.0);

  MarkerField b = a;
  for (auto& m : b.markers) m.cur_x += 1.0;  // uniform (1,0) bias
  auto e1 = compare_fields(a, b);
  auto e2 = compare_fields(b, a);
  CHECK(e1.mean_px == Catch::Approx(1.0));
  CHECK(e1.max_px == Catch::Approx(1.0));
  CHECK(e1.mean_px == e2.mean_px);  // symmetric

  MarkerField c = a;
  for (auto& m : c.markers) m.valid = false;
  CHECK_THROWS(compare_fields(a, c));
}

TEST_CASE("detection is translation equivariant for interior markers") {
  auto p = grid_profile(5, 5);
  Image im = background_template(p);
  const int dx = 3, dy = 2;
  Image shifted(p.h, p.w);
  for (int y = 0; y < p.h; ++y)
    for (int x = 0; x < p.w; ++x)
      for (int ch = 0; ch < 3; ++ch) {
        int sy = std::clamp(y - dy, 0, p.h - 1);
        int sx = std::clamp(x - dx, 0, p.w - 1);
        shifted.at(y, x, ch) = im.at(sy, sx, ch);
      }
  auto c1 = detect_markers(im, p);
  auto c2 = detect_markers(shifted, p);
  REQUIRE(c1.size() == c2.size());
  for (size_t i = 0; i < c1.size(); ++i) {
    CHECK(c2[i].x - c1[i].x == Catch::Approx(dx).margin(1e-6));
    CHECK(c2[i].y - c1[i].y == Catch::Approx(dy).margin(1e-6));
  }
}
