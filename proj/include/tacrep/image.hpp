#pragma once

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "tacrep/tensor.hpp"

namespace tacrep {

// RGB image, float [0,1], interleaved HWC.
struct Image {
  int h = 0, w = 0;
  std::vector<float> px;  // h*w*3

  Image() = default;
  Image(int h_, int w_) : h(h_), w(w_), px(static_cast<size_t>(h_) * w_ * 3, 0.f) {}

  float& at(int y, int x, int c) { return px[(static_cast<size_t>(y) * w + x) * 3 + c]; }
  float at(int y, int x, int c) const { return px[(static_cast<size_t>(y) * w + x) * 3 + c]; }

  void clip01() {
    for (auto& v : px) v = std::clamp(v, 0.f, 1.f);
  }

  Tensor<float> to_tensor() const {
    Tensor<float> t(1, 3, h, w);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c) t.at(0, c, y, x) = at(y, x, c);
    return t;
  }

  static Image from_tensor(const Tensor<float>& t, int n = 0) {
    Image im(t.h(), t.w());
    for (int y = 0; y < im.h; ++y)
      for (int x = 0; x < im.w; ++x)
        for (int c = 0; c < 3; ++c) im.at(y, x, c) = t.at(n, c, y, x);
    return im;
  }
};

inline void save_png(const Image& im, const std::string& path) {
  cv::Mat m(im.h, im.w, CV_8UC3);
  for (int y = 0; y < im.h; ++y)
    for (int x = 0; x < im.w; ++x) {
      auto& p = m.at<cv::Vec3b>(y, x);
      // OpenCV is BGR.
      for (int c = 0; c < 3; ++c)
        p[2 - c] = static_cast<unsigned char>(
            std::lround(std::clamp(im.at(y, x, c), 0.f, 1.f) * 255.f));
    }
  if (!cv::imwrite(path, m)) throw std::runtime_error("failed to write " + path);
}

inline Image load_png(const std::string& path) {
  cv::Mat m = cv::imread(path, cv::IMREAD_COLOR);
  if (m.empty()) throw std::runtime_error("failed to read " + path);
  Image im(m.rows, m.cols);
  for (int y = 0; y < im.h; ++y)
    for (int x = 0; x < im.w; ++x) {
      const auto& p = m.at<cv::Vec3b>(y, x);
      for (int c = 0; c < 3; ++c) im.at(y, x, c) = p[2 - c] / 255.f;
    }
  return im;
}

// PSNR for [0,1]-range images, capped at 100 dB so identical images stay finite.
inline double psnr(const Image& a, const Image& b) {
  if (a.h != b.h || a.w != b.w) throw std::invalid_argument("psnr: size mismatch");
  double mse = 0;
  for (size_t i = 0; i < a.px.size(); ++i) {
    double d = static_cast<double>(a.px[i]) - b.px[i];
    mse += d * d;
  }
  mse /= a.px.size();
  if (mse <= 0) return 100.0;
  return std::min(100.0, 10.0 * std::log10(1.0 / mse));
}

inline double l1_distance(const Image& a, const Image& b) {
  double s = 0;
  for (size_t i = 0; i < a.px.size(); ++i) s += std::abs(static_cast<double>(a.px[i]) - b.px[i]);
  return s / a.px.size();
}

// Horizontal concat of equally sized images, for side-by-side grids.
inline Image hconcat(const std::vector<Image>& imgs) {
  if (imgs.empty()) return {};
  Image out(imgs[0].h, imgs[0].w * static_cast<int>(imgs.size()));
  for (size_t k = 0; k < imgs.size(); ++k)
    for (int y = 0; y < imgs[k].h; ++y)
      for (int x = 0; x < imgs[k].w; ++x)
        for (int c = 0; c < 3; ++c)
          out.at(y, x + static_cast<int>(k) * imgs[0].w, c) = imgs[k].at(y, x, c);
  return out;
}

inline Image vconcat(const std::vector<Image>& rows) {
  if (rows.empty()) return {};
  int total_h = 0;
  for (auto& r : rows) total_h += r.h;
  Image out(total_h, rows[0].w);
  int oy = 0;
  for (auto& r : rows) {
    for (int y = 0; y < r.h; ++y)
      for (int x = 0; x < r.w; ++x)
        for (int c = 0; c < 3; ++c) out.at(oy + y, x, c) = r.at(y, x, c);
    oy += r.h;
  }
  return out;
}

}  // namespace tacrep
