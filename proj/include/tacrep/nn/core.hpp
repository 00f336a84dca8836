#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "tacrep/rng.hpp"
#include "tacrep/tensor.hpp"

namespace tacrep::nn {

template <class T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  // Adam state, lazily sized on first step.
  Tensor<T> m, v;

  void ensure_grad() {
    if (!grad.same_shape(value)) {
      grad = value;
      grad.zero();
    }
  }
};

template <class T>
class Module {
 public:
  virtual ~Module() = default;
  virtual Tensor<T> forward(const Tensor<T>& x) = 0;
  virtual Tensor<T> backward(const Tensor<T>& dy) = 0;
  virtual void collect_params(std::vector<Param<T>*>& out) {}
};

// ---------------------------------------------------------------------------
// Initialization

template <class T>
void kaiming_init(Tensor<T>& w, int fan_in, Rng& rng) {
  double std = std::sqrt(2.0 / fan_in);
  for (size_t i = 0; i < w.size(); ++i) w[i] = static_cast<T>(rng.normal(0.0, std));
}

// ---------------------------------------------------------------------------
// Conv2d: im2col + GEMM. Weight layout (Cout, Cin, K, K).

template <class T>
class Conv2d : public Module<T> {
 public:
  Conv2d(int cin, int cout, int k, int stride, int pad, Rng& rng, const std::string& name = "conv")
      : cin_(cin), cout_(cout), k_(k), stride_(stride), pad_(pad) {
    w_.name = name + ".w";
    b_.name = name + ".b";
    w_.value = Tensor<T>(cout, cin, k, k);
    b_.value = Tensor<T>::vec(cout);
    kaiming_init(w_.value, cin * k * k, rng);
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    x_ = x;
    const int n = x.n(), h = x.h(), w = x.w();
    ho_ = (h + 2 * pad_ - k_) / stride_ + 1;
    wo_ = (w + 2 * pad_ - k_) / stride_ + 1;
    if (ho_ < 1 || wo_ < 1) throw std::invalid_argument("conv output underflow");
    im2col(x, col_);
    Eigen::Map<const MatRM<T>> wm(w_.value.data(), cout_, cin_ * k_ * k_);
    Eigen::Map<const MatRM<T>> cm(col_.data(), cin_ * k_ * k_, static_cast<long>(n) * ho_ * wo_);
    Tensor<T> y(n, cout_, ho_, wo_);
    // Output of the GEMM is (Cout, N*Ho*Wo); reorder into NCHW.
    MatRM<T> ym = wm * cm;
    const T* bp = b_.value.data();
    for (int in = 0; in < n; ++in)
      for (int oc = 0; oc < cout_; ++oc) {
        const T* src = ym.data() + static_cast<size_t>(oc) * n * ho_ * wo_ +
                       static_cast<size_t>(in) * ho_ * wo_;
        T* dst = &y.at(in, oc, 0, 0);
        T bias = bp[oc];
        for (int i = 0; i < ho_ * wo_; ++i) dst[i] = src[i] + bias;
      }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    const int n = x_.n();
    w_.ensure_grad();
    b_.ensure_grad();
    // Reorder dy (NCHW) into (Cout, N*Ho*Wo) to mirror the forward GEMM.
    MatRM<T> dym(cout_, static_cast<long>(n) * ho_ * wo_);
    for (int in = 0; in < n; ++in)
      for (int oc = 0; oc < cout_; ++oc) {
        const T* src = &dy.at(in, oc, 0, 0);
        T* dst = dym.data() + static_cast<size_t>(oc) * n * ho_ * wo_ +
                 static_cast<size_t>(in) * ho_ * wo_;
        for (int i = 0; i < ho_ * wo_; ++i) dst[i] = src[i];
      }
    Eigen::Map<const MatRM<T>> cm(col_.data(), cin_ * k_ * k_, static_cast<long>(n) * ho_ * wo_);
    Eigen::Map<MatRM<T>> dwm(w_.grad.data(), cout_, cin_ * k_ * k_);
    dwm.noalias() += dym * cm.transpose();
    T* dbp = b_.grad.data();
    for (int oc = 0; oc < cout_; ++oc) dbp[oc] += dym.row(oc).sum();

    Eigen::Map<const MatRM<T>> wm(w_.value.data(), cout_, cin_ * k_ * k_);
    MatRM<T> dcol = wm.transpose() * dym;
    Tensor<T> dx(x_.n(), x_.c(), x_.h(), x_.w());
    col2im(dcol.data(), dx);
    return dx;
  }

  void collect_params(std::vector<Param<T>*>& out) override {
    out.push_back(&w_);
    out.push_back(&b_);
  }

  Param<T>& weight() { return w_; }
  Param<T>& bias() { return b_; }

 private:
  void im2col(const Tensor<T>& x, std::vector<T>& col) {
    const int n = x.n(), h = x.h(), w = x.w();
    const long cols = static_cast<long>(n) * ho_ * wo_;
    col.assign(static_cast<size_t>(cin_ * k_ * k_) * cols, T(0));
    for (int ic = 0; ic < cin_; ++ic)
      for (int ky = 0; ky < k_; ++ky)
        for (int kx = 0; kx < k_; ++kx) {
          T* row = col.data() + (static_cast<size_t>(ic) * k_ * k_ + ky * k_ + kx) * cols;
          for (int in = 0; in < n; ++in) {
            const T* xp = &x.at(in, ic, 0, 0);
            T* dst = row + static_cast<size_t>(in) * ho_ * wo_;
            for (int oy = 0; oy < ho_; ++oy) {
              int iy = oy * stride_ + ky - pad_;
              if (iy < 0 || iy >= h) {
                dst += wo_;
                continue;
              }
              for (int ox = 0; ox < wo_; ++ox, ++dst) {
                int ix = ox * stride_ + kx - pad_;
                if (ix >= 0 && ix < w) *dst = xp[iy * w + ix];
              }
            }
          }
        }
  }

  void col2im(const T* dcol, Tensor<T>& dx) {
    const int n = dx.n(), h = dx.h(), w = dx.w();
    const long cols = static_cast<long>(n) * ho_ * wo_;
    for (int ic = 0; ic < cin_; ++ic)
      for (int ky = 0; ky < k_; ++ky)
        for (int kx = 0; kx < k_; ++kx) {
          const T* row = dcol + (static_cast<size_t>(ic) * k_ * k_ + ky * k_ + kx) * cols;
          for (int in = 0; in < n; ++in) {
            T* xp = &dx.at(in, ic, 0, 0);
            const T* src = row + static_cast<size_t>(in) * ho_ * wo_;
            for (int oy = 0; oy < ho_; ++oy) {
              int iy = oy * stride_ + ky - pad_;
              if (iy < 0 || iy >= h) {
                src += wo_;
                continue;
              }
              for (int ox = 0; ox < wo_; ++ox, ++src) {
                int ix = ox * stride_ + kx - pad_;
                if (ix >= 0 && ix < w) xp[iy * w + ix] += *src;
              }
            }
          }
        }
  }

  int cin_, cout_, k_, stride_, pad_;
  int ho_ = 0, wo_ = 0;
  Param<T> w_, b_;
  Tensor<T> x_;
  std::vector<T> col_;
};

// ---------------------------------------------------------------------------
// GroupNorm with affine parameters.

template <class T>
class GroupNorm : public Module<T> {
 public:
  GroupNorm(int groups, int channels, const std::string& name = "gn", double eps = 1e-5)
      : groups_(groups), channels_(channels), eps_(eps) {
    if (channels % groups != 0) throw std::invalid_argument("channels not divisible by groups");
    g_.name = name + ".g";
    b_.name = name + ".b";
    g_.value = Tensor<T>::vec(channels);
    b_.value = Tensor<T>::vec(channels);
    g_.value.fill(T(1));
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    const int n = x.n(), c = x.c(), h = x.h(), w = x.w();
    const int cpg = c / groups_;
    const size_t gsize = static_cast<size_t>(cpg) * h * w;
    xhat_ = Tensor<T>(n, c, h, w);
    mean_.assign(static_cast<size_t>(n) * groups_, 0);
    rstd_.assign(static_cast<size_t>(n) * groups_, 0);
    Tensor<T> y(n, c, h, w);
    for (int in = 0; in < n; ++in)
      for (int g = 0; g < groups_; ++g) {
        const T* xp = &x.at(in, g * cpg, 0, 0);
        double mu = 0;
        for (size_t i = 0; i < gsize; ++i) mu += xp[i];
        mu /= gsize;
        double var = 0;
        for (size_t i = 0; i < gsize; ++i) {
          double d = xp[i] - mu;
          var += d * d;
        }
        var /= gsize;
        double rstd = 1.0 / std::sqrt(var + eps_);
        mean_[in * groups_ + g] = static_cast<T>(mu);
        rstd_[in * groups_ + g] = static_cast<T>(rstd);
        T* xh = &xhat_.at(in, g * cpg, 0, 0);
        T* yp = &y.at(in, g * cpg, 0, 0);
        for (int cc = 0; cc < cpg; ++cc) {
          T gamma = g_.value[g * cpg + cc];
          T beta = b_.value[g * cpg + cc];
          for (int i = 0; i < h * w; ++i) {
            size_t idx = static_cast<size_t>(cc) * h * w + i;
            T v = static_cast<T>((xp[idx] - mu) * rstd);
            xh[idx] = v;
            yp[idx] = gamma * v + beta;
          }
        }
      }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    const int n = dy.n(), c = dy.c(), h = dy.h(), w = dy.w();
    const int cpg = c / groups_;
    const size_t gsize = static_cast<size_t>(cpg) * h * w;
    g_.ensure_grad();
    b_.ensure_grad();
    Tensor<T> dx(n, c, h, w);
    for (int in = 0; in < n; ++in)
      for (int g = 0; g < groups_; ++g) {
        const T* dyp = &dy.at(in, g * cpg, 0, 0);
        const T* xh = &xhat_.at(in, g * cpg, 0, 0);
        double rstd = rstd_[in * groups_ + g];
        // Per-group sums of dy*gamma and dy*gamma*xhat.
        double s1 = 0, s2 = 0;
        for (int cc = 0; cc < cpg; ++cc) {
          T gamma = g_.value[g * cpg + cc];
          for (int i = 0; i < h * w; ++i) {
            size_t idx = static_cast<size_t>(cc) * h * w + i;
            double dg = static_cast<double>(dyp[idx]) * gamma;
            s1 += dg;
            s2 += dg * xh[idx];
          }
        }
        T* dxp = &dx.at(in, g * cpg, 0, 0);
        for (int cc = 0; cc < cpg; ++cc) {
          T gamma = g_.value[g * cpg + cc];
          double dgamma = 0, dbeta = 0;
          for (int i = 0; i < h * w; ++i) {
            size_t idx = static_cast<size_t>(cc) * h * w + i;
            double dg = static_cast<double>(dyp[idx]) * gamma;
            dxp[idx] = static_cast<T>(rstd * (dg - s1 / gsize - xh[idx] * s2 / gsize));
            dgamma += static_cast<double>(dyp[idx]) * xh[idx];
            dbeta += dyp[idx];
          }
          g_.grad[g * cpg + cc] += static_cast<T>(dgamma);
          b_.grad[g * cpg + cc] += static_cast<T>(dbeta);
        }
      }
    return dx;
  }

  void collect_params(std::vector<Param<T>*>& out) override {
    out.push_back(&g_);
    out.push_back(&b_);
  }

 private:
  int groups_, channels_;
  double eps_;
  Param<T> g_, b_;
  Tensor<T> xhat_;
  std::vector<T> mean_, rstd_;
};

// ---------------------------------------------------------------------------
// Pointwise activations.

template <class T>
class ReLU : public Module<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override {
    x_ = x;
    Tensor<T> y = x;
    for (size_t i = 0; i < y.size(); ++i)
      if (y[i] < 0) y[i] = 0;
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> dx = dy;
    for (size_t i = 0; i < dx.size(); ++i)
      if (x_[i] <= 0) dx[i] = 0;
    return dx;
  }

 private:
  Tensor<T> x_;
};

template <class T>
class LeakyReLU : public Module<T> {
 public:
  explicit LeakyReLU(T slope = T(0.2)) : slope_(slope) {}
  Tensor<T> forward(const Tensor<T>& x) override {
    x_ = x;
    Tensor<T> y = x;
    for (size_t i = 0; i < y.size(); ++i)
      if (y[i] < 0) y[i] *= slope_;
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> dx = dy;
    for (size_t i = 0; i < dx.size(); ++i)
      if (x_[i] <= 0) dx[i] *= slope_;
    return dx;
  }

 private:
  T slope_;
  Tensor<T> x_;
};

template <class T>
class Sigmoid : public Module<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override {
    y_ = x;
    for (size_t i = 0; i < y_.size(); ++i)
      y_[i] = static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(y_[i]))));
    return y_;
  }
  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> dx = dy;
    for (size_t i = 0; i < dx.size(); ++i) dx[i] *= y_[i] * (T(1) - y_[i]);
    return dx;
  }

 private:
  Tensor<T> y_;
};

// ---------------------------------------------------------------------------
// 2x2 max pool, stride 2, floor semantics.

template <class T>
class MaxPool2d : public Module<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override {
    const int n = x.n(), c = x.c(), h = x.h(), w = x.w();
    in_dims_ = x.dims();
    const int ho = h / 2, wo = w / 2;
    if (ho < 1 || wo < 1) throw std::invalid_argument("maxpool output underflow");
    Tensor<T> y(n, c, ho, wo);
    argmax_.assign(y.size(), 0);
    size_t oi = 0;
    for (int in = 0; in < n; ++in)
      for (int ic = 0; ic < c; ++ic) {
        const T* xp = &x.at(in, ic, 0, 0);
        for (int oy = 0; oy < ho; ++oy)
          for (int ox = 0; ox < wo; ++ox, ++oi) {
            size_t best = static_cast<size_t>(2 * oy) * w + 2 * ox;
            T bv = xp[best];
            for (int dy = 0; dy < 2; ++dy)
              for (int dx = 0; dx < 2; ++dx) {
                size_t idx = static_cast<size_t>(2 * oy + dy) * w + 2 * ox + dx;
                if (xp[idx] > bv) {
                  bv = xp[idx];
                  best = idx;
                }
              }
            y[oi] = bv;
            argmax_[oi] = (static_cast<size_t>(in) * c + ic) * h * w + best;
          }
      }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> dx(in_dims_[0], in_dims_[1], in_dims_[2], in_dims_[3]);
    for (size_t i = 0; i < dy.size(); ++i) dx[argmax_[i]] += dy[i];
    return dx;
  }

 private:
  std::array<int, 4> in_dims_{};
  std::vector<size_t> argmax_;
};

// ---------------------------------------------------------------------------
// Nearest-neighbor 2x upsampling.

template <class T>
class Upsample2x : public Module<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override {
    const int n = x.n(), c = x.c(), h = x.h(), w = x.w();
    in_dims_ = x.dims();
    Tensor<T> y(n, c, 2 * h, 2 * w);
    for (int in = 0; in < n; ++in)
      for (int ic = 0; ic < c; ++ic) {
        const T* xp = &x.at(in, ic, 0, 0);
        T* yp = &y.at(in, ic, 0, 0);
        for (int oy = 0; oy < 2 * h; ++oy)
          for (int ox = 0; ox < 2 * w; ++ox) yp[oy * 2 * w + ox] = xp[(oy / 2) * w + ox / 2];
      }
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy) override {
    const int n = in_dims_[0], c = in_dims_[1], h = in_dims_[2], w = in_dims_[3];
    Tensor<T> dx(n, c, h, w);
    for (int in = 0; in < n; ++in)
      for (int ic = 0; ic < c; ++ic) {
        const T* dyp = &dy.at(in, ic, 0, 0);
        T* dxp = &dx.at(in, ic, 0, 0);
        for (int oy = 0; oy < 2 * h; ++oy)
          for (int ox = 0; ox < 2 * w; ++ox) dxp[(oy / 2) * w + ox / 2] += dyp[oy * 2 * w + ox];
      }
    return dx;
  }

 private:
  std::array<int, 4> in_dims_{};
};

// ---------------------------------------------------------------------------
// Fully connected layer over flattened input.

template <class T>
class Linear : public Module<T> {
 public:
  Linear(int in, int out, Rng& rng, const std::string& name = "fc") : in_(in), out_(out) {
    w_.name = name + ".w";
    b_.name = name + ".b";
    w_.value = Tensor<T>(1, out, in, 1);
    b_.value = Tensor<T>::vec(out);
    kaiming_init(w_.value, in, rng);
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    x_ = x;
    const int n = x.n();
    if (static_cast<int>(x.size() / n) != in_) throw std::invalid_argument("linear input size mismatch");
    Tensor<T> y(n, out_, 1, 1);
    Eigen::Map<const MatRM<T>> wm(w_.value.data(), out_, in_);
    Eigen::Map<const MatRM<T>> xm(x.data(), n, in_);
    Eigen::Map<MatRM<T>> ym(y.data(), n, out_);
    ym.noalias() = xm * wm.transpose();
    for (int i = 0; i < n; ++i)
      for (int o = 0; o < out_; ++o) y.at(i, o, 0, 0) += b_.value[o];
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    const int n = x_.n();
    w_.ensure_grad();
    b_.ensure_grad();
    Eigen::Map<const MatRM<T>> dym(dy.data(), n, out_);
    Eigen::Map<const MatRM<T>> xm(x_.data(), n, in_);
    Eigen::Map<MatRM<T>> dwm(w_.grad.data(), out_, in_);
    dwm.noalias() += dym.transpose() * xm;
    for (int i = 0; i < n; ++i)
      for (int o = 0; o < out_; ++o) b_.grad[o] += dy.at(i, o, 0, 0);
    Tensor<T> dx(x_.n(), x_.c(), x_.h(), x_.w());
    Eigen::Map<const MatRM<T>> wm(w_.value.data(), out_, in_);
    Eigen::Map<MatRM<T>> dxm(dx.data(), n, in_);
    dxm.noalias() = dym * wm;
    return dx;
  }

  void collect_params(std::vector<Param<T>*>& out) override {
    out.push_back(&w_);
    out.push_back(&b_);
  }

 private:
  int in_, out_;
  Param<T> w_, b_;
  Tensor<T> x_;
};

// ---------------------------------------------------------------------------
// Sequential container over owned modules.

template <class T>
class Sequential : public Module<T> {
 public:
  template <class M, class... Args>
  M* add(Args&&... args) {
    auto mod = std::make_unique<M>(std::forward<Args>(args)...);
    M* raw = mod.get();
    mods_.push_back(std::move(mod));
    return raw;
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    Tensor<T> cur = x;
    for (auto& m : mods_) cur = m->forward(cur);
    return cur;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> cur = dy;
    for (auto it = mods_.rbegin(); it != mods_.rend(); ++it) cur = (*it)->backward(cur);
    return cur;
  }

  void collect_params(std::vector<Param<T>*>& out) override {
    for (auto& m : mods_) m->collect_params(out);
  }

  size_t size() const { return mods_.size(); }

 private:
  std::vector<std::unique_ptr<Module<T>>> mods_;
};

// ---------------------------------------------------------------------------
// Residual block: x + conv(relu(gn(conv(relu(gn(x)))))), 1x1 skip on
// channel change.

template <class T>
class ResBlock : public Module<T> {
 public:
  ResBlock(int cin, int cout, int groups, Rng& rng, const std::string& name = "res")
      : gn1_(std::min(groups, cin), cin, name + ".gn1"),
        conv1_(cin, cout, 3, 1, 1, rng, name + ".conv1"),
        gn2_(std::min(groups, cout), cout, name + ".gn2"),
        conv2_(cout, cout, 3, 1, 1, rng, name + ".conv2") {
    if (cin != cout) skip_ = std::make_unique<Conv2d<T>>(cin, cout, 1, 1, 0, rng, name + ".skip");
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    Tensor<T> h = conv1_.forward(relu1_.forward(gn1_.forward(x)));
    h = conv2_.forward(relu2_.forward(gn2_.forward(h)));
    Tensor<T> sk = skip_ ? skip_->forward(x) : x;
    h += sk;
    return h;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> dx = gn1_.backward(relu1_.backward(conv1_.backward(
        gn2_.backward(relu2_.backward(conv2_.backward(dy))))));
    if (skip_)
      dx += skip_->backward(dy);
    else
      dx += dy;
    return dx;
  }

  void collect_params(std::vector<Param<T>*>& out) override {
    gn1_.collect_params(out);
    conv1_.collect_params(out);
    gn2_.collect_params(out);
    conv2_.collect_params(out);
    if (skip_) skip_->collect_params(out);
  }

 private:
  GroupNorm<T> gn1_;
  ReLU<T> relu1_;
  Conv2d<T> conv1_;
  GroupNorm<T> gn2_;
  ReLU<T> relu2_;
  Conv2d<T> conv2_;
  std::unique_ptr<Conv2d<T>> skip_;
};

// ---------------------------------------------------------------------------
// Adam optimizer.

template <class T>
class Adam {
 public:
  explicit Adam(double lr = 2e-4, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(std::vector<Param<T>*>& params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(b1_, t_);
    const double bc2 = 1.0 - std::pow(b2_, t_);
    for (auto* p : params) {
      p->ensure_grad();
      if (!p->m.same_shape(p->value)) {
        p->m = p->value;
        p->m.zero();
        p->v = p->m;
      }
      for (size_t i = 0; i < p->value.size(); ++i) {
        double g = p->grad[i];
        double m = b1_ * p->m[i] + (1 - b1_) * g;
        double v = b2_ * p->v[i] + (1 - b2_) * g * g;
        p->m[i] = static_cast<T>(m);
        p->v[i] = static_cast<T>(v);
        p->value[i] -= static_cast<T>(lr_ * (m / bc1) / (std::sqrt(v / bc2) + eps_));
      }
      p->grad.zero();
    }
  }

  void zero_grad(std::vector<Param<T>*>& params) {
    for (auto* p : params) {
      p->ensure_grad();
      p->grad.zero();
    }
  }

  int64_t t() const { return t_; }
  void set_t(int64_t t) { t_ = t; }
  double lr() const { return lr_; }

 private:
  double lr_, b1_, b2_, eps_;
  int64_t t_ = 0;
};

}  // namespace tacrep::nn
