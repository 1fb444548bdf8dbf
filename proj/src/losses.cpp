#include "adaptvo/losses.hpp"

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace adaptvo {

namespace {

double sgn(double x) noexcept { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

int reflect(int i, int n) noexcept {
  if (n == 1) return 0;
  if (i < 0) return -i;
  if (i >= n) return 2 * (n - 1) - i;
  return i;
}

struct WarpSample {
  bool valid = false;
  BilinearStencil stencil;
  BilinearValue intensity;
  BilinearValue depth;  // D_{t-1} at the warped location
  double projected = 0.0;
  double dwu_dd = 0.0;
  double dwv_dd = 0.0;
  double dz_dd = 0.0;
};

std::vector<WarpSample> warp_all(const Image* image_prev, const DepthMap* depth_prev, const DepthMap& depth_cur,
                                 const Pose& T, const CameraIntrinsics& K) {
  const int w = depth_cur.width();
  const int h = depth_cur.height();
  std::vector<WarpSample> out(depth_cur.size());
  const Mat3& R = T.rotation();
  const Vec3& t = T.translation();
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const std::size_t i = depth_cur.index(u, v);
      const double d = depth_cur[i];
      if (!(d > 0.0) || !std::isfinite(d)) continue;
      const Vec3 ray((u - K.cx) / K.fx, (v - K.cy) / K.fy, 1.0);
      const Vec3 g = R * ray;
      const Vec3 q = d * g + t;
      if (!(q.z() > 0.0)) continue;
      const Vec2 p(K.fx * q.x() / q.z() + K.cx, K.fy * q.y() / q.z() + K.cy);
      const auto st = bilinear_stencil(p, w, h);
      if (!st) continue;
      WarpSample& s = out[i];
      s.valid = true;
      s.stencil = *st;
      if (image_prev != nullptr) s.intensity = bilinear_eval(*image_prev, *st);
      if (depth_prev != nullptr) s.depth = bilinear_eval(*depth_prev, *st);
      s.projected = q.z();
      const double z2 = q.z() * q.z();
      s.dwu_dd = K.fx * (g.x() * q.z() - q.x() * g.z()) / z2;
      s.dwv_dd = K.fy * (g.y() * q.z() - q.y() * g.z()) / z2;
      s.dz_dd = g.z();
    }
  }
  return out;
}

struct SsimPartials {
  double value = 0.0;
  double d_mu_b = 0.0;
  double d_ebb = 0.0;
  double d_eab = 0.0;
};

SsimPartials ssim_at(const Image& a, const Image& b, int u, int v) {
  const int w = a.width();
  const int h = a.height();
  double sa = 0.0, sb = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
  for (int dv = -1; dv <= 1; ++dv) {
    for (int du = -1; du <= 1; ++du) {
      const int uu = reflect(u + du, w);
      const int vv = reflect(v + dv, h);
      const double x = a(uu, vv);
      const double y = b(uu, vv);
      sa += x;
      sb += y;
      saa += x * x;
      sbb += y * y;
      sab += x * y;
    }
  }
  const double mu_a = sa / 9.0;
  const double mu_b = sb / 9.0;
  const double var_a = saa / 9.0 - mu_a * mu_a;
  const double var_b = sbb / 9.0 - mu_b * mu_b;
  const double cov = sab / 9.0 - mu_a * mu_b;
  const double a1 = 2.0 * mu_a * mu_b + kSsimC1;
  const double a2 = 2.0 * cov + kSsimC2;
  const double b1 = mu_a * mu_a + mu_b * mu_b + kSsimC1;
  const double b2 = var_a + var_b + kSsimC2;
  SsimPartials out;
  out.value = (a1 * a2) / (b1 * b2);
  const double denom = b1 * b2;
  // mu_b enters a1, a2 (through cov), b1 and b2 (through var_b)
  out.d_mu_b = (2.0 * mu_a * a2 + a1 * (-2.0 * mu_a)) / denom - out.value * (2.0 * mu_b / b1 - 2.0 * mu_b / b2);
  out.d_ebb = -out.value / b2;
  out.d_eab = 2.0 * a1 / denom;
  return out;
}

void require_same(const auto& a, const auto& b, const char* what) {
  if (!a.same_shape(b)) throw DimensionMismatchError(what);
}

double depth_mean(const DepthMap& depth) {
  double sum = 0.0;
  for (const double d : depth.values()) sum += d;
  const double mean = sum / static_cast<double>(depth.size());
  if (!(mean > 0.0) || !std::isfinite(mean)) throw InvalidDepthError("mean depth must be positive");
  return mean;
}

// Accumulates scale * dL_s/dD into `grad`.
void smoothness_gradient(const DepthMap& depth, const Image& image, double scale, DepthMap& grad) {
  const int w = depth.width();
  const int h = depth.height();
  if (w < 2 || h < 2) return;
  const double mu = depth_mean(depth);
  const double n = static_cast<double>(w - 1) * static_cast<double>(h - 1);
  std::vector<double> g(depth.size(), 0.0);
  for (int v = 0; v + 1 < h; ++v) {
    for (int u = 0; u + 1 < w; ++u) {
      const std::size_t i = depth.index(u, v);
      const std::size_t ix = depth.index(u + 1, v);
      const std::size_t iy = depth.index(u, v + 1);
      const double ex = std::exp(-std::abs(image[ix] - image[i]));
      const double ey = std::exp(-std::abs(image[iy] - image[i]));
      const double sx = sgn(depth[ix] / mu - depth[i] / mu) * ex / n;
      const double sy = sgn(depth[iy] / mu - depth[i] / mu) * ey / n;
      g[ix] += sx;
      g[i] -= sx;
      g[iy] += sy;
      g[i] -= sy;
    }
  }
  double dot = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * depth[i];
  const double correction = dot / (mu * mu * static_cast<double>(depth.size()));
  for (std::size_t i = 0; i < g.size(); ++i) grad[i] += scale * (g[i] / mu - correction);
}

}  // namespace

SynthesizedView synthesize_view(const Image& image_prev, const DepthMap& depth_cur, const Pose& prev_from_cur,
                                const CameraIntrinsics& K) {
  require_same(image_prev, depth_cur, "image and depth differ in size");
  const auto warp = warp_all(&image_prev, nullptr, depth_cur, prev_from_cur, K);
  SynthesizedView view{Image(depth_cur.width(), depth_cur.height(), 0.0),
                       ValidityMap(depth_cur.width(), depth_cur.height(), 0)};
  for (std::size_t i = 0; i < warp.size(); ++i) {
    if (!warp[i].valid) continue;
    view.image[i] = warp[i].intensity.value;
    view.valid[i] = 1;
  }
  return view;
}

ScalarMap ssim(const Image& a, const Image& b) {
  require_same(a, b, "SSIM inputs differ in size");
  ScalarMap out(a.width(), a.height(), 0.0);
  for (int v = 0; v < a.height(); ++v)
    for (int u = 0; u < a.width(); ++u) out(u, v) = ssim_at(a, b, u, v).value;
  return out;
}

ScalarMap photometric_loss(const Image& target, const Image& synthesized, double alpha) {
  require_same(target, synthesized, "photometric inputs differ in size");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0, 1]");
  const ScalarMap s = ssim(target, synthesized);
  ScalarMap out(target.width(), target.height(), 0.0);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = 0.5 * alpha * (1.0 - s[i]) + (1.0 - alpha) * std::abs(target[i] - synthesized[i]);
  return out;
}

ScalarMap geometry_loss(const DepthMap& interpolated, const DepthMap& projected) {
  require_same(interpolated, projected, "depth maps differ in size");
  ScalarMap out(interpolated.width(), interpolated.height(), 0.0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double a = interpolated[i];
    const double b = projected[i];
    if (a > 0.0 && b > 0.0) out[i] = std::abs(a - b) / (a + b);
  }
  return out;
}

double smoothness_loss(const DepthMap& depth, const Image& image) {
  require_same(depth, image, "depth and image differ in size");
  const int w = depth.width();
  const int h = depth.height();
  if (w < 2 || h < 2) return 0.0;
  const double mu = depth_mean(depth);
  double sum = 0.0;
  for (int v = 0; v + 1 < h; ++v) {
    for (int u = 0; u + 1 < w; ++u) {
      const double d = depth(u, v) / mu;
      sum += std::abs(depth(u + 1, v) / mu - d) * std::exp(-std::abs(image(u + 1, v) - image(u, v)));
      sum += std::abs(depth(u, v + 1) / mu - d) * std::exp(-std::abs(image(u, v + 1) - image(u, v)));
    }
  }
  return sum / (static_cast<double>(w - 1) * static_cast<double>(h - 1));
}

ScalarMap depth_consistency_loss(const DepthMap& depth, const DepthMap& dense) {
  require_same(depth, dense, "depth maps differ in size");
  ScalarMap out(depth.width(), depth.height(), 0.0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (dense[i] > 0.0 && depth[i] > 0.0) out[i] = std::abs(1.0 / depth[i] - 1.0 / dense[i]);
  }
  return out;
}

LossBreakdown total_loss(const ScalarMap& l_p, const ValidityMap& valid_p, const ScalarMap& w_s, double l_s,
                         const ScalarMap& l_g, const ValidityMap& valid_g, const ScalarMap& l_d,
                         const ValidityMap& valid_d, const MaskMap& mask, const LossWeights& weights) {
  require_same(l_p, valid_p, "loss rasters differ in size");
  require_same(l_p, w_s, "loss rasters differ in size");
  require_same(l_p, l_g, "loss rasters differ in size");
  require_same(l_p, valid_g, "loss rasters differ in size");
  require_same(l_p, l_d, "loss rasters differ in size");
  require_same(l_p, valid_d, "loss rasters differ in size");
  require_same(l_p, mask, "loss rasters differ in size");
  LossBreakdown out;
  double sp = 0.0, sg = 0.0, sd = 0.0;
  for (std::size_t i = 0; i < l_p.size(); ++i) {
    if (valid_p[i] != 0) {
      sp += w_s[i] * l_p[i];
      ++out.n_p;
    }
    if (mask[i] > 0.0 && valid_g[i] != 0) {
      sg += mask[i] * l_g[i];
      ++out.n_g;
    }
    if (mask[i] > 0.0 && valid_d[i] != 0) {
      sd += mask[i] * l_d[i];
      ++out.n_d;
    }
  }
  out.l_p = out.n_p > 0 ? sp / static_cast<double>(out.n_p) : 0.0;
  out.l_g = out.n_g > 0 ? sg / static_cast<double>(out.n_g) : 0.0;
  out.l_d = out.n_d > 0 ? sd / static_cast<double>(out.n_d) : 0.0;
  out.l_s = l_s;
  out.l_total = out.l_p + weights.lambda_s * out.l_s + weights.lambda_g * out.l_g + weights.lambda_d * out.l_d;
  return out;
}

PairLoss pair_loss(const PairView& pair, const CameraIntrinsics& K, const LossWeights& weights, bool with_gradient) {
  const DepthMap& dcur = pair.depth_cur;
  require_same(dcur, pair.depth_prev, "depth maps differ in size");
  require_same(dcur, pair.image_prev, "image and depth differ in size");
  require_same(dcur, pair.image_cur, "image and depth differ in size");
  require_same(dcur, pair.dense, "dense depth differs in size");
  require_same(dcur, pair.mask, "mask differs in size");
  const int w = dcur.width();
  const int h = dcur.height();

  const auto warp = warp_all(&pair.image_prev, &pair.depth_prev, dcur, pair.prev_from_cur, K);

  PairLoss out{{},
               {Image(w, h, 0.0), ValidityMap(w, h, 0)},
               ValidityMap(w, h, 0),
               ScalarMap(w, h, 0.0),
               ScalarMap(w, h, 0.0),
               ScalarMap(w, h, 0.0),
               ScalarMap(w, h, 0.0),
               {},
               {}};
  for (std::size_t i = 0; i < warp.size(); ++i) {
    if (!warp[i].valid) continue;
    out.view.image[i] = warp[i].intensity.value;
    out.view.valid[i] = 1;
    const double a = warp[i].depth.value;
    const double b = warp[i].projected;
    out.l_g[i] = std::abs(a - b) / (a + b);
    out.w_s[i] = 1.0 - out.l_g[i];
  }
  if (pair.fixed_ws != nullptr) {
    require_same(dcur, *pair.fixed_ws, "fixed W_s differs in size");
    out.w_s = *pair.fixed_ws;
  }

  std::vector<SsimPartials> partials(dcur.size());
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      bool ok = true;
      for (int dv = -1; dv <= 1 && ok; ++dv)
        for (int du = -1; du <= 1 && ok; ++du) ok = out.view.valid(reflect(u + du, w), reflect(v + dv, h)) != 0;
      if (!ok) continue;
      const std::size_t i = dcur.index(u, v);
      out.valid_p[i] = 1;
      partials[i] = ssim_at(pair.image_cur, out.view.image, u, v);
      out.l_p[i] = 0.5 * weights.alpha * (1.0 - partials[i].value) +
                   (1.0 - weights.alpha) * std::abs(pair.image_cur[i] - out.view.image[i]);
    }
  }

  ValidityMap valid_d(w, h, 0);
  out.l_d = depth_consistency_loss(dcur, pair.dense);
  for (std::size_t i = 0; i < valid_d.size(); ++i) valid_d[i] = pair.dense[i] > 0.0 && dcur[i] > 0.0 ? 1 : 0;

  const double l_s = smoothness_loss(dcur, pair.image_cur);
  out.breakdown = total_loss(out.l_p, out.valid_p, out.w_s, l_s, out.l_g, out.view.valid, out.l_d, valid_d, pair.mask,
                             weights);
  if (!with_gradient) return out;

  out.grad_cur = DepthMap(w, h, 0.0);
  out.grad_prev = DepthMap(w, h, 0.0);
  std::vector<double> g_synth(dcur.size(), 0.0);
  std::vector<double> g_lg(dcur.size(), 0.0);

  if (out.breakdown.n_p > 0) {
    const double inv_np = 1.0 / static_cast<double>(out.breakdown.n_p);
    for (int v = 0; v < h; ++v) {
      for (int u = 0; u < w; ++u) {
        const std::size_t i = dcur.index(u, v);
        if (out.valid_p[i] == 0) continue;
        const double coef = out.w_s[i] * inv_np;
        const double d_ssim = -0.5 * weights.alpha * coef;
        const SsimPartials& s = partials[i];
        for (int dv = -1; dv <= 1; ++dv) {
          for (int du = -1; du <= 1; ++du) {
            const std::size_t j = dcur.index(reflect(u + du, w), reflect(v + dv, h));
            const double db = (s.d_mu_b + 2.0 * s.d_ebb * out.view.image[j] + s.d_eab * pair.image_cur[j]) / 9.0;
            g_synth[j] += d_ssim * db;
          }
        }
        g_synth[i] += -(1.0 - weights.alpha) * sgn(pair.image_cur[i] - out.view.image[i]) * coef;
        if (weights.attach_ws && pair.fixed_ws == nullptr) g_lg[i] -= out.l_p[i] * inv_np;
      }
    }
  }
  if (out.breakdown.n_g > 0) {
    const double scale = weights.lambda_g / static_cast<double>(out.breakdown.n_g);
    for (std::size_t i = 0; i < g_lg.size(); ++i)
      if (pair.mask[i] > 0.0 && out.view.valid[i] != 0) g_lg[i] += scale * pair.mask[i];
  }

  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const std::size_t i = dcur.index(u, v);
      const WarpSample& s = warp[i];
      if (!s.valid) continue;
      double gd = g_synth[i] * (s.intensity.d_du * s.dwu_dd + s.intensity.d_dv * s.dwv_dd);
      if (g_lg[i] != 0.0) {
        const double a = s.depth.value;
        const double b = s.projected;
        const double r = a - b;
        const double sum = a + b;
        const double dl_da = sgn(r) / sum - std::abs(r) / (sum * sum);
        const double dl_db = -sgn(r) / sum - std::abs(r) / (sum * sum);
        const double ga = g_lg[i] * dl_da;
        gd += ga * (s.depth.d_du * s.dwu_dd + s.depth.d_dv * s.dwv_dd) + g_lg[i] * dl_db * s.dz_dd;
        const BilinearStencil& st = s.stencil;
        const int u1 = st.u0 + 1 < w ? st.u0 + 1 : st.u0;
        const int v1 = st.v0 + 1 < h ? st.v0 + 1 : st.v0;
        out.grad_prev(st.u0, st.v0) += ga * st.w00();
        out.grad_prev(u1, st.v0) += ga * st.w10();
        out.grad_prev(st.u0, v1) += ga * st.w01();
        out.grad_prev(u1, v1) += ga * st.w11();
      }
      out.grad_cur[i] += gd;
    }
  }

  smoothness_gradient(dcur, pair.image_cur, weights.lambda_s, out.grad_cur);

  if (out.breakdown.n_d > 0) {
    const double scale = weights.lambda_d / static_cast<double>(out.breakdown.n_d);
    for (std::size_t i = 0; i < dcur.size(); ++i) {
      if (!(pair.mask[i] > 0.0) || valid_d[i] == 0) continue;
      const double inv = 1.0 / dcur[i];
      out.grad_cur[i] += scale * pair.mask[i] * sgn(inv - 1.0 / pair.dense[i]) * (-inv * inv);
    }
  }
  return out;
}

}  // namespace adaptvo
