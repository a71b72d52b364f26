#include "viopose/kalman.hpp"

#include <cmath>
#include <stdexcept>

namespace viopose {
namespace {

using Mat3 = std::array<std::array<double, 3>, 3>;

Mat3 mat_mul(const Mat3& a, const Mat3& b) {
  Mat3 c{};
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k)
      for (int j = 0; j < 3; ++j) c[i][j] += a[i][k] * b[k][j];
  return c;
}

Mat3 mat_add(const Mat3& a, const Mat3& b) {
  Mat3 c;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) c[i][j] = a[i][j] + b[i][j];
  return c;
}

Mat3 transpose3(const Mat3& a) {
  Mat3 c;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) c[i][j] = a[j][i];
  return c;
}

Mat3 invert3(const Mat3& m) {
  const double a = m[0][0], b = m[0][1], c = m[0][2];
  const double d = m[1][0], e = m[1][1], f = m[1][2];
  const double g = m[2][0], h = m[2][1], i = m[2][2];
  const double A = e * i - f * h, B = -(d * i - f * g), C = d * h - e * g;
  const double det = a * A + b * B + c * C;
  if (std::abs(det) < 1e-300) throw std::runtime_error("kalman: singular innovation covariance");
  const double inv = 1.0 / det;
  Mat3 r;
  r[0][0] = A * inv;
  r[0][1] = -(b * i - c * h) * inv;
  r[0][2] = (b * f - c * e) * inv;
  r[1][0] = B * inv;
  r[1][1] = (a * i - c * g) * inv;
  r[1][2] = -(a * f - c * d) * inv;
  r[2][0] = C * inv;
  r[2][1] = -(a * h - b * g) * inv;
  r[2][2] = (a * e - b * d) * inv;
  return r;
}

}  // namespace

PoseSequence kalman_fuse(const PoseSequence& pos, const PoseSequence& vel,
                         const PoseSequence& acc, const KalmanParams& params) {
  if (pos.frames != vel.frames || pos.frames != acc.frames || pos.joints != vel.joints ||
      pos.joints != acc.joints) {
    throw std::invalid_argument("kalman_fuse: dynamics triple shapes disagree");
  }
  for (double v : pos.positions) {
    if (!std::isfinite(v)) throw std::invalid_argument("kalman_fuse: non-finite position input");
  }
  for (double v : vel.positions) {
    if (!std::isfinite(v)) throw std::invalid_argument("kalman_fuse: non-finite velocity input");
  }
  for (double v : acc.positions) {
    if (!std::isfinite(v)) throw std::invalid_argument("kalman_fuse: non-finite acceleration input");
  }

  const double dt = 1.0;
  const Mat3 F = {{{1, dt, 0.5 * dt * dt}, {0, 1, dt}, {0, 0, 1}}};
  const double g0 = 0.5 * dt * dt, g1 = dt, g2 = 1.0;
  const double q = params.sigma_q * params.sigma_q;
  const Mat3 Q = {{{q * g0 * g0, q * g0 * g1, q * g0 * g2},
                   {q * g1 * g0, q * g1 * g1, q * g1 * g2},
                   {q * g2 * g0, q * g2 * g1, q * g2 * g2}}};
  const Mat3 R = {{{params.r_pos, 0, 0}, {0, params.r_vel, 0}, {0, 0, params.r_acc}}};

  PoseSequence out = pos;
  for (int j = 0; j < pos.joints; ++j) {
    for (int a = 0; a < 3; ++a) {
      std::array<double, 3> x = {pos.at(0, j, a), vel.at(0, j, a), acc.at(0, j, a)};
      Mat3 P = R;
      out.at(0, j, a) = x[0];
      for (int f = 1; f < pos.frames; ++f) {
        // Predict.
        std::array<double, 3> xp = {x[0] + dt * x[1] + 0.5 * dt * dt * x[2], x[1] + dt * x[2],
                                    x[2]};
        Mat3 Pp = mat_add(mat_mul(mat_mul(F, P), transpose3(F)), Q);
        // Update with z = [p, v, a] (H = I).
        const std::array<double, 3> z = {pos.at(f, j, a), vel.at(f, j, a), acc.at(f, j, a)};
        const Mat3 S = mat_add(Pp, R);
        const Mat3 K = mat_mul(Pp, invert3(S));
        std::array<double, 3> innov = {z[0] - xp[0], z[1] - xp[1], z[2] - xp[2]};
        for (int i = 0; i < 3; ++i) {
          x[i] = xp[i] + K[i][0] * innov[0] + K[i][1] * innov[1] + K[i][2] * innov[2];
        }
        Mat3 IK{};
        for (int i = 0; i < 3; ++i)
          for (int k = 0; k < 3; ++k) IK[i][k] = (i == k ? 1.0 : 0.0) - K[i][k];
        P = mat_mul(IK, Pp);
        out.at(f, j, a) = x[0];
      }
    }
  }
  return out;
}

}  // namespace viopose
