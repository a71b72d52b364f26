#include "viopose/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "viopose/metrics.hpp"

namespace viopose {
namespace {

constexpr double kPi = 3.14159265358979323846;

struct Biquad {
  double b0, b1, b2, a1, a2;
};

Biquad butter2_lowpass(double cutoff_hz, double fps) {
  const double k = std::tan(kPi * cutoff_hz / fps);
  const double k2 = k * k;
  const double a0 = 1 + std::sqrt(2.0) * k + k2;
  return {k2 / a0, 2 * k2 / a0, k2 / a0, 2 * (k2 - 1) / a0, (1 - std::sqrt(2.0) * k + k2) / a0};
}

Biquad butter2_highpass(double cutoff_hz, double fps) {
  const double k = std::tan(kPi * cutoff_hz / fps);
  const double k2 = k * k;
  const double a0 = 1 + std::sqrt(2.0) * k + k2;
  return {1 / a0, -2 / a0, 1 / a0, 2 * (k2 - 1) / a0, (1 - std::sqrt(2.0) * k + k2) / a0};
}

std::vector<double> filter_once(const std::vector<double>& x, const Biquad& f) {
  std::vector<double> y(x.size());
  double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
  if (!x.empty()) {
    // Steady-state start at the first value keeps DC exact.
    x1 = x2 = x[0];
    const double dc = (f.b0 + f.b1 + f.b2) / (1 + f.a1 + f.a2);
    y1 = y2 = x[0] * dc;
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double yo = f.b0 * x[i] + f.b1 * x1 + f.b2 * x2 - f.a1 * y1 - f.a2 * y2;
    x2 = x1;
    x1 = x[i];
    y2 = y1;
    y1 = yo;
    y[i] = yo;
  }
  return y;
}

std::vector<double> filtfilt(const std::vector<double>& x, const Biquad& f, double fps,
                             double cutoff_hz) {
  const int n = static_cast<int>(x.size());
  if (n < 4) return x;
  const int pad = std::min(n - 1, std::max(6, static_cast<int>(std::lround(2 * fps / cutoff_hz))));
  std::vector<double> ext;
  ext.reserve(x.size() + 2 * pad);
  for (int i = pad; i >= 1; --i) ext.push_back(2 * x[0] - x[i]);  // odd reflection
  ext.insert(ext.end(), x.begin(), x.end());
  for (int i = 1; i <= pad; ++i) ext.push_back(2 * x[n - 1] - x[n - 1 - i]);

  std::vector<double> y = filter_once(ext, f);
  std::reverse(y.begin(), y.end());
  y = filter_once(y, f);
  std::reverse(y.begin(), y.end());
  return std::vector<double>(y.begin() + pad, y.begin() + pad + n);
}

Traj filter_traj(const Traj& traj, const Biquad& f, double fps, double cutoff_hz) {
  Traj out(traj.size());
  for (int a = 0; a < 3; ++a) {
    std::vector<double> x(traj.size());
    for (std::size_t i = 0; i < traj.size(); ++i) x[i] = traj[i][a];
    const auto y = filtfilt(x, f, fps, cutoff_hz);
    for (std::size_t i = 0; i < traj.size(); ++i) out[i][a] = y[i];
  }
  return out;
}

Vec3 vsub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
double vdot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
double vnorm(const Vec3& a) { return std::sqrt(vdot(a, a)); }

// Principal axis of a trajectory (largest-eigenvalue direction of the
// position covariance); returns false when the motion is degenerate.
bool principal_axis(const Traj& traj, Vec3* axis, double* spread_mm) {
  const int n = static_cast<int>(traj.size());
  Vec3 mean{0, 0, 0};
  for (const Vec3& p : traj) {
    for (int k = 0; k < 3; ++k) mean[k] += p[k] / n;
  }
  Mat3x3 cov{};
  for (const Vec3& p : traj) {
    const Vec3 d = vsub(p, mean);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) cov[r][c] += d[r] * d[c] / n;
    }
  }
  std::array<double, 3> ev;
  Mat3x3 evec;
  symmetric_eig3(cov, ev, evec);
  if (spread_mm) *spread_mm = std::sqrt(std::max(0.0, ev[2]));
  if (ev[2] < 1e-12) return false;
  *axis = {evec[2][0], evec[2][1], evec[2][2]};
  return true;
}

// Zero crossings of v with hysteresis; times in frames (fractional).
std::vector<double> velocity_zero_crossings(const std::vector<double>& v, double abs_floor) {
  double vmax = 0;
  for (double x : v) vmax = std::max(vmax, std::abs(x));
  const double eps = std::max(abs_floor, 0.02 * vmax);
  std::vector<double> events;
  int last_sign = 0;
  int last_idx = -1;
  for (int t = 0; t < static_cast<int>(v.size()); ++t) {
    const int s = v[t] > eps ? 1 : v[t] < -eps ? -1 : 0;
    if (s == 0) continue;
    if (last_sign != 0 && s != last_sign) {
      double tc = 0.5 * (last_idx + t);
      for (int u = last_idx; u < t; ++u) {
        if ((v[u] >= 0 && v[u + 1] <= 0) || (v[u] <= 0 && v[u + 1] >= 0)) {
          const double dv = v[u] - v[u + 1];
          tc = std::abs(dv) > 1e-300 ? u + v[u] / dv : u + 0.5;
          break;
        }
      }
      events.push_back(tc);
    }
    last_sign = s;
    last_idx = t;
  }
  return events;
}

}  // namespace

Traj lowpass(const Traj& traj, double fps, double cutoff_hz) {
  if (cutoff_hz >= fps / 2) {
    throw std::invalid_argument("lowpass: cutoff " + std::to_string(cutoff_hz) +
                                " Hz at or above Nyquist for fps " + std::to_string(fps));
  }
  return filter_traj(traj, butter2_lowpass(cutoff_hz, fps), fps, cutoff_hz);
}

std::vector<double> lowpass_1d(const std::vector<double>& x, double fps, double cutoff_hz) {
  if (cutoff_hz >= fps / 2) throw std::invalid_argument("lowpass: cutoff at or above Nyquist");
  return filtfilt(x, butter2_lowpass(cutoff_hz, fps), fps, cutoff_hz);
}

Traj bandpass(const Traj& traj, double fps, double low_hz, double high_hz) {
  if (high_hz >= fps / 2 || low_hz <= 0 || low_hz >= high_hz) {
    throw std::invalid_argument("bandpass: invalid band");
  }
  Traj hp = filter_traj(traj, butter2_highpass(low_hz, fps), fps, low_hz);
  return filter_traj(hp, butter2_lowpass(high_hz, fps), fps, high_hz);
}

EventList segment_bow_changes(const Traj& right_wrist, double fps) {
  if (static_cast<double>(right_wrist.size()) < 3 * fps) {
    throw std::invalid_argument("segment_bow_changes: need at least 3 s of trajectory");
  }
  const Traj smooth = lowpass(right_wrist, fps, 5.0);
  Vec3 axis;
  EventList out;
  if (!principal_axis(smooth, &axis, nullptr)) return out;  // static trajectory

  const int n = static_cast<int>(smooth.size());
  std::vector<double> proj(n);
  for (int t = 0; t < n; ++t) proj[t] = vdot(smooth[t], axis);
  std::vector<double> vel(n, 0.0);
  for (int t = 1; t < n - 1; ++t) vel[t] = 0.5 * (proj[t + 1] - proj[t - 1]);
  vel[0] = vel[1];
  vel[n - 1] = vel[n - 2];

  for (double tf : velocity_zero_crossings(vel, 1.0)) out.times.push_back(tf / fps);
  return out;
}

double score_events(const EventList& pred, const EventList& gt, double window_s) {
  if (window_s <= 0) throw std::invalid_argument("score_events: window must be positive");
  if (pred.times.empty() && gt.times.empty()) return 100.0;
  if (pred.times.empty() || gt.times.empty()) return 0.0;
  std::vector<bool> used(gt.times.size(), false);
  int matched = 0;
  for (double tp : pred.times) {
    int best = -1;
    double best_d = window_s;
    for (std::size_t i = 0; i < gt.times.size(); ++i) {
      if (used[i]) continue;
      const double d = std::abs(gt.times[i] - tp);
      if (d <= best_d) {
        best_d = d;
        best = static_cast<int>(i);
      }
    }
    if (best >= 0) {
      used[best] = true;
      ++matched;
    }
  }
  const double precision = static_cast<double>(matched) / pred.times.size();
  const double recall = static_cast<double>(matched) / gt.times.size();
  if (precision + recall == 0) return 0.0;
  return 100.0 * 2 * precision * recall / (precision + recall);
}

EventList filter_events(const EventList& events, double duration_s, double guard_s) {
  EventList out;
  for (double t : events.times) {
    if (t >= guard_s && t <= duration_s - guard_s) out.times.push_back(t);
  }
  return out;
}

double max_line_deviation(const Traj& points, int begin, int end) {
  const int n = end - begin;
  Vec3 mean{0, 0, 0};
  for (int i = begin; i < end; ++i) {
    for (int k = 0; k < 3; ++k) mean[k] += points[i][k] / n;
  }
  Traj seg(points.begin() + begin, points.begin() + end);
  Vec3 axis;
  if (!principal_axis(seg, &axis, nullptr)) return 0.0;  // coincident points: a point is a line
  double worst = 0;
  for (int i = begin; i < end; ++i) {
    const Vec3 d = vsub(points[i], mean);
    const double along = vdot(d, axis);
    const Vec3 perp = {d[0] - along * axis[0], d[1] - along * axis[1], d[2] - along * axis[2]};
    worst = std::max(worst, vnorm(perp));
  }
  return worst;
}

double straight_bow_score(const Traj& pred_wrist, const Traj& gt_wrist, const EventList& events,
                          double fps, double threshold_mm, int min_stroke_frames) {
  if (pred_wrist.size() != gt_wrist.size()) {
    throw std::invalid_argument("straight_bow_score: trajectory length mismatch");
  }
  const int n = static_cast<int>(pred_wrist.size());
  std::vector<int> bounds = {0};
  for (double t : events.times) {
    const int f = static_cast<int>(std::lround(t * fps));
    if (f > bounds.back() && f < n) bounds.push_back(f);
  }
  bounds.push_back(n);

  int agree = 0, total = 0;
  for (std::size_t k = 0; k + 1 < bounds.size(); ++k) {
    const int b = bounds[k], e = bounds[k + 1];
    if (e - b < min_stroke_frames) continue;
    const bool pred_straight = max_line_deviation(pred_wrist, b, e) < threshold_mm;
    const bool gt_straight = max_line_deviation(gt_wrist, b, e) < threshold_mm;
    agree += pred_straight == gt_straight ? 1 : 0;
    ++total;
  }
  if (total == 0) throw std::invalid_argument("straight_bow_score: no usable strokes");
  return 100.0 * agree / total;
}

std::vector<double> flexion_angle_series(const Traj& elbow, const Traj& wrist, const Traj& hand) {
  if (elbow.size() != wrist.size() || wrist.size() != hand.size()) {
    throw std::invalid_argument("flexion: trajectory length mismatch");
  }
  std::vector<double> angles(wrist.size());
  for (std::size_t i = 0; i < wrist.size(); ++i) {
    const Vec3 u = vsub(elbow[i], wrist[i]);
    const Vec3 w = vsub(hand[i], wrist[i]);
    const double nu = vnorm(u), nw = vnorm(w);
    if (nu < 1e-9 || nw < 1e-9) {
      angles[i] = std::nan("");
      continue;
    }
    const double c = std::clamp(vdot(u, w) / (nu * nw), -1.0, 1.0);
    angles[i] = std::acos(c) * 180.0 / kPi;
  }
  return angles;
}

HoldResult violin_hold_flexion(const Traj& pred_elbow, const Traj& pred_wrist,
                               const Traj& pred_hand, const Traj& gt_elbow, const Traj& gt_wrist,
                               const Traj& gt_hand, double tolerance_deg) {
  HoldResult res;
  res.angles_deg = flexion_angle_series(pred_elbow, pred_wrist, pred_hand);
  const auto gt = flexion_angle_series(gt_elbow, gt_wrist, gt_hand);
  double acc = 0;
  int used = 0, within = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (std::isnan(res.angles_deg[i]) || std::isnan(gt[i])) continue;
    const double err = std::abs(res.angles_deg[i] - gt[i]);
    acc += err;
    within += err <= tolerance_deg ? 1 : 0;
    ++used;
  }
  res.mean_l1_deg = used ? acc / used : 0;
  res.within_pct = used ? 100.0 * within / used : 0;
  return res;
}

EventList detect_vibrato(const Traj& left_wrist, const Traj& left_hand, double fps) {
  if (fps < 2 * 9.0) {
    throw std::invalid_argument("detect_vibrato: vibrato unobservable at this frame rate (" +
                                std::to_string(fps) + " fps)");
  }
  if (left_wrist.size() != left_hand.size()) {
    throw std::invalid_argument("detect_vibrato: trajectory length mismatch");
  }
  Traj mid(left_wrist.size());
  for (std::size_t i = 0; i < mid.size(); ++i) {
    for (int k = 0; k < 3; ++k) mid[i][k] = 0.5 * (left_wrist[i][k] + left_hand[i][k]);
  }
  const Traj band = bandpass(mid, fps, 4.0, 9.0);
  Vec3 axis;
  EventList out;
  if (!principal_axis(band, &axis, nullptr)) return out;

  const int n = static_cast<int>(band.size());
  std::vector<double> proj(n);
  for (int t = 0; t < n; ++t) proj[t] = vdot(band[t], axis);
  std::vector<double> vel(n, 0.0);
  for (int t = 1; t < n - 1; ++t) vel[t] = 0.5 * (proj[t + 1] - proj[t - 1]);
  vel[0] = vel[1];
  vel[n - 1] = vel[n - 2];

  for (double tf : velocity_zero_crossings(vel, 0.3)) out.times.push_back(tf / fps);
  return out;
}

std::string TaskScores::to_json() const {
  std::ostringstream os;
  os.precision(17);
  os << "{\"bow_dir_pct\":" << bow_dir_pct << ",\"straight_bow_pct\":" << straight_bow_pct
     << ",\"violin_hold_pct\":" << violin_hold_pct << ",\"vibrato_pct\":" << vibrato_pct
     << ",\"hold_mean_l1_deg\":" << hold_mean_l1_deg << "}";
  return os.str();
}

std::string TaskScores::to_table() const {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << "Bow Dir (%) | Straight Bow (%) | Violin Hold (%) | Vibrato (%)\n";
  os << bow_dir_pct << " | " << straight_bow_pct << " | " << violin_hold_pct << " | "
     << vibrato_pct << "\n";
  return os.str();
}

}  // namespace viopose
