#include "viopose/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace viopose {
namespace {

Vec3 vsub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
double vnorm(const Vec3& a) { return std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]); }

void check_same_shape(const PoseSequence& pred, const PoseSequence& gt, const char* op) {
  if (pred.frames != gt.frames || pred.joints != gt.joints) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch: (" +
                                std::to_string(pred.frames) + "x" + std::to_string(pred.joints) +
                                ") vs (" + std::to_string(gt.frames) + "x" +
                                std::to_string(gt.joints) + ")");
  }
}

// Jacobi eigen decomposition for small symmetric matrices.
template <int N>
void jacobi_eig(std::array<std::array<double, N>, N> a, std::array<double, N>& vals,
                std::array<std::array<double, N>, N>& vecs_cols) {
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) vecs_cols[i][j] = i == j ? 1.0 : 0.0;
  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0;
    for (int p = 0; p < N; ++p)
      for (int q = p + 1; q < N; ++q) off += a[p][q] * a[p][q];
    if (off < 1e-28) break;
    for (int p = 0; p < N; ++p) {
      for (int q = p + 1; q < N; ++q) {
        if (std::abs(a[p][q]) < 1e-300) continue;
        const double theta = (a[q][q] - a[p][p]) / (2 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1));
        const double c = 1.0 / std::sqrt(t * t + 1);
        const double s = t * c;
        for (int k = 0; k < N; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (int k = 0; k < N; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
        for (int k = 0; k < N; ++k) {
          const double vkp = vecs_cols[k][p], vkq = vecs_cols[k][q];
          vecs_cols[k][p] = c * vkp - s * vkq;
          vecs_cols[k][q] = s * vkp + c * vkq;
        }
      }
    }
  }
  for (int i = 0; i < N; ++i) vals[i] = a[i][i];
}

}  // namespace

void symmetric_eig3(const Mat3x3& m, std::array<double, 3>& eigvals, Mat3x3& eigvecs_rows) {
  std::array<std::array<double, 3>, 3> a = m;
  std::array<double, 3> vals;
  std::array<std::array<double, 3>, 3> vecs;
  jacobi_eig<3>(a, vals, vecs);
  std::array<int, 3> order = {0, 1, 2};
  std::sort(order.begin(), order.end(), [&](int x, int y) { return vals[x] < vals[y]; });
  for (int i = 0; i < 3; ++i) {
    eigvals[i] = vals[order[i]];
    for (int k = 0; k < 3; ++k) eigvecs_rows[i][k] = vecs[k][order[i]];
  }
}

double mpjpe(const PoseSequence& pred, const PoseSequence& gt) {
  check_same_shape(pred, gt, "mpjpe");
  double acc = 0;
  for (int f = 0; f < pred.frames; ++f) {
    for (int j = 0; j < pred.joints; ++j) {
      acc += vnorm(vsub(pred.joint(f, j), gt.joint(f, j)));
    }
  }
  return acc / (static_cast<double>(pred.frames) * pred.joints);
}

std::vector<double> per_joint_mpjpe(const PoseSequence& pred, const PoseSequence& gt) {
  check_same_shape(pred, gt, "per_joint_mpjpe");
  std::vector<double> out(pred.joints, 0.0);
  for (int f = 0; f < pred.frames; ++f) {
    for (int j = 0; j < pred.joints; ++j) {
      out[j] += vnorm(vsub(pred.joint(f, j), gt.joint(f, j)));
    }
  }
  for (double& v : out) v /= pred.frames;
  return out;
}

Vec3 SimilarityTransform::apply(const Vec3& p) const {
  Vec3 r;
  for (int i = 0; i < 3; ++i) {
    r[i] = scale * (rotation[i][0] * p[0] + rotation[i][1] * p[1] + rotation[i][2] * p[2]) +
           translation[i];
  }
  return r;
}

SimilarityTransform procrustes_align(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  if (a.size() != b.size() || a.size() < 3) {
    throw std::invalid_argument("procrustes: need matching point sets with >= 3 points");
  }
  const int n = static_cast<int>(a.size());
  Vec3 ca{0, 0, 0}, cb{0, 0, 0};
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < 3; ++k) {
      ca[k] += a[i][k] / n;
      cb[k] += b[i][k] / n;
    }
  }

  // Cross-covariance M = sum a_c b_c^T and the scatter of a.
  Mat3x3 M{};
  Mat3x3 cov_a{};
  double var_a = 0;
  for (int i = 0; i < n; ++i) {
    const Vec3 pa = vsub(a[i], ca), pb = vsub(b[i], cb);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) {
        M[r][c] += pa[r] * pb[c];
        cov_a[r][c] += pa[r] * pa[c];
      }
    }
    var_a += pa[0] * pa[0] + pa[1] * pa[1] + pa[2] * pa[2];
  }
  {
    std::array<double, 3> ev;
    Mat3x3 evec;
    symmetric_eig3(cov_a, ev, evec);
    if (ev[1] <= std::max(1e-12, 1e-12 * ev[2])) {
      throw std::invalid_argument("procrustes: degenerate point set (collinear or coincident)");
    }
  }

  // Horn's quaternion method: the best proper rotation maximizes trace(R M).
  const double sxx = M[0][0], sxy = M[0][1], sxz = M[0][2];
  const double syx = M[1][0], syy = M[1][1], syz = M[1][2];
  const double szx = M[2][0], szy = M[2][1], szz = M[2][2];
  std::array<std::array<double, 4>, 4> N = {{
      {sxx + syy + szz, syz - szy, szx - sxz, sxy - syx},
      {syz - szy, sxx - syy - szz, sxy + syx, szx + sxz},
      {szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy},
      {sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz},
  }};
  std::array<double, 4> vals;
  std::array<std::array<double, 4>, 4> vecs;
  jacobi_eig<4>(N, vals, vecs);
  int best = 0;
  for (int i = 1; i < 4; ++i) {
    if (vals[i] > vals[best]) best = i;
  }
  const double qw = vecs[0][best], qx = vecs[1][best], qy = vecs[2][best], qz = vecs[3][best];

  SimilarityTransform t;
  t.rotation = {{{1 - 2 * (qy * qy + qz * qz), 2 * (qx * qy - qz * qw), 2 * (qx * qz + qy * qw)},
                 {2 * (qx * qy + qz * qw), 1 - 2 * (qx * qx + qz * qz), 2 * (qy * qz - qx * qw)},
                 {2 * (qx * qz - qy * qw), 2 * (qy * qz + qx * qw), 1 - 2 * (qx * qx + qy * qy)}}};

  double trace_rm = 0;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) trace_rm += t.rotation[r][c] * M[c][r];
  }
  t.scale = var_a > 0 ? trace_rm / var_a : 1.0;
  for (int k = 0; k < 3; ++k) {
    t.translation[k] = cb[k] - t.scale * (t.rotation[k][0] * ca[0] + t.rotation[k][1] * ca[1] +
                                          t.rotation[k][2] * ca[2]);
  }
  return t;
}

double p_mpjpe(const PoseSequence& pred, const PoseSequence& gt, int* skipped) {
  check_same_shape(pred, gt, "p_mpjpe");
  double acc = 0;
  int used = 0, skip = 0;
  for (int f = 0; f < pred.frames; ++f) {
    std::vector<Vec3> a(pred.joints), b(pred.joints);
    for (int j = 0; j < pred.joints; ++j) {
      a[j] = pred.joint(f, j);
      b[j] = gt.joint(f, j);
    }
    try {
      const SimilarityTransform t = procrustes_align(a, b);
      double frame_acc = 0;
      for (int j = 0; j < pred.joints; ++j) frame_acc += vnorm(vsub(t.apply(a[j]), b[j]));
      acc += frame_acc / pred.joints;
      ++used;
    } catch (const std::invalid_argument&) {
      ++skip;
    }
  }
  if (skipped) *skipped = skip;
  if (used == 0) throw std::invalid_argument("p_mpjpe: every frame degenerate");
  return acc / used;
}

double derivative_error(const PoseSequence& pred, const PoseSequence& gt, int order) {
  check_same_shape(pred, gt, "derivative_error");
  if (order != 1 && order != 2) throw std::invalid_argument("derivative_error: order must be 1 or 2");
  PoseSequence dp = pose_derivative(pred);
  PoseSequence dg = pose_derivative(gt);
  if (order == 2) {
    dp = pose_derivative(dp);
    dg = pose_derivative(dg);
  }
  return mpjpe(dp, dg);
}

DtwResult dtw_pair(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("dtw: empty sequence");
  const int n = static_cast<int>(a.size()), m = static_cast<int>(b.size());
  std::vector<double> cost(static_cast<std::size_t>(n) * m);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) cost[static_cast<std::size_t>(i) * m + j] = vnorm(vsub(a[i], b[j]));
  }
  std::vector<double> D(static_cast<std::size_t>(n) * m);
  std::vector<std::int8_t> from(static_cast<std::size_t>(n) * m, 0);  // 0 diag, 1 left, 2 up
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      const std::size_t k = static_cast<std::size_t>(i) * m + j;
      double best = 0;
      std::int8_t dir = 0;
      if (i == 0 && j == 0) {
        best = 0;
      } else if (i == 0) {
        best = D[k - 1];
        dir = 1;
      } else if (j == 0) {
        best = D[k - m];
        dir = 2;
      } else {
        best = D[k - m - 1];
        dir = 0;
        if (D[k - 1] < best) { best = D[k - 1]; dir = 1; }
        if (D[k - m] < best) { best = D[k - m]; dir = 2; }
      }
      D[k] = cost[k] + best;
      from[k] = dir;
    }
  }
  DtwResult r;
  r.total = D[static_cast<std::size_t>(n) * m - 1];
  int i = n - 1, j = m - 1, len = 1;
  while (i != 0 || j != 0) {
    const std::int8_t dir = from[static_cast<std::size_t>(i) * m + j];
    if (dir == 0) { --i; --j; }
    else if (dir == 1) { --j; }
    else { --i; }
    ++len;
  }
  r.path_len = len;
  r.normalized = r.total / len;
  return r;
}

PoseSequence root_centered(const PoseSequence& pose) {
  PoseSequence out = pose;
  for (int f = 0; f < pose.frames; ++f) {
    Vec3 root{0, 0, 0};
    if (pose.joints == kJointCount) {
      for (int k = 0; k < 3; ++k) {
        root[k] = 0.5 * (pose.at(f, kLShoulder, k) + pose.at(f, kRShoulder, k));
      }
    } else {
      for (int j = 0; j < pose.joints; ++j) {
        for (int k = 0; k < 3; ++k) root[k] += pose.at(f, j, k) / pose.joints;
      }
    }
    for (int j = 0; j < pose.joints; ++j) {
      for (int k = 0; k < 3; ++k) out.at(f, j, k) -= root[k];
    }
  }
  return out;
}

double dtw(const PoseSequence& pred, const PoseSequence& gt) {
  if (pred.frames == 0 || gt.frames == 0) throw std::invalid_argument("dtw: empty sequence");
  if (pred.joints != gt.joints) throw std::invalid_argument("dtw: joint count mismatch");
  const PoseSequence a = root_centered(pred);
  const PoseSequence b = root_centered(gt);
  double acc = 0;
  for (int j = 0; j < a.joints; ++j) {
    acc += dtw_pair(a.trajectory(j), b.trajectory(j)).normalized;
  }
  return acc / a.joints;
}

MetricsReport compute_metrics(const PoseSequence& pred, const PoseSequence& gt,
                              const std::vector<std::string>& names) {
  MetricsReport rep;
  const PoseSequence pc = root_centered(pred);
  const PoseSequence gc = root_centered(gt);
  rep.mpjpe = mpjpe(pc, gc);
  rep.p_mpjpe = p_mpjpe(pred, gt, &rep.degenerate_frames_skipped);
  rep.mpjve = derivative_error(pc, gc, 1);
  rep.mpjae = derivative_error(pc, gc, 2);
  rep.dtw = dtw(pred, gt);
  rep.per_joint_mpjpe = per_joint_mpjpe(pc, gc);
  rep.joint_names = names.empty() && pred.joints == kJointCount ? joint_names() : names;
  return rep;
}

std::string MetricsReport::to_json() const {
  std::ostringstream os;
  os.precision(17);
  os << "{\"mpjpe_mm\":" << mpjpe << ",\"p_mpjpe_mm\":" << p_mpjpe << ",\"mpjve\":" << mpjve
     << ",\"mpjae\":" << mpjae << ",\"dtw\":" << dtw << ",\"degenerate_frames_skipped\":"
     << degenerate_frames_skipped << ",\"per_joint_mpjpe\":[";
  for (std::size_t i = 0; i < per_joint_mpjpe.size(); ++i) {
    if (i) os << ',';
    os << per_joint_mpjpe[i];
  }
  os << "]}";
  return os.str();
}

std::string MetricsReport::per_joint_csv() const {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < per_joint_mpjpe.size(); ++i) {
    if (i) os << ',';
    os << (i < joint_names.size() ? joint_names[i] : "j" + std::to_string(i));
  }
  os << '\n';
  for (std::size_t i = 0; i < per_joint_mpjpe.size(); ++i) {
    if (i) os << ',';
    os << per_joint_mpjpe[i];
  }
  os << '\n';
  return os.str();
}

}  // namespace viopose
