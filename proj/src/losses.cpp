#include "viopose/losses.hpp"

#include <cmath>
#include <iostream>
#include <map>
#include <stdexcept>

namespace viopose {

void LossConfig::validate() const {
  if (variant != "main" && variant != "appendix") {
    throw std::invalid_argument("loss config: unknown variant '" + variant + "'");
  }
  for (double w : {lambda_v, lambda_a, lambda_p1, lambda_p2, lambda_p3, lambda_A, lambda_C}) {
    if (w < 0) throw std::invalid_argument("loss config: weights must be non-negative");
  }
}

Tensor mpjpe_loss(const Tensor& pred, const Tensor& gt) {
  if (pred.shape() != gt.shape()) {
    throw std::invalid_argument("mpjpe_loss: shape mismatch: " + shape_str(pred.shape()) +
                                " vs " + shape_str(gt.shape()));
  }
  Tensor d = sub(pred, gt);
  return mean_all(sqrt_op(sum_last(mul(d, d))));
}

Tensor total_loss_main(const DynamicsTriple& triple, const Tensor& gt_pose, const Tensor& gt_vel,
                       const Tensor& gt_acc, const LossConfig& cfg, LossBreakdown* breakdown) {
  Tensor lp = mpjpe_loss(triple.pose, gt_pose);
  Tensor total = lp;
  double lv_val = 0, la_val = 0;
  if (cfg.lambda_v > 0) {
    Tensor lv = max_cosine_loss(triple.vel, gt_vel);
    lv_val = lv.item();
    total = add(total, scale(lv, cfg.lambda_v));
  }
  if (cfg.lambda_a > 0) {
    Tensor la = max_cosine_loss(triple.acc, gt_acc);
    la_val = la.item();
    total = add(total, scale(la, cfg.lambda_a));
  }
  if (breakdown) {
    breakdown->pose = lp.item();
    breakdown->vel = lv_val;
    breakdown->acc = la_val;
    breakdown->p2a = 0;
    breakdown->cycle = 0;
    breakdown->total = total.item();
  }
  return total;
}

Tensor total_loss_appendix(const DynamicsTriple& triple, const Tensor& gt_pose,
                           const Tensor& gt_vel, const Tensor& gt_acc,
                           const Tensor& audio_pose_pred, const Tensor& pose_tempo,
                           const Tensor& gt_tempo, const LossConfig& cfg,
                           LossBreakdown* breakdown) {
  Tensor lp = mpjpe_loss(triple.pose, gt_pose);
  Tensor lv = mpjpe_loss(triple.vel, gt_vel);
  Tensor la = mpjpe_loss(triple.acc, gt_acc);
  Tensor total = add(add(scale(lp, cfg.lambda_p1), scale(lv, cfg.lambda_p2)),
                     scale(la, cfg.lambda_p3));

  double p2a_val = 0;
  if (cfg.lambda_A > 0) {
    if (audio_pose_pred.defined()) {
      Tensor p2a = mpjpe_loss(audio_pose_pred, gt_pose);
      p2a_val = p2a.item();
      total = add(total, scale(p2a, cfg.lambda_A));
    } else {
      static bool warned = false;
      if (!warned) {
        std::cerr << "warning: P2A loss requested with audio disabled; term forced to 0\n";
        warned = true;
      }
    }
  }

  double cycle_val = 0;
  if (cfg.lambda_C > 0) {
    if (!pose_tempo.defined() || !gt_tempo.defined()) {
      throw std::invalid_argument("loss config: appendix variant with lambda_C > 0 requires both tempograms");
    }
    Tensor lc = tempogram_cycle_loss(pose_tempo, gt_tempo);
    cycle_val = lc.item();
    total = add(total, scale(lc, cfg.lambda_C));
  }

  if (breakdown) {
    breakdown->pose = lp.item();
    breakdown->vel = lv.item();
    breakdown->acc = la.item();
    breakdown->p2a = p2a_val;
    breakdown->cycle = cycle_val;
    breakdown->total = total.item();
  }
  return total;
}

Tensor pose_tempogram(const Tensor& pose, int right_wrist_joint, double fps, double window_s,
                      double hop_s, int n_bpm_bins) {
  if (pose.rank() != 4) {
    throw std::invalid_argument("pose_tempogram: expected (b,f,J,3), got " +
                                shape_str(pose.shape()));
  }
  const int b = pose.dim(0), f = pose.dim(1);
  if (right_wrist_joint < 0 || right_wrist_joint >= pose.dim(2)) {
    throw std::invalid_argument("pose_tempogram: right wrist joint index out of range");
  }
  const int cols = tempogram_columns(f / fps, window_s, hop_s);
  const int W = std::max(2, static_cast<int>(std::lround(window_s * fps)));
  if (W > f) throw std::invalid_argument("pose_tempogram: window longer than clip");

  // Right-wrist speed as the onset-envelope proxy (per-frame units).
  Tensor wrist = reshape(slice_axis(pose, 2, right_wrist_joint, 1), {b, f, 3});
  Tensor v = diff_time(wrist, 1, 1.0);
  Tensor speed = sqrt_op(add_scalar(sum_last(mul(v, v)), 1e-8));  // (b,f)

  const auto bpm = tempogram_bpm_axis(n_bpm_bins);
  std::vector<Tensor> col_rows;
  col_rows.reserve(cols);
  for (int j = 0; j < cols; ++j) {
    int start = static_cast<int>(std::lround(j * hop_s * fps));
    start = std::min(start, f - W);
    Tensor window = slice_axis(speed, 1, start, W);                    // (b,W)
    Tensor mu = reshape(scale(sum_last(window), 1.0 / W), {b, 1});     // (b,1)
    Tensor centered = sub(window, mu);                                 // (b,W)

    std::map<int, Tensor> lag_corr;
    auto corr_at = [&](int lag) -> Tensor {
      auto it = lag_corr.find(lag);
      if (it != lag_corr.end()) return it->second;
      Tensor head = slice_axis(centered, 1, 0, W - lag);
      Tensor tail = slice_axis(centered, 1, lag, W - lag);
      Tensor r = scale(sum_last(mul(head, tail)), 1.0 / W);            // (b)
      lag_corr.emplace(lag, r);
      return r;
    };

    std::vector<Tensor> cells;
    cells.reserve(n_bpm_bins);
    Tensor zero = Tensor::zeros({b, 1});
    for (int k = 0; k < n_bpm_bins; ++k) {
      const double lag = 60.0 * fps / bpm[k];
      const int lo = static_cast<int>(std::floor(lag));
      Tensor cell;
      if (lo >= 1 && lo + 1 < W) {
        const double w = lag - lo;
        cell = reshape(add(scale(corr_at(lo), 1.0 - w), scale(corr_at(lo + 1), w)), {b, 1});
      } else if (lo >= 1 && lo < W) {
        cell = reshape(corr_at(lo), {b, 1});
      } else {
        cell = zero;
      }
      cells.push_back(cell);
    }
    col_rows.push_back(reshape(concat(cells, 1), {b, 1, n_bpm_bins}));
  }
  return relu(concat(col_rows, 1));  // (b,cols,n_bpm)
}

Tensor tempograms_to_tensor(const std::vector<Tempogram>& tgs) {
  if (tgs.empty()) throw std::invalid_argument("tempograms_to_tensor: empty batch");
  const int cols = tgs[0].frames;
  const int bins = static_cast<int>(tgs[0].bpm_axis.size());
  std::vector<double> data;
  data.reserve(tgs.size() * cols * bins);
  for (const Tempogram& t : tgs) {
    if (t.frames != cols || static_cast<int>(t.bpm_axis.size()) != bins) {
      throw std::invalid_argument("tempograms_to_tensor: inconsistent tempogram shapes");
    }
    data.insert(data.end(), t.values.begin(), t.values.end());
  }
  return Tensor::from_data({static_cast<int>(tgs.size()), cols, bins}, std::move(data));
}

Tensor tempogram_cycle_loss(const Tensor& pose_tempo, const Tensor& gt_tempo) {
  if (pose_tempo.shape() != gt_tempo.shape()) {
    throw std::invalid_argument("cycle loss: tempogram shape mismatch: " +
                                shape_str(pose_tempo.shape()) + " vs " +
                                shape_str(gt_tempo.shape()));
  }
  const int b = pose_tempo.dim(0);
  const int cells = static_cast<int>(pose_tempo.numel() / b);
  auto normalize = [&](const Tensor& t) {
    Tensor flat = reshape(t, {b, cells});
    Tensor mean = reshape(scale(sum_last(flat), 1.0 / cells), {b, 1});
    return divide(flat, add_scalar(mean, 1e-8));
  };
  Tensor d = sub(normalize(pose_tempo), normalize(gt_tempo));
  return mean_all(mul(d, d));
}

}  // namespace viopose
