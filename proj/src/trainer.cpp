#include "viopose/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "json.hpp"
#include "viopose/svg.hpp"

namespace viopose {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int joint_index(const std::vector<std::string>& names, const std::string& name) {
  auto it = std::find(names.begin(), names.end(), name);
  return it == names.end() ? -1 : static_cast<int>(it - names.begin());
}

Tensor loss_for_batch(const VioPoseModel& model, const Batch& batch, const RunConfig& cfg,
                      BatchNormMode mode, LossBreakdown* breakdown) {
  Tensor e_audio_final;
  DynamicsTriple triple = model.forward(batch.kp2d, batch.features, mode, &e_audio_final);
  if (cfg.loss.variant == "main") {
    return total_loss_main(triple, batch.gt_pose, batch.gt_vel, batch.gt_acc, cfg.loss, breakdown);
  }
  Tensor p2a;
  if (cfg.model.use_audio && cfg.loss.lambda_A > 0) {
    p2a = model.audio_pose_forward(e_audio_final);
  }
  Tensor pose_tempo;
  if (cfg.loss.lambda_C > 0) {
    const int wrist = joint_index(cfg.joint_subset.empty() ? joint_names() : cfg.joint_subset,
                                  "r_wrist");
    if (wrist < 0) throw std::invalid_argument("loss: appendix cycle loss needs the r_wrist joint");
    pose_tempo = pose_tempogram(triple.pose, wrist, cfg.model.fps, cfg.loss.tempo_window_s,
                                cfg.loss.tempo_hop_s, cfg.loss.tempo_bpm_bins);
  }
  return total_loss_appendix(triple, batch.gt_pose, batch.gt_vel, batch.gt_acc, p2a, pose_tempo,
                             batch.gt_tempo, cfg.loss, breakdown);
}

json breakdown_to_json(const LossBreakdown& b, const LossConfig& loss) {
  json j;
  j["total"] = b.total;
  if (loss.variant == "main") {
    j["mpjpe"] = b.pose;
    j["vel_cosine"] = b.vel;
    j["acc_cosine"] = b.acc;
    j["lambda_v"] = loss.lambda_v;
    j["lambda_a"] = loss.lambda_a;
  } else {
    j["mpjpe"] = b.pose;
    j["mpjve"] = b.vel;
    j["mpjae"] = b.acc;
    j["p2a"] = b.p2a;
    j["cycle"] = b.cycle;
    j["lambda_p1"] = loss.lambda_p1;
    j["lambda_p2"] = loss.lambda_p2;
    j["lambda_p3"] = loss.lambda_p3;
    j["lambda_A"] = loss.lambda_A;
    j["lambda_C"] = loss.lambda_C;
  }
  return j;
}

MetricsReport aggregate_reports(const std::vector<MetricsReport>& reports) {
  MetricsReport agg;
  if (reports.empty()) return agg;
  agg.joint_names = reports[0].joint_names;
  agg.per_joint_mpjpe.assign(reports[0].per_joint_mpjpe.size(), 0.0);
  for (const auto& r : reports) {
    agg.mpjpe += r.mpjpe;
    agg.p_mpjpe += r.p_mpjpe;
    agg.mpjve += r.mpjve;
    agg.mpjae += r.mpjae;
    agg.dtw += r.dtw;
    agg.degenerate_frames_skipped += r.degenerate_frames_skipped;
    for (std::size_t j = 0; j < agg.per_joint_mpjpe.size(); ++j) {
      agg.per_joint_mpjpe[j] += r.per_joint_mpjpe[j];
    }
  }
  const double n = static_cast<double>(reports.size());
  agg.mpjpe /= n;
  agg.p_mpjpe /= n;
  agg.mpjve /= n;
  agg.mpjae /= n;
  agg.dtw /= n;
  for (double& v : agg.per_joint_mpjpe) v /= n;
  return agg;
}

}  // namespace

PoseSequence tensor_to_pose(const Tensor& t, int batch_index, double fps) {
  if (t.rank() != 4 || t.dim(3) != 3) {
    throw std::invalid_argument("tensor_to_pose: expected (b,f,J,3), got " + shape_str(t.shape()));
  }
  PoseSequence seq;
  seq.frames = t.dim(1);
  seq.joints = t.dim(2);
  seq.fps = fps;
  const std::size_t stride = static_cast<std::size_t>(seq.frames) * seq.joints * 3;
  const auto d = t.data();
  seq.positions.assign(d.begin() + batch_index * stride, d.begin() + (batch_index + 1) * stride);
  return seq;
}

PredictedSample predict_sample(const VioPoseModel& model, const PreparedSample& sample,
                               const RunConfig& cfg, bool use_kalman) {
  NoGradGuard no_grad;
  Batch batch = make_batch({&sample}, cfg);
  DynamicsTriple triple = model.forward(batch.kp2d, batch.features, BatchNormMode::Eval);

  PredictedSample out;
  out.pose = tensor_to_pose(triple.pose, 0, cfg.model.fps);
  out.vel = tensor_to_pose(triple.vel, 0, cfg.model.fps);
  out.acc = tensor_to_pose(triple.acc, 0, cfg.model.fps);
  out.pose_fused = use_kalman ? kalman_fuse(out.pose, out.vel, out.acc, cfg.kalman_params)
                              : out.pose;
  return out;
}

EvalResult evaluate_split(const VioPoseModel& model, const RunConfig& cfg,
                          const std::vector<std::string>& sample_dirs, bool use_kalman) {
  EvalResult result;
  for (const std::string& dir : sample_dirs) {
    PreparedSample ps = load_prepared(dir, cfg, false);
    PredictedSample pred = predict_sample(model, ps, cfg, use_kalman);
    result.per_sample.push_back(
        compute_metrics(pred.pose_fused, ps.gt_centered, ps.raw.meta.joint_names));
  }
  result.samples = static_cast<int>(result.per_sample.size());
  result.aggregate = aggregate_reports(result.per_sample);
  return result;
}

double untrained_baseline_mpjpe(const VioPoseModel& model, const RunConfig& cfg,
                                const std::vector<std::string>& sample_dirs) {
  NoGradGuard no_grad;
  double acc = 0;
  int n = 0;
  for (const std::string& dir : sample_dirs) {
    PreparedSample ps = load_prepared(dir, cfg, false);
    Batch batch = make_batch({&ps}, cfg);
    DynamicsTriple triple = model.forward(batch.kp2d, batch.features, BatchNormMode::Frozen);
    acc += mpjpe(root_centered(tensor_to_pose(triple.pose, 0, cfg.model.fps)), ps.gt_centered);
    ++n;
  }
  return n ? acc / n : 0;
}

TrainResult train_model(const RunConfig& cfg, const std::string& dataset_dir,
                        const std::string& out_dir, const std::string& resume_checkpoint) {
  cfg.validate();
  fs::create_directories(out_dir);
  const DatasetIndex index = load_dataset_index(dataset_dir);
  if (index.train_dirs.empty()) throw std::runtime_error("train: dataset has no training samples");

  const bool need_tempo = cfg.loss.variant == "appendix" && cfg.loss.lambda_C > 0;
  std::vector<PreparedSample> train_samples, val_samples;
  train_samples.reserve(index.train_dirs.size());
  for (const auto& d : index.train_dirs) train_samples.push_back(load_prepared(d, cfg, need_tempo));
  for (const auto& d : index.val_dirs) val_samples.push_back(load_prepared(d, cfg, need_tempo));

  std::unique_ptr<VioPoseModel> model;
  AdamState adam;
  int start_epoch = 0;
  if (!resume_checkpoint.empty()) {
    Checkpoint ckpt = load_checkpoint(resume_checkpoint);
    if (ckpt.config.model.dim != cfg.model.dim || ckpt.config.model.joints != cfg.model.joints ||
        ckpt.config.model.frames != cfg.model.frames) {
      throw std::runtime_error("train: resume checkpoint config does not match");
    }
    model = std::move(ckpt.model);
    if (ckpt.has_adam) adam = std::move(ckpt.adam);
    start_epoch = ckpt.epoch;
  } else {
    model = std::make_unique<VioPoseModel>(cfg.model, cfg.seed);
  }

  const std::string log_path = out_dir + "/train.log.jsonl";
  std::ofstream log(log_path, start_epoch > 0 ? std::ios::app : std::ios::trunc);
  if (!log) throw std::runtime_error("train: cannot open " + log_path);

  const std::string last_dir = out_dir + "/last";
  const std::string best_dir = out_dir + "/best";
  save_checkpoint(last_dir, cfg, model->params(), &adam, start_epoch, 0);

  TrainResult result;
  result.log_path = log_path;
  double best_val = std::numeric_limits<double>::infinity();

  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    adam.lr = lr_at_epoch(cfg, epoch);

    std::vector<int> order(train_samples.size());
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(Rng::derive(cfg.seed, 0xE70C + static_cast<std::uint64_t>(epoch)));
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
      const int j = static_cast<int>(shuffle_rng.next_u64() % (i + 1));
      std::swap(order[i], order[j]);
    }

    double epoch_loss = 0;
    std::int64_t seen = 0;
    LossBreakdown last_breakdown;
    for (std::size_t pos = 0; pos < order.size(); pos += cfg.batch) {
      std::vector<const PreparedSample*> chunk;
      for (std::size_t k = pos; k < std::min(order.size(), pos + cfg.batch); ++k) {
        chunk.push_back(&train_samples[order[k]]);
      }
      Batch batch = make_batch(chunk, cfg);
      LossBreakdown breakdown;
      Tensor loss = loss_for_batch(*model, batch, cfg, BatchNormMode::Train, &breakdown);
      if (!std::isfinite(loss.item())) {
        throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) +
                                 "; last-good checkpoint preserved at " + last_dir);
      }
      model->params().zero_grads();
      loss.backward();
      try {
        adam_step(model->params(), adam);
      } catch (const std::exception& e) {
        throw std::runtime_error("train: " + std::string(e.what()) +
                                 "; last-good checkpoint preserved at " + last_dir);
      }
      epoch_loss += breakdown.total * static_cast<double>(chunk.size());
      seen += static_cast<std::int64_t>(chunk.size());
      last_breakdown = breakdown;
    }
    epoch_loss /= std::max<std::int64_t>(1, seen);
    if (epoch == start_epoch) result.first_train_loss = epoch_loss;
    result.last_train_loss = epoch_loss;

    // Validation loss + metrics with running statistics.
    double val_loss = 0;
    MetricsReport val_metrics;
    if (!val_samples.empty()) {
      NoGradGuard no_grad;
      std::vector<MetricsReport> reports;
      for (const auto& vs : val_samples) {
        Batch batch = make_batch({&vs}, cfg);
        LossBreakdown vb;
        Tensor loss = loss_for_batch(*model, batch, cfg, BatchNormMode::Eval, &vb);
        val_loss += loss.item();
        PoseSequence pred =
            tensor_to_pose(model->forward(batch.kp2d, batch.features, BatchNormMode::Eval).pose, 0,
                           cfg.model.fps);
        reports.push_back(compute_metrics(pred, vs.gt_centered, vs.raw.meta.joint_names));
      }
      val_loss /= static_cast<double>(val_samples.size());
      val_metrics = aggregate_reports(reports);
    }

    json line;
    line["epoch"] = epoch;
    line["lr"] = adam.lr;
    line["train"] = breakdown_to_json(last_breakdown, cfg.loss);
    line["train_loss"] = epoch_loss;
    line["val_loss"] = val_loss;
    line["val_metrics"] = json::parse(val_metrics.to_json());
    log << line.dump() << "\n";
    log.flush();

    save_checkpoint(last_dir, cfg, model->params(), &adam, epoch + 1, best_val);
    const double val_score = val_samples.empty() ? epoch_loss : val_metrics.mpjpe;
    if (val_score < best_val) {
      best_val = val_score;
      result.best_epoch = epoch;
      result.best_val_mpjpe = val_samples.empty() ? 0 : val_metrics.mpjpe;
      save_checkpoint(best_dir, cfg, model->params(), &adam, epoch + 1, best_val);
    }
    result.epochs_run = epoch - start_epoch + 1;
  }
  result.best_checkpoint_dir = fs::exists(best_dir) ? best_dir : last_dir;
  return result;
}

AnalyzeResult analyze_split(const VioPoseModel* model, const RunConfig& cfg,
                            const std::vector<std::string>& sample_dirs,
                            const AnalyzeOptions& opts) {
  if (!opts.oracle && !model) throw std::invalid_argument("analyze: model required unless oracle mode");
  if (!opts.plot_dir.empty()) fs::create_directories(opts.plot_dir);

  AnalyzeResult result;
  double bow = 0, straight = 0, hold = 0, vib = 0, hold_l1 = 0;
  int sample_no = 0;
  for (const std::string& dir : sample_dirs) {
    PreparedSample ps = load_prepared(dir, cfg, false);
    const auto& names = ps.raw.meta.joint_names;
    const double fps = cfg.model.fps;
    const double duration = ps.raw.pose.frames / fps;

    PoseSequence pred_pose;
    if (opts.oracle) {
      pred_pose = ps.raw.pose;
    } else {
      pred_pose = predict_sample(*model, ps, cfg, opts.use_kalman).pose_fused;
    }
    const PoseSequence& gt_pose = ps.raw.pose;

    const int rw = joint_index(names, "r_wrist");
    const int lw = joint_index(names, "l_wrist");
    const int lh = joint_index(names, "l_hand");
    const int le = joint_index(names, "l_elbow");

    // Bow direction changes.
    if (rw >= 0 && ps.raw.pose.frames >= 3 * fps) {
      EventList gt_events{ps.raw.meta.bow_change_times};
      gt_events = filter_events(gt_events, duration, opts.edge_guard_s);
      if (!gt_events.times.empty()) {
        EventList pred_events = segment_bow_changes(pred_pose.trajectory(rw), fps);
        pred_events = filter_events(pred_events, duration, opts.edge_guard_s);
        bow += score_events(pred_events, gt_events, opts.bow_window_s);
        ++result.bow_samples;
      }
      // Straight-bow classification over ground-truth stroke boundaries.
      try {
        straight += straight_bow_score(pred_pose.trajectory(rw), gt_pose.trajectory(rw),
                                       EventList{ps.raw.meta.bow_change_times}, fps);
        ++result.straight_samples;
      } catch (const std::invalid_argument&) {
        // no usable strokes in this window
      }
    }

    if (le >= 0 && lw >= 0 && lh >= 0) {
      HoldResult hr = violin_hold_flexion(pred_pose.trajectory(le), pred_pose.trajectory(lw),
                                          pred_pose.trajectory(lh), gt_pose.trajectory(le),
                                          gt_pose.trajectory(lw), gt_pose.trajectory(lh));
      hold += hr.within_pct;
      hold_l1 += hr.mean_l1_deg;
      ++result.hold_samples;
    }

    if (lw >= 0 && lh >= 0) {
      EventList gt_events{ps.raw.meta.vibrato_event_times};
      gt_events = filter_events(gt_events, duration, opts.edge_guard_s);
      if (gt_events.times.size() >= 2) {
        EventList pred_events = detect_vibrato(pred_pose.trajectory(lw), pred_pose.trajectory(lh), fps);
        pred_events = filter_events(pred_events, duration, opts.edge_guard_s);
        vib += score_events(pred_events, gt_events, opts.vibrato_window_frames / fps);
        ++result.vibrato_samples;
      }
    }

    if (!opts.plot_dir.empty() && rw >= 0) {
      char tag[32];
      std::snprintf(tag, sizeof(tag), "sample_%05d", sample_no);
      write_trajectory_svg(opts.plot_dir + "/" + tag + "_wrist.svg", pred_pose.trajectory(rw),
                           gt_pose.trajectory(rw), fps, "right wrist");
      if (cfg.loss.tempo_window_s <= duration) {
        std::vector<double> env(ps.features.frames);
        const bool have_features = ps.features.frames > 0;
        Tempogram gt_tempo;
        if (have_features) {
          for (int t = 0; t < ps.features.frames; ++t) {
            env[t] = ps.features.at(t, FeatureMatrix::kEnvelope);
          }
          gt_tempo = tempogram(env, cfg.model.feature_rate, cfg.loss.tempo_window_s,
                               cfg.loss.tempo_hop_s, cfg.loss.tempo_bpm_bins);
        }
        NoGradGuard no_grad;
        std::vector<double> pose_data(pred_pose.positions);
        Tensor pose_t = Tensor::from_data({1, pred_pose.frames, pred_pose.joints, 3},
                                          std::move(pose_data));
        Tensor pt = pose_tempogram(pose_t, rw, fps, cfg.loss.tempo_window_s, cfg.loss.tempo_hop_s,
                                   cfg.loss.tempo_bpm_bins);
        Tempogram pred_tempo;
        pred_tempo.frames = pt.dim(1);
        pred_tempo.bpm_axis = tempogram_bpm_axis(cfg.loss.tempo_bpm_bins);
        pred_tempo.window_s = cfg.loss.tempo_window_s;
        pred_tempo.values.assign(pt.data().begin(), pt.data().end());
        if (have_features) {
          write_tempogram_svg(opts.plot_dir + "/" + tag + "_tempo.svg", gt_tempo, pred_tempo,
                              "tempogram");
        }
      }
    }
    ++sample_no;
  }
  result.samples = sample_no;
  result.scores.bow_dir_pct = result.bow_samples ? bow / result.bow_samples : 0;
  result.scores.straight_bow_pct = result.straight_samples ? straight / result.straight_samples : 0;
  result.scores.violin_hold_pct = result.hold_samples ? hold / result.hold_samples : 0;
  result.scores.hold_mean_l1_deg = result.hold_samples ? hold_l1 / result.hold_samples : 0;
  result.scores.vibrato_pct = result.vibrato_samples ? vib / result.vibrato_samples : 0;
  return result;
}

}  // namespace viopose
