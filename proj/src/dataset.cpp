#include "viopose/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "viopose/metrics.hpp"

namespace viopose {

namespace fs = std::filesystem;

int window_count(double clip_s, double window_s, double hop_s) {
  if (clip_s + 1e-9 < window_s) return 0;
  return static_cast<int>(std::floor((clip_s - window_s) / hop_s + 1e-9)) + 1;
}

std::vector<Sample> window_sample(const Sample& clip, double window_s, double hop_s) {
  const double fps = clip.meta.fps;
  const int wf = static_cast<int>(std::lround(window_s * fps));
  const int hf = static_cast<int>(std::lround(hop_s * fps));
  const int sr = clip.meta.audio_sample_rate;
  const int ws = static_cast<int>(std::lround(window_s * sr));

  std::vector<Sample> out;
  const int n = window_count(clip.meta.frames / fps, window_s, hop_s);
  for (int w = 0; w < n; ++w) {
    const int f0 = w * hf;
    const double t0 = f0 / fps;
    Sample s;
    s.meta = clip.meta;
    s.meta.frames = wf;
    s.meta.bow_change_times.clear();
    s.meta.vibrato_event_times.clear();
    s.meta.vibrato_segments.clear();
    s.meta.strokes.clear();
    for (double t : clip.meta.bow_change_times) {
      if (t >= t0 && t < t0 + window_s) s.meta.bow_change_times.push_back(t - t0);
    }
    for (double t : clip.meta.vibrato_event_times) {
      if (t >= t0 && t < t0 + window_s) s.meta.vibrato_event_times.push_back(t - t0);
    }
    for (const auto& seg : clip.meta.vibrato_segments) {
      if (seg.end_s <= t0 || seg.start_s >= t0 + window_s) continue;
      VibratoSegment c = seg;
      c.start_s = std::max(0.0, seg.start_s - t0);
      c.end_s = std::min(window_s, seg.end_s - t0);
      s.meta.vibrato_segments.push_back(c);
    }
    for (const auto& st : clip.meta.strokes) {
      if (st.end_s <= t0 || st.start_s >= t0 + window_s) continue;
      Stroke c = st;
      c.start_s = std::max(0.0, st.start_s - t0);
      c.end_s = std::min(window_s, st.end_s - t0);
      s.meta.strokes.push_back(c);
    }

    s.pose.fps = fps;
    s.pose.joints = clip.pose.joints;
    s.pose.frames = wf;
    s.pose.positions.assign(clip.pose.positions.begin() +
                                static_cast<std::size_t>(f0) * clip.pose.joints * 3,
                            clip.pose.positions.begin() +
                                static_cast<std::size_t>(f0 + wf) * clip.pose.joints * 3);
    s.kp2d = clip.kp2d;
    s.kp2d.frames = wf;
    s.kp2d.values.assign(clip.kp2d.values.begin() +
                             static_cast<std::size_t>(f0) * clip.kp2d.joints * 2,
                         clip.kp2d.values.begin() +
                             static_cast<std::size_t>(f0 + wf) * clip.kp2d.joints * 2);
    const int a0 = static_cast<int>(std::lround(t0 * sr));
    s.audio.sample_rate = sr;
    s.audio.samples.assign(clip.audio.samples.begin() + a0, clip.audio.samples.begin() + a0 + ws);
    out.push_back(std::move(s));
  }
  return out;
}

void generate_dataset(const RunConfig& cfg, const std::string& out_dir, bool force) {
  cfg.validate();
  if (fs::exists(out_dir) && !fs::is_empty(out_dir)) {
    if (!force) {
      throw std::runtime_error("generate: output directory not empty (use --force): " + out_dir);
    }
    fs::remove_all(out_dir);
  }
  fs::create_directories(out_dir);

  const int test_participants =
      std::min(cfg.participants,
               std::max(cfg.test_fraction > 0 ? 1 : 0,
                        static_cast<int>(std::lround(cfg.test_fraction * cfg.participants))));
  const int first_test = cfg.participants - test_participants;

  const ScriptStyle style = cfg.style == "exercise" ? ScriptStyle::Exercise : ScriptStyle::Piece;
  const Camera camera;

  int sample_idx = 0;
  for (int p = 0; p < cfg.participants; ++p) {
    for (int c = 0; c < cfg.clips_per_participant; ++c) {
      const std::uint64_t clip_seed =
          Rng::derive(cfg.seed, 0xC11F + static_cast<std::uint64_t>(p) * 1009 + c);
      PerformanceScript script = generate_script(clip_seed, cfg.clip_duration_s, style);
      script.fps = cfg.model.fps;
      script.participant = p;

      Sample clip;
      clip.pose = render_pose(script);
      clip.kp2d = project_2d(clip.pose, camera, cfg.noise_sigma_px, clip_seed + 1,
                             cfg.occlusion_rate);
      clip.audio = synth_audio(script, cfg.sample_rate);
      clip.meta.fps = script.fps;
      clip.meta.frames = clip.pose.frames;
      clip.meta.joints = clip.pose.joints;
      clip.meta.joint_names = joint_names();
      clip.meta.seed = clip_seed;
      clip.meta.participant = p;
      clip.meta.audio_sample_rate = cfg.sample_rate;
      clip.meta.bow_change_times = script.bow_change_times();
      clip.meta.vibrato_event_times = script.vibrato_event_times();
      clip.meta.vibrato_segments = script.vibrato;
      clip.meta.strokes = script.strokes;

      Rng split_rng(Rng::derive(cfg.seed, 0x5917 + static_cast<std::uint64_t>(p) * 733 + c));
      for (Sample& w : window_sample(clip, cfg.window_s, cfg.hop_s)) {
        if (p >= first_test) {
          w.meta.split = "test";
        } else {
          w.meta.split = split_rng.uniform() < cfg.val_fraction ? "val" : "train";
        }
        char name[32];
        std::snprintf(name, sizeof(name), "sample_%05d", sample_idx++);
        write_sample(out_dir + "/" + name, w);
      }
    }
  }
  std::ofstream cfg_os(out_dir + "/dataset_config.json");
  cfg_os << cfg.to_json() << "\n";
}

DatasetIndex load_dataset_index(const std::string& dir) {
  DatasetIndex idx;
  std::vector<std::string> dirs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory() && entry.path().filename().string().rfind("sample_", 0) == 0) {
      dirs.push_back(entry.path().string());
    }
  }
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw std::runtime_error("dataset: no samples under " + dir);
  for (const std::string& d : dirs) {
    std::ifstream is(d + "/meta.json");
    if (!is) throw std::runtime_error("dataset: missing meta.json in " + d);
    nlohmann::json meta = nlohmann::json::parse(is);
    const std::string split = meta.value("split", "train");
    if (split == "test") idx.test_dirs.push_back(d);
    else if (split == "val") idx.val_dirs.push_back(d);
    else idx.train_dirs.push_back(d);
  }
  return idx;
}

Sample select_joints(const Sample& sample, const std::vector<std::string>& subset) {
  if (subset.empty()) return sample;
  std::vector<int> indices;
  for (const std::string& name : subset) {
    auto it = std::find(sample.meta.joint_names.begin(), sample.meta.joint_names.end(), name);
    if (it == sample.meta.joint_names.end()) {
      throw std::invalid_argument("dataset: joint '" + name + "' not present in sample");
    }
    indices.push_back(static_cast<int>(it - sample.meta.joint_names.begin()));
  }
  Sample out = sample;
  const int J = static_cast<int>(indices.size());
  out.meta.joints = J;
  out.meta.joint_names = subset;
  out.pose.joints = J;
  out.pose.positions.assign(static_cast<std::size_t>(sample.pose.frames) * J * 3, 0.0);
  out.kp2d.joints = J;
  out.kp2d.values.assign(static_cast<std::size_t>(sample.kp2d.frames) * J * 2, 0.0);
  for (int f = 0; f < sample.pose.frames; ++f) {
    for (int k = 0; k < J; ++k) {
      for (int a = 0; a < 3; ++a) out.pose.at(f, k, a) = sample.pose.at(f, indices[k], a);
      for (int a = 0; a < 2; ++a) out.kp2d.at(f, k, a) = sample.kp2d.at(f, indices[k], a);
    }
  }
  return out;
}

PreparedSample prepare_sample(const Sample& sample, const RunConfig& cfg, bool with_tempogram) {
  PreparedSample ps;
  ps.raw = select_joints(sample, cfg.joint_subset);
  const int f = ps.raw.pose.frames, J = ps.raw.pose.joints;
  if (f != cfg.model.frames) {
    throw std::invalid_argument("dataset: sample has " + std::to_string(f) +
                                " frames but the model expects " +
                                std::to_string(cfg.model.frames));
  }

  const Camera& cam = ps.raw.kp2d.camera;
  ps.kp2d_norm.resize(static_cast<std::size_t>(f) * J * 2);
  for (int t = 0; t < f; ++t) {
    for (int j = 0; j < J; ++j) {
      ps.kp2d_norm[(static_cast<std::size_t>(t) * J + j) * 2 + 0] =
          (ps.raw.kp2d.at(t, j, 0) - cam.cx) / (cam.width / 2.0);
      ps.kp2d_norm[(static_cast<std::size_t>(t) * J + j) * 2 + 1] =
          (ps.raw.kp2d.at(t, j, 1) - cam.cy) / (cam.height / 2.0);
    }
  }

  if (cfg.model.use_audio || with_tempogram) {
    ps.features = assemble_features(ps.raw.audio, cfg.model.feature_rate);
    if (ps.features.frames != cfg.model.audio_frames) {
      throw std::invalid_argument("dataset: feature rows " + std::to_string(ps.features.frames) +
                                  " do not match config F=" +
                                  std::to_string(cfg.model.audio_frames));
    }
  }

  ps.gt_centered = root_centered(ps.raw.pose);
  ps.gt_vel = pose_derivative(ps.gt_centered);
  ps.gt_acc = pose_derivative(ps.gt_vel);

  if (with_tempogram) {
    std::vector<double> env(ps.features.frames);
    for (int t = 0; t < ps.features.frames; ++t) env[t] = ps.features.at(t, FeatureMatrix::kEnvelope);
    ps.gt_tempogram = tempogram(env, cfg.model.feature_rate, cfg.loss.tempo_window_s,
                                cfg.loss.tempo_hop_s, cfg.loss.tempo_bpm_bins);
    ps.has_tempogram = true;
  }
  return ps;
}

PreparedSample load_prepared(const std::string& dir, const RunConfig& cfg, bool with_tempogram) {
  return prepare_sample(read_sample(dir), cfg, with_tempogram);
}

Batch make_batch(const std::vector<const PreparedSample*>& samples, const RunConfig& cfg) {
  if (samples.empty()) throw std::invalid_argument("batch: empty");
  const int b = static_cast<int>(samples.size());
  const int f = cfg.model.frames, J = cfg.model.joints, F = cfg.model.audio_frames;

  Batch batch;
  {
    std::vector<double> kp;
    kp.reserve(static_cast<std::size_t>(b) * f * J * 2);
    for (const auto* s : samples) kp.insert(kp.end(), s->kp2d_norm.begin(), s->kp2d_norm.end());
    batch.kp2d = Tensor::from_data({b, f, J, 2}, std::move(kp));
  }
  if (cfg.model.use_audio) {
    std::vector<double> feats;
    feats.reserve(static_cast<std::size_t>(b) * F * 35);
    for (const auto* s : samples) {
      feats.insert(feats.end(), s->features.values.begin(), s->features.values.end());
    }
    batch.features = Tensor::from_data({b, F, 35}, std::move(feats));
  }
  auto stack_pose = [&](auto accessor) {
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(b) * f * J * 3);
    for (const auto* s : samples) {
      const PoseSequence& seq = accessor(*s);
      data.insert(data.end(), seq.positions.begin(), seq.positions.end());
    }
    return Tensor::from_data({b, f, J, 3}, std::move(data));
  };
  batch.gt_pose = stack_pose([](const PreparedSample& s) -> const PoseSequence& { return s.gt_centered; });
  batch.gt_vel = stack_pose([](const PreparedSample& s) -> const PoseSequence& { return s.gt_vel; });
  batch.gt_acc = stack_pose([](const PreparedSample& s) -> const PoseSequence& { return s.gt_acc; });

  if (samples[0]->has_tempogram) {
    std::vector<Tempogram> tgs;
    for (const auto* s : samples) tgs.push_back(s->gt_tempogram);
    batch.gt_tempo = tempograms_to_tensor(tgs);
  }
  return batch;
}

}  // namespace viopose
