#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "viopose/analysis.hpp"
#include "viopose/checks.hpp"
#include "viopose/trainer.hpp"

namespace py = pybind11;
using namespace viopose;

namespace {

PoseSequence pose_from_array(py::array_t<double, py::array::c_style | py::array::forcecast> arr,
                             double fps) {
  if (arr.ndim() != 3 || arr.shape(2) != 3) {
    throw std::invalid_argument("expected pose array of shape (frames, joints, 3)");
  }
  PoseSequence seq;
  seq.frames = static_cast<int>(arr.shape(0));
  seq.joints = static_cast<int>(arr.shape(1));
  seq.fps = fps;
  seq.positions.assign(arr.data(), arr.data() + arr.size());
  return seq;
}

py::array_t<double> pose_to_array(const PoseSequence& seq) {
  py::array_t<double> arr({seq.frames, seq.joints, 3});
  std::copy(seq.positions.begin(), seq.positions.end(), arr.mutable_data());
  return arr;
}

Traj traj_from_array(py::array_t<double, py::array::c_style | py::array::forcecast> arr) {
  if (arr.ndim() != 2 || arr.shape(1) != 3) {
    throw std::invalid_argument("expected trajectory array of shape (frames, 3)");
  }
  Traj t(arr.shape(0));
  for (py::ssize_t i = 0; i < arr.shape(0); ++i) {
    t[i] = {arr.at(i, 0), arr.at(i, 1), arr.at(i, 2)};
  }
  return t;
}

}  // namespace

PYBIND11_MODULE(_viopose, m) {
  m.doc() = "audiovisual 4D pose estimation core";

  m.def(
      "generate_sample",
      [](std::uint64_t seed, double duration_s, const std::string& style, double noise_sigma_px,
         int sample_rate) {
        PerformanceScript script = generate_script(
            seed, duration_s, style == "exercise" ? ScriptStyle::Exercise : ScriptStyle::Piece);
        PoseSequence pose = render_pose(script);
        Keypoints2D kp = project_2d(pose, Camera{}, noise_sigma_px, seed + 1);
        AudioClip audio = synth_audio(script, sample_rate);

        py::array_t<double> kp_arr({kp.frames, kp.joints, 2});
        std::copy(kp.values.begin(), kp.values.end(), kp_arr.mutable_data());
        py::array_t<double> audio_arr(static_cast<py::ssize_t>(audio.samples.size()));
        std::copy(audio.samples.begin(), audio.samples.end(), audio_arr.mutable_data());

        py::dict out;
        out["pose"] = pose_to_array(pose);
        out["kp2d"] = kp_arr;
        out["audio"] = audio_arr;
        out["sample_rate"] = sample_rate;
        out["fps"] = script.fps;
        out["joint_names"] = joint_names();
        out["bow_change_times"] = script.bow_change_times();
        out["vibrato_event_times"] = script.vibrato_event_times();
        return out;
      },
      py::arg("seed"), py::arg("duration_s") = 6.0, py::arg("style") = "exercise",
      py::arg("noise_sigma_px") = 2.0, py::arg("sample_rate") = 16000);

  m.def(
      "assemble_features",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> samples, int sample_rate,
         int feature_rate) {
        AudioClip clip;
        clip.sample_rate = sample_rate;
        clip.samples.assign(samples.data(), samples.data() + samples.size());
        FeatureMatrix fm = assemble_features(clip, feature_rate);
        py::array_t<double> arr({fm.frames, FeatureMatrix::kColumns});
        std::copy(fm.values.begin(), fm.values.end(), arr.mutable_data());
        return arr;
      },
      py::arg("samples"), py::arg("sample_rate") = 16000, py::arg("feature_rate") = 100);

  m.def(
      "tempogram",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> envelope,
         double feature_rate, double window_s, double hop_s, int bins) {
        std::vector<double> env(envelope.data(), envelope.data() + envelope.size());
        Tempogram tg = viopose::tempogram(env, feature_rate, window_s, hop_s, bins);
        py::array_t<double> arr({tg.frames, static_cast<int>(tg.bpm_axis.size())});
        std::copy(tg.values.begin(), tg.values.end(), arr.mutable_data());
        return py::make_tuple(arr, tg.bpm_axis);
      },
      py::arg("envelope"), py::arg("feature_rate"), py::arg("window_s") = 2.0,
      py::arg("hop_s") = 0.5, py::arg("bins") = 91);

  m.def(
      "mpjpe",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> pred,
         py::array_t<double, py::array::c_style | py::array::forcecast> gt) {
        return mpjpe(pose_from_array(pred, 30), pose_from_array(gt, 30));
      },
      py::arg("pred"), py::arg("gt"));
  m.def(
      "p_mpjpe",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> pred,
         py::array_t<double, py::array::c_style | py::array::forcecast> gt) {
        return p_mpjpe(pose_from_array(pred, 30), pose_from_array(gt, 30));
      },
      py::arg("pred"), py::arg("gt"));
  m.def(
      "dtw",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> pred,
         py::array_t<double, py::array::c_style | py::array::forcecast> gt) {
        return dtw(pose_from_array(pred, 30), pose_from_array(gt, 30));
      },
      py::arg("pred"), py::arg("gt"));

  m.def(
      "kalman_fuse",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> pos,
         py::array_t<double, py::array::c_style | py::array::forcecast> vel,
         py::array_t<double, py::array::c_style | py::array::forcecast> acc, double sigma_q,
         double r_pos, double r_vel, double r_acc) {
        KalmanParams kp{sigma_q, r_pos, r_vel, r_acc};
        return pose_to_array(kalman_fuse(pose_from_array(pos, 30), pose_from_array(vel, 30),
                                         pose_from_array(acc, 30), kp));
      },
      py::arg("pos"), py::arg("vel"), py::arg("acc"), py::arg("sigma_q") = 1.0,
      py::arg("r_pos") = 25.0, py::arg("r_vel") = 4.0, py::arg("r_acc") = 4.0);

  m.def(
      "segment_bow_changes",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> wrist, double fps) {
        return segment_bow_changes(traj_from_array(wrist), fps).times;
      },
      py::arg("right_wrist"), py::arg("fps") = 30.0);
  m.def(
      "detect_vibrato",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> wrist,
         py::array_t<double, py::array::c_style | py::array::forcecast> hand, double fps) {
        return detect_vibrato(traj_from_array(wrist), traj_from_array(hand), fps).times;
      },
      py::arg("left_wrist"), py::arg("left_hand"), py::arg("fps") = 30.0);
  m.def(
      "score_events",
      [](const std::vector<double>& pred, const std::vector<double>& gt, double window_s) {
        return score_events(EventList{pred}, EventList{gt}, window_s);
      },
      py::arg("pred"), py::arg("gt"), py::arg("window_s") = 0.1);

  py::class_<VioPoseModel>(m, "Model")
      .def(py::init([](const std::string& checkpoint_dir) {
             Checkpoint ckpt = load_checkpoint(checkpoint_dir);
             return std::make_unique<VioPoseModel>(std::move(*ckpt.model));
           }),
           py::arg("checkpoint_dir"))
      .def_property_readonly("param_count",
                             [](const VioPoseModel& m_) { return m_.params().count_trainable(); })
      .def(
          "predict",
          [](const VioPoseModel& model,
             py::array_t<double, py::array::c_style | py::array::forcecast> kp2d_norm,
             py::array_t<double, py::array::c_style | py::array::forcecast> features) {
            NoGradGuard no_grad;
            const auto& mc = model.config();
            if (kp2d_norm.ndim() != 3) throw std::invalid_argument("kp2d must be (f,J,2)");
            Tensor kp = Tensor::from_data(
                {1, static_cast<int>(kp2d_norm.shape(0)), static_cast<int>(kp2d_norm.shape(1)), 2},
                std::vector<double>(kp2d_norm.data(), kp2d_norm.data() + kp2d_norm.size()));
            Tensor feats;
            if (mc.use_audio) {
              feats = Tensor::from_data(
                  {1, static_cast<int>(features.shape(0)), static_cast<int>(features.shape(1))},
                  std::vector<double>(features.data(), features.data() + features.size()));
            }
            DynamicsTriple triple = model.forward(kp, feats, BatchNormMode::Eval);
            py::dict out;
            out["pose"] = pose_to_array(tensor_to_pose(triple.pose, 0, mc.fps));
            out["vel"] = pose_to_array(tensor_to_pose(triple.vel, 0, mc.fps));
            out["acc"] = pose_to_array(tensor_to_pose(triple.acc, 0, mc.fps));
            return out;
          },
          py::arg("kp2d_norm"), py::arg("features") = py::array_t<double>());

  m.def("run_primitive_gradchecks", [] {
    py::list out;
    for (const CheckResult& r : run_primitive_gradchecks()) {
      out.append(py::make_tuple(r.name, r.max_rel_err, r.tolerance));
    }
    return out;
  });
}
