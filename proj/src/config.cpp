#include "viopose/config.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace viopose {

using nlohmann::json;

int RunConfig::frames() const {
  return static_cast<int>(std::lround(window_s * model.fps));
}

int RunConfig::audio_frames() const {
  return static_cast<int>(std::lround(window_s * model.feature_rate));
}

void RunConfig::finalize() {
  model.frames = frames();
  model.audio_frames = audio_frames();
  if (!joint_subset.empty()) model.joints = static_cast<int>(joint_subset.size());
}

void RunConfig::validate() const {
  model.validate();
  loss.validate();
  if (window_s < 1e-9 || hop_s < 1e-9) throw std::invalid_argument("config: window/hop must be positive");
  if (clip_duration_s + 1e-9 < window_s) {
    throw std::invalid_argument("config: clip duration shorter than the analysis window");
  }
  if (style != "exercise" && style != "piece") {
    throw std::invalid_argument("config: unknown script style '" + style + "'");
  }
  if (participants < 1) throw std::invalid_argument("config: need at least one participant");
  if (batch < 1) throw std::invalid_argument("config: batch must be >= 1");
  if (lr <= 0) throw std::invalid_argument("config: learning rate must be positive");
}

static json model_to_json(const ModelConfig& m) {
  return json{{"frames", m.frames},
              {"audio_frames", m.audio_frames},
              {"feature_rate", m.feature_rate},
              {"fps", m.fps},
              {"joints", m.joints},
              {"dim", m.dim},
              {"pose_blocks", m.pose_blocks},
              {"hierarchy_blocks", m.hierarchy_blocks},
              {"heads", m.heads},
              {"ffn_dim", m.ffn_dim},
              {"use_audio", m.use_audio},
              {"audio_input", m.audio_input},
              {"audio_feature_norm", m.audio_feature_norm},
              {"hierarchy_mode", to_string(m.hierarchy_mode)},
              {"mixing_mode", to_string(m.mixing_mode)},
              {"out_scale_pose", m.out_scale_pose},
              {"out_scale_vel", m.out_scale_vel},
              {"out_scale_acc", m.out_scale_acc}};
}

static void model_from_json(const json& j, ModelConfig& m) {
  m.frames = j.value("frames", m.frames);
  m.audio_frames = j.value("audio_frames", m.audio_frames);
  m.feature_rate = j.value("feature_rate", m.feature_rate);
  m.fps = j.value("fps", m.fps);
  m.joints = j.value("joints", m.joints);
  m.dim = j.value("dim", m.dim);
  m.pose_blocks = j.value("pose_blocks", m.pose_blocks);
  m.hierarchy_blocks = j.value("hierarchy_blocks", m.hierarchy_blocks);
  m.heads = j.value("heads", m.heads);
  m.ffn_dim = j.value("ffn_dim", m.ffn_dim);
  m.use_audio = j.value("use_audio", m.use_audio);
  m.audio_input = j.value("audio_input", m.audio_input);
  m.audio_feature_norm = j.value("audio_feature_norm", m.audio_feature_norm);
  if (j.contains("hierarchy_mode")) m.hierarchy_mode = hierarchy_mode_from_string(j["hierarchy_mode"]);
  if (j.contains("mixing_mode")) m.mixing_mode = mixing_mode_from_string(j["mixing_mode"]);
  m.out_scale_pose = j.value("out_scale_pose", m.out_scale_pose);
  m.out_scale_vel = j.value("out_scale_vel", m.out_scale_vel);
  m.out_scale_acc = j.value("out_scale_acc", m.out_scale_acc);
}

std::string RunConfig::to_json() const {
  json j;
  j["model"] = model_to_json(model);
  j["loss"] = {{"variant", loss.variant},
               {"lambda_v", loss.lambda_v},
               {"lambda_a", loss.lambda_a},
               {"lambda_p1", loss.lambda_p1},
               {"lambda_p2", loss.lambda_p2},
               {"lambda_p3", loss.lambda_p3},
               {"lambda_A", loss.lambda_A},
               {"lambda_C", loss.lambda_C},
               {"tempo_window_s", loss.tempo_window_s},
               {"tempo_hop_s", loss.tempo_hop_s},
               {"tempo_bpm_bins", loss.tempo_bpm_bins}};
  j["lr"] = lr;
  json milestones = json::array();
  for (const auto& [epoch, value] : lr_milestones) milestones.push_back({{"epoch", epoch}, {"lr", value}});
  j["lr_milestones"] = milestones;
  j["epochs"] = epochs;
  j["batch"] = batch;
  j["window_s"] = window_s;
  j["hop_s"] = hop_s;
  j["sample_rate"] = sample_rate;
  j["participants"] = participants;
  j["clips_per_participant"] = clips_per_participant;
  j["clip_duration_s"] = clip_duration_s;
  j["style"] = style;
  j["noise_sigma_px"] = noise_sigma_px;
  j["occlusion_rate"] = occlusion_rate;
  j["test_fraction"] = test_fraction;
  j["val_fraction"] = val_fraction;
  j["joint_subset"] = joint_subset;
  j["seed"] = seed;
  j["kalman"] = kalman;
  j["kalman_params"] = {{"sigma_q", kalman_params.sigma_q},
                        {"r_pos", kalman_params.r_pos},
                        {"r_vel", kalman_params.r_vel},
                        {"r_acc", kalman_params.r_acc}};
  return j.dump(2);
}

RunConfig RunConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    throw std::invalid_argument(std::string("config: invalid JSON: ") + e.what());
  }
  RunConfig cfg;
  if (j.contains("model")) model_from_json(j["model"], cfg.model);
  if (j.contains("loss")) {
    const json& l = j["loss"];
    cfg.loss.variant = l.value("variant", cfg.loss.variant);
    cfg.loss.lambda_v = l.value("lambda_v", cfg.loss.lambda_v);
    cfg.loss.lambda_a = l.value("lambda_a", cfg.loss.lambda_a);
    cfg.loss.lambda_p1 = l.value("lambda_p1", cfg.loss.lambda_p1);
    cfg.loss.lambda_p2 = l.value("lambda_p2", cfg.loss.lambda_p2);
    cfg.loss.lambda_p3 = l.value("lambda_p3", cfg.loss.lambda_p3);
    cfg.loss.lambda_A = l.value("lambda_A", cfg.loss.lambda_A);
    cfg.loss.lambda_C = l.value("lambda_C", cfg.loss.lambda_C);
    cfg.loss.tempo_window_s = l.value("tempo_window_s", cfg.loss.tempo_window_s);
    cfg.loss.tempo_hop_s = l.value("tempo_hop_s", cfg.loss.tempo_hop_s);
    cfg.loss.tempo_bpm_bins = l.value("tempo_bpm_bins", cfg.loss.tempo_bpm_bins);
  }
  cfg.lr = j.value("lr", cfg.lr);
  if (j.contains("lr_milestones")) {
    cfg.lr_milestones.clear();
    for (const auto& m : j["lr_milestones"]) {
      cfg.lr_milestones.emplace_back(m.at("epoch").get<int>(), m.at("lr").get<double>());
    }
  }
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.batch = j.value("batch", cfg.batch);
  cfg.window_s = j.value("window_s", cfg.window_s);
  cfg.hop_s = j.value("hop_s", cfg.hop_s);
  cfg.sample_rate = j.value("sample_rate", cfg.sample_rate);
  cfg.participants = j.value("participants", cfg.participants);
  cfg.clips_per_participant = j.value("clips_per_participant", cfg.clips_per_participant);
  cfg.clip_duration_s = j.value("clip_duration_s", cfg.clip_duration_s);
  cfg.style = j.value("style", cfg.style);
  cfg.noise_sigma_px = j.value("noise_sigma_px", cfg.noise_sigma_px);
  cfg.occlusion_rate = j.value("occlusion_rate", cfg.occlusion_rate);
  cfg.test_fraction = j.value("test_fraction", cfg.test_fraction);
  cfg.val_fraction = j.value("val_fraction", cfg.val_fraction);
  if (j.contains("joint_subset")) cfg.joint_subset = j["joint_subset"].get<std::vector<std::string>>();
  cfg.seed = j.value("seed", cfg.seed);
  cfg.kalman = j.value("kalman", cfg.kalman);
  if (j.contains("kalman_params")) {
    const json& k = j["kalman_params"];
    cfg.kalman_params.sigma_q = k.value("sigma_q", cfg.kalman_params.sigma_q);
    cfg.kalman_params.r_pos = k.value("r_pos", cfg.kalman_params.r_pos);
    cfg.kalman_params.r_vel = k.value("r_vel", cfg.kalman_params.r_vel);
    cfg.kalman_params.r_acc = k.value("r_acc", cfg.kalman_params.r_acc);
  }
  cfg.finalize();
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("config: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return from_json(text);
}

RunConfig RunConfig::defaults() {
  RunConfig cfg;
  cfg.finalize();
  return cfg;
}

RunConfig RunConfig::tiny() {
  RunConfig cfg;
  cfg.model.dim = 32;
  cfg.model.pose_blocks = 2;
  cfg.model.hierarchy_blocks = 2;
  cfg.model.ffn_dim = 64;
  cfg.model.heads = 4;
  cfg.window_s = 1.0;
  cfg.hop_s = 1.0;
  cfg.clip_duration_s = 6.0;
  cfg.participants = 3;
  cfg.clips_per_participant = 3;
  cfg.epochs = 5;
  cfg.batch = 16;
  cfg.joint_subset = {"l_wrist", "l_hand", "r_wrist", "r_hand"};
  cfg.loss.tempo_window_s = 0.5;
  cfg.loss.tempo_hop_s = 0.25;
  cfg.finalize();
  return cfg;
}

void apply_env_seed(RunConfig& cfg) {
  if (const char* env = std::getenv("VIOPOSE_SEED")) {
    cfg.seed = std::strtoull(env, nullptr, 10);
  }
}

double lr_at_epoch(const RunConfig& cfg, int epoch) {
  double lr = cfg.lr;
  for (const auto& [milestone, value] : cfg.lr_milestones) {
    if (epoch >= milestone) lr = value;
  }
  return lr;
}

}  // namespace viopose
