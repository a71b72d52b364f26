#include "viopose/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "viopose/nn.hpp"
#include "viopose/wav.hpp"

namespace viopose {
namespace {

constexpr double kPi = 3.14159265358979323846;

constexpr double kUpperArm = 300.0;
constexpr double kForearm = 260.0;
constexpr double kHand = 80.0;
constexpr double kVibratoRampS = 0.1;

Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
Vec3 operator*(double c, const Vec3& a) { return {c * a[0], c * a[1], c * a[2]}; }
double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
Vec3 normalized(const Vec3& a) {
  const double n = norm(a);
  return {a[0] / n, a[1] / n, a[2] / n};
}
Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

// Fixed body frame: performer at the origin, camera down +z.
const Vec3 kRShoulderPos{180, 0, 0};
const Vec3 kLShoulderPos{-180, 0, 0};
const Vec3 kRWristCenter{250, -80, 320};
const Vec3 kLWristBase{-60, 120, 380};
const Vec3 kBowAxis = normalized({0.8, -0.3, 0.5});
const Vec3 kBowPerp = normalized(cross(kBowAxis, Vec3{0, 1, 0}));
const Vec3 kVibratoAxis = normalized({0.6, 0.3, -0.74});
const Vec3 kRPole{0.3, -1, -0.1};
const Vec3 kLPole{-0.3, -1, -0.1};

const double kPitchSet[7] = {196.0, 220.0, 246.94, 293.66, 329.63, 392.0, 440.0};

// Per-stroke [s0, s1] travel along the bow axis, mm.
std::vector<std::pair<double, double>> stroke_endpoints(const PerformanceScript& script) {
  std::vector<std::pair<double, double>> ends;
  ends.reserve(script.strokes.size());
  double s = script.strokes.empty()
                 ? 0.0
                 : -script.strokes[0].direction * std::min(220.0, script.strokes[0].amplitude_mm / 2);
  for (const Stroke& st : script.strokes) {
    double travel = st.amplitude_mm;
    if (st.direction > 0) travel = std::min(travel, 220.0 - s);
    else travel = std::min(travel, s + 220.0);
    travel = std::max(travel, 0.0);
    const double s1 = s + st.direction * travel;
    ends.emplace_back(s, s1);
    s = s1;
  }
  return ends;
}

double vibrato_ramp(double t, const VibratoSegment& seg) {
  const double span = seg.end_s - seg.start_s;
  const double ramp = std::min(kVibratoRampS, span / 4);
  const double from_start = t - seg.start_s;
  const double to_end = seg.end_s - t;
  if (from_start < 0 || to_end < 0) return 0;
  double w = 1;
  if (from_start < ramp) w = 0.5 - 0.5 * std::cos(kPi * from_start / ramp);
  else if (to_end < ramp) w = 0.5 - 0.5 * std::cos(kPi * to_end / ramp);
  return w;
}

double vibrato_offset(const PerformanceScript& script, double t) {
  double v = 0;
  for (const VibratoSegment& seg : script.vibrato) {
    if (t >= seg.start_s && t <= seg.end_s) {
      v += seg.amplitude_mm * vibrato_ramp(t, seg) *
           std::sin(2 * kPi * seg.rate_hz * (t - seg.start_s));
    }
  }
  return v;
}

struct BowState {
  double s = 0;       // mm along the bow axis
  double speed = 0;   // signed mm/s along the axis
  double perp = 0;    // mm along the perpendicular (curved strokes)
  double pitch = 220;
  double vib_depth_st = 0;  // semitones of pitch modulation
  double vib_phase = 0;     // radians
};

BowState bow_state(const PerformanceScript& script,
                   const std::vector<std::pair<double, double>>& ends, double t,
                   std::size_t* stroke_hint = nullptr) {
  BowState out;
  std::size_t i = stroke_hint ? *stroke_hint : 0;
  while (i + 1 < script.strokes.size() && t >= script.strokes[i].end_s) ++i;
  if (stroke_hint) *stroke_hint = i;
  if (script.strokes.empty()) return out;
  const Stroke& st = script.strokes[i];
  const auto [s0, s1] = ends[i];
  const double span = std::max(1e-9, st.end_s - st.start_s);
  double u = (t - st.start_s) / span;
  u = std::clamp(u, 0.0, 1.0);
  out.s = s0 + (s1 - s0) * 0.5 * (1 - std::cos(kPi * u));
  out.speed = (s1 - s0) * 0.5 * kPi * std::sin(kPi * u) / span;
  out.perp = st.curve_mm * 0.5 * (1 - std::cos(2 * kPi * u));
  out.pitch = st.pitch_hz;
  for (const VibratoSegment& seg : script.vibrato) {
    if (t >= seg.start_s && t <= seg.end_s) {
      out.vib_depth_st = 0.03 * seg.amplitude_mm * vibrato_ramp(t, seg);
      out.vib_phase = 2 * kPi * seg.rate_hz * (t - seg.start_s);
    }
  }
  return out;
}

Vec3 ik_elbow(const Vec3& shoulder, const Vec3& wrist, const Vec3& pole) {
  const Vec3 d = wrist - shoulder;
  const double dist = norm(d);
  if (dist >= kUpperArm + kForearm || dist <= std::abs(kUpperArm - kForearm)) {
    throw std::runtime_error("render_pose: wrist target out of reach (" + std::to_string(dist) +
                             " mm from shoulder)");
  }
  const double a = (kUpperArm * kUpperArm - kForearm * kForearm + dist * dist) / (2 * dist);
  const double h = std::sqrt(std::max(0.0, kUpperArm * kUpperArm - a * a));
  const Vec3 w = normalized(d);
  const Vec3 n = normalized(pole - dot(pole, w) * w);
  return shoulder + a * w + h * n;
}

Vec3 rodrigues(const Vec3& v, const Vec3& axis, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return c * v + s * cross(axis, v) + (1 - c) * dot(axis, v) * axis;
}

Vec3 hand_from_wrist(const Vec3& elbow, const Vec3& wrist, const Vec3& pole,
                     double flexion_deg) {
  const Vec3 u = normalized(wrist - elbow);
  const Vec3 axis = normalized(cross(u, pole));
  const double alpha = (180.0 - flexion_deg) * kPi / 180.0;
  return wrist + kHand * rodrigues(u, axis, alpha);
}

void write_bin(const std::string& path, int frames, int joints, int comps,
               const std::vector<double>& data) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_sample: cannot open " + path);
  os.write("VPSE", 4);
  const std::uint32_t f = static_cast<std::uint32_t>(frames);
  const std::uint32_t j = static_cast<std::uint32_t>(joints);
  os.write(reinterpret_cast<const char*>(&f), 4);
  os.write(reinterpret_cast<const char*>(&j), 4);
  for (double v : data) {
    const float x = static_cast<float>(v);
    os.write(reinterpret_cast<const char*>(&x), 4);
  }
  if (!os) throw std::runtime_error("write_sample: write failed: " + path);
  (void)comps;
}

std::vector<double> read_bin(const std::string& path, int comps, int* frames, int* joints) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_sample: missing file " + path);
  char magic[4];
  std::uint32_t f = 0, j = 0;
  is.read(magic, 4);
  is.read(reinterpret_cast<char*>(&f), 4);
  is.read(reinterpret_cast<char*>(&j), 4);
  if (!is || std::memcmp(magic, "VPSE", 4) != 0) {
    throw std::runtime_error("read_sample: bad header in " + path);
  }
  const std::size_t n = static_cast<std::size_t>(f) * j * comps;
  std::vector<float> raw(n);
  is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n * 4));
  if (static_cast<std::size_t>(is.gcount()) != n * 4) {
    throw std::runtime_error("read_sample: truncated file " + path);
  }
  *frames = static_cast<int>(f);
  *joints = static_cast<int>(j);
  return std::vector<double>(raw.begin(), raw.end());
}

}  // namespace

const std::vector<std::string>& joint_names() {
  static const std::vector<std::string> names = {"l_shoulder", "l_elbow", "l_wrist", "l_hand",
                                                 "r_shoulder", "r_elbow", "r_wrist", "r_hand"};
  return names;
}

std::vector<double> PerformanceScript::bow_change_times() const {
  std::vector<double> t;
  for (std::size_t i = 1; i < strokes.size(); ++i) t.push_back(strokes[i].start_s);
  return t;
}

std::vector<double> PerformanceScript::vibrato_event_times() const {
  std::vector<double> t;
  for (const VibratoSegment& seg : vibrato) {
    const double span = seg.end_s - seg.start_s;
    const double ramp = std::min(kVibratoRampS, span / 4);
    for (int k = 0;; ++k) {
      const double tk = seg.start_s + (2 * k + 1) / (4 * seg.rate_hz);
      if (tk > seg.end_s - ramp) break;
      if (tk >= seg.start_s + ramp) t.push_back(tk);
    }
  }
  std::sort(t.begin(), t.end());
  return t;
}

std::vector<Vec3> PoseSequence::trajectory(int j) const {
  std::vector<Vec3> out(frames);
  for (int f = 0; f < frames; ++f) out[f] = joint(f, j);
  return out;
}

PoseSequence pose_derivative(const PoseSequence& pose, double dt) {
  if (pose.frames < 3) throw std::invalid_argument("pose_derivative: need at least 3 frames");
  PoseSequence out = pose;
  const double h = 1.0 / (2 * dt);
  const int J = pose.joints;
  for (int j = 0; j < J; ++j) {
    for (int a = 0; a < 3; ++a) {
      out.at(0, j, a) = (-3 * pose.at(0, j, a) + 4 * pose.at(1, j, a) - pose.at(2, j, a)) * h;
      for (int f = 1; f < pose.frames - 1; ++f) {
        out.at(f, j, a) = (pose.at(f + 1, j, a) - pose.at(f - 1, j, a)) * h;
      }
      const int n = pose.frames - 1;
      out.at(n, j, a) =
          (3 * pose.at(n, j, a) - 4 * pose.at(n - 1, j, a) + pose.at(n - 2, j, a)) * h;
    }
  }
  return out;
}

PerformanceScript generate_script(std::uint64_t seed, double duration_s, ScriptStyle style) {
  if (duration_s < 3.0) {
    throw std::invalid_argument("generate_script: duration " + std::to_string(duration_s) +
                                " s shorter than the 3 s analysis window");
  }
  PerformanceScript script;
  script.duration_s = duration_s;
  script.seed = seed;
  Rng rng(Rng::derive(seed, 0x5c71));

  double t = 0;
  int dir = 1;
  int idx = 0;
  while (t < duration_s - 1e-9) {
    Stroke st;
    st.start_s = t;
    double span;
    if (style == ScriptStyle::Exercise) {
      span = 0.5;
      st.amplitude_mm = 400;
      st.pitch_hz = kPitchSet[idx % 7];
    } else {
      span = rng.uniform(0.35, 0.9);
      st.amplitude_mm = rng.uniform(150, 440);
      st.pitch_hz = kPitchSet[static_cast<int>(rng.uniform(0, 7)) % 7];
      if (rng.uniform() < 0.2) {
        st.straight = false;
        st.curve_mm = rng.uniform(25, 30);
      }
    }
    if (t + span > duration_s) span = duration_s - t;
    if (span < 0.15 && !script.strokes.empty()) {
      script.strokes.back().end_s = duration_s;
      break;
    }
    st.end_s = t + span;
    st.direction = dir;
    script.strokes.push_back(st);
    t = st.end_s;
    dir = -dir;
    ++idx;
  }

  if (style == ScriptStyle::Piece) {
    // At least one curved stroke per piece.
    bool any_curved = false;
    for (const Stroke& st : script.strokes) any_curved |= !st.straight;
    if (!any_curved && script.strokes.size() > 1) {
      Stroke& st = script.strokes[script.strokes.size() / 2];
      st.straight = false;
      st.curve_mm = 28;
    }
    // Vibrato segments over a few strokes, clear of stroke boundaries.
    double vt = rng.uniform(0.5, 1.5);
    bool any_vib = false;
    while (vt + 1.2 < duration_s) {
      VibratoSegment seg;
      seg.start_s = vt;
      seg.end_s = vt + rng.uniform(1.0, 2.0);
      seg.end_s = std::min(seg.end_s, duration_s - 0.2);
      seg.rate_hz = rng.uniform(4.0, 9.0);
      seg.amplitude_mm = 10.0;
      if (seg.end_s - seg.start_s > 0.5) {
        script.vibrato.push_back(seg);
        any_vib = true;
      }
      vt = seg.end_s + rng.uniform(1.0, 3.0);
    }
    if (!any_vib) {
      script.vibrato.push_back({duration_s * 0.3, duration_s * 0.3 + 1.5,
                                rng.uniform(4.0, 9.0), 10.0});
    }
    script.hold_base_deg = rng.uniform(150, 168);
    script.hold_amp_deg = rng.uniform(3, 8);
    script.hold_rate_hz = rng.uniform(0.08, 0.25);
    script.hold_phase = rng.uniform(0, 2 * kPi);
  }
  return script;
}

PoseSequence render_pose(const PerformanceScript& script) {
  const auto ends = stroke_endpoints(script);
  PoseSequence pose;
  pose.fps = script.fps;
  pose.joints = kJointCount;
  pose.frames = static_cast<int>(std::lround(script.duration_s * script.fps));
  pose.positions.assign(static_cast<std::size_t>(pose.frames) * kJointCount * 3, 0.0);

  std::size_t hint = 0;
  for (int f = 0; f < pose.frames; ++f) {
    const double t = f / script.fps;
    const BowState bs = bow_state(script, ends, t, &hint);

    const Vec3 r_wrist = kRWristCenter + bs.s * kBowAxis + bs.perp * kBowPerp;
    const Vec3 r_elbow = ik_elbow(kRShoulderPos, r_wrist, kRPole);
    const Vec3 r_hand = hand_from_wrist(r_elbow, r_wrist, kRPole, 170.0);

    const Vec3 l_wrist = kLWristBase + vibrato_offset(script, t) * kVibratoAxis;
    const Vec3 l_elbow = ik_elbow(kLShoulderPos, l_wrist, kLPole);
    const double flexion = script.hold_base_deg +
                           script.hold_amp_deg *
                               std::sin(2 * kPi * script.hold_rate_hz * t + script.hold_phase);
    const Vec3 l_hand = hand_from_wrist(l_elbow, l_wrist, kLPole, flexion);

    auto put = [&](int j, const Vec3& p) {
      pose.at(f, j, 0) = p[0];
      pose.at(f, j, 1) = p[1];
      pose.at(f, j, 2) = p[2];
    };
    put(kLShoulder, kLShoulderPos);
    put(kLElbow, l_elbow);
    put(kLWrist, l_wrist);
    put(kLHand, l_hand);
    put(kRShoulder, kRShoulderPos);
    put(kRElbow, r_elbow);
    put(kRWrist, r_wrist);
    put(kRHand, r_hand);
  }
  return pose;
}

Keypoints2D project_2d(const PoseSequence& pose, const Camera& camera, double noise_sigma_px,
                       std::uint64_t seed, double occlusion_rate) {
  Keypoints2D kp;
  kp.frames = pose.frames;
  kp.joints = pose.joints;
  kp.camera = camera;
  kp.noise_sigma_px = noise_sigma_px;
  kp.values.assign(static_cast<std::size_t>(pose.frames) * pose.joints * 2, 0.0);
  Rng rng(Rng::derive(seed, 0x2d2d));
  const double margin_w = 0.1 * camera.width, margin_h = 0.1 * camera.height;
  for (int f = 0; f < pose.frames; ++f) {
    for (int j = 0; j < pose.joints; ++j) {
      const bool occluded = occlusion_rate > 0 && f > 0 && rng.uniform() < occlusion_rate;
      if (occluded) {
        kp.at(f, j, 0) = kp.at(f - 1, j, 0);
        kp.at(f, j, 1) = kp.at(f - 1, j, 1);
        continue;
      }
      const double zc = camera.position_z_mm - pose.at(f, j, 2);
      if (zc < 1.0) {
        throw std::runtime_error("project_2d: joint " + joint_names()[j] + " behind camera at frame " +
                                 std::to_string(f));
      }
      double u = camera.fx * pose.at(f, j, 0) / zc + camera.cx;
      double v = camera.fy * (-pose.at(f, j, 1)) / zc + camera.cy;
      if (noise_sigma_px > 0) {
        u += rng.normal(0, noise_sigma_px);
        v += rng.normal(0, noise_sigma_px);
      }
      kp.at(f, j, 0) = std::clamp(u, -margin_w, camera.width + margin_w);
      kp.at(f, j, 1) = std::clamp(v, -margin_h, camera.height + margin_h);
    }
  }
  return kp;
}

double script_bow_speed(const PerformanceScript& script, double t) {
  const auto ends = stroke_endpoints(script);
  return std::abs(bow_state(script, ends, t).speed);
}

AudioClip synth_audio(const PerformanceScript& script, int sample_rate) {
  const auto ends = stroke_endpoints(script);
  AudioClip clip;
  clip.sample_rate = sample_rate;
  const std::size_t n = static_cast<std::size_t>(std::llround(script.duration_s * sample_rate));
  clip.samples.assign(n, 0.0);

  constexpr int kHarmonics = 6;
  double harm_norm = 0;
  for (int h = 1; h <= kHarmonics; ++h) harm_norm += 1.0 / h;
  const double speed_ref = 600.0;  // mm/s at full loudness

  double phase = 0;
  std::size_t hint = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    const BowState bs = bow_state(script, ends, t, &hint);
    const double amp = std::min(1.0, std::abs(bs.speed) / speed_ref);
    const double freq = bs.pitch * std::pow(2.0, bs.vib_depth_st * std::sin(bs.vib_phase) / 12.0);
    phase += freq / sample_rate;
    if (amp > 0) {
      double s = 0;
      for (int h = 1; h <= kHarmonics; ++h) {
        s += std::sin(2 * kPi * h * phase) / h;
      }
      clip.samples[i] = 0.75 * amp * s / harm_norm;
    }
  }
  return clip;
}

void write_sample(const std::string& dir, const Sample& sample) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  nlohmann::json meta;
  meta["fps"] = sample.meta.fps;
  meta["frames"] = sample.meta.frames;
  meta["joints"] = sample.meta.joints;
  meta["joint_names"] = sample.meta.joint_names;
  meta["seed"] = sample.meta.seed;
  meta["participant"] = sample.meta.participant;
  meta["split"] = sample.meta.split;
  meta["audio_sample_rate"] = sample.meta.audio_sample_rate;
  meta["bow_change_times"] = sample.meta.bow_change_times;
  meta["vibrato_event_times"] = sample.meta.vibrato_event_times;
  auto& segs = meta["vibrato_segments"] = nlohmann::json::array();
  for (const auto& s : sample.meta.vibrato_segments) {
    segs.push_back({{"start_s", s.start_s}, {"end_s", s.end_s}, {"rate_hz", s.rate_hz},
                    {"amplitude_mm", s.amplitude_mm}});
  }
  auto& strokes = meta["strokes"] = nlohmann::json::array();
  for (const auto& s : sample.meta.strokes) {
    strokes.push_back({{"start_s", s.start_s}, {"end_s", s.end_s}, {"direction", s.direction},
                       {"straight", s.straight}});
  }
  std::ofstream os(dir + "/meta.json");
  if (!os) throw std::runtime_error("write_sample: cannot open " + dir + "/meta.json");
  os << meta.dump(2) << "\n";

  write_bin(dir + "/pose3d.bin", sample.pose.frames, sample.pose.joints, 3,
            sample.pose.positions);
  // kp2d reuses the header layout with two components per joint.
  {
    std::ofstream kb(dir + "/kp2d.bin", std::ios::binary);
    if (!kb) throw std::runtime_error("write_sample: cannot open " + dir + "/kp2d.bin");
    kb.write("VPSE", 4);
    const std::uint32_t f = static_cast<std::uint32_t>(sample.kp2d.frames);
    const std::uint32_t j = static_cast<std::uint32_t>(sample.kp2d.joints);
    kb.write(reinterpret_cast<const char*>(&f), 4);
    kb.write(reinterpret_cast<const char*>(&j), 4);
    for (double v : sample.kp2d.values) {
      const float x = static_cast<float>(v);
      kb.write(reinterpret_cast<const char*>(&x), 4);
    }
  }
  write_wav(dir + "/audio.wav", sample.audio);
}

Sample read_sample(const std::string& dir) {
  std::ifstream is(dir + "/meta.json");
  if (!is) throw std::runtime_error("read_sample: missing file " + dir + "/meta.json");
  nlohmann::json meta = nlohmann::json::parse(is);

  Sample sample;
  sample.meta.fps = meta.at("fps").get<double>();
  sample.meta.frames = meta.at("frames").get<int>();
  sample.meta.joints = meta.at("joints").get<int>();
  sample.meta.joint_names = meta.at("joint_names").get<std::vector<std::string>>();
  sample.meta.seed = meta.at("seed").get<std::uint64_t>();
  sample.meta.participant = meta.at("participant").get<int>();
  sample.meta.split = meta.at("split").get<std::string>();
  sample.meta.audio_sample_rate = meta.at("audio_sample_rate").get<int>();
  sample.meta.bow_change_times = meta.at("bow_change_times").get<std::vector<double>>();
  sample.meta.vibrato_event_times = meta.at("vibrato_event_times").get<std::vector<double>>();
  for (const auto& s : meta.at("vibrato_segments")) {
    sample.meta.vibrato_segments.push_back({s.at("start_s").get<double>(),
                                            s.at("end_s").get<double>(),
                                            s.at("rate_hz").get<double>(),
                                            s.at("amplitude_mm").get<double>()});
  }
  for (const auto& s : meta.at("strokes")) {
    Stroke st;
    st.start_s = s.at("start_s").get<double>();
    st.end_s = s.at("end_s").get<double>();
    st.direction = s.at("direction").get<int>();
    st.straight = s.at("straight").get<bool>();
    sample.meta.strokes.push_back(st);
  }

  int f = 0, j = 0;
  sample.pose.positions = read_bin(dir + "/pose3d.bin", 3, &f, &j);
  sample.pose.frames = f;
  sample.pose.joints = j;
  sample.pose.fps = sample.meta.fps;

  sample.kp2d.values = read_bin(dir + "/kp2d.bin", 2, &f, &j);
  sample.kp2d.frames = f;
  sample.kp2d.joints = j;

  sample.audio = read_wav(dir + "/audio.wav");
  if (sample.audio.sample_rate != sample.meta.audio_sample_rate) {
    throw std::runtime_error("read_sample: audio sample rate mismatch in " + dir);
  }

  if (sample.pose.frames != sample.meta.frames || sample.kp2d.frames != sample.meta.frames) {
    throw std::runtime_error("read_sample: meta frame count " +
                             std::to_string(sample.meta.frames) + " does not match arrays in " +
                             dir);
  }
  if (sample.pose.joints != sample.meta.joints || sample.kp2d.joints != sample.meta.joints) {
    throw std::runtime_error("read_sample: meta joint count mismatch in " + dir);
  }
  return sample;
}

}  // namespace viopose
