#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "viopose/audio.hpp"

namespace viopose {

using Vec3 = std::array<double, 3>;

// Joint order for the 8-joint upper-body configuration.
enum Joint : int {
  kLShoulder = 0,
  kLElbow = 1,
  kLWrist = 2,
  kLHand = 3,
  kRShoulder = 4,
  kRElbow = 5,
  kRWrist = 6,
  kRHand = 7,
  kJointCount = 8,
};
const std::vector<std::string>& joint_names();

struct Stroke {
  double start_s = 0;
  double end_s = 0;
  int direction = 1;        // +1 down-bow, -1 up-bow
  double amplitude_mm = 400;
  bool straight = true;
  double curve_mm = 0;      // peak bow-arc deviation for curved strokes
  double pitch_hz = 220;
};

struct VibratoSegment {
  double start_s = 0;
  double end_s = 0;
  double rate_hz = 6;
  double amplitude_mm = 10;
};

enum class ScriptStyle { Exercise, Piece };

struct PerformanceScript {
  double duration_s = 6;
  double fps = 30;
  std::vector<Stroke> strokes;          // contiguous, time-ordered
  std::vector<VibratoSegment> vibrato;  // non-overlapping, time-ordered
  // Left-wrist flexion profile: base + amp * sin(2*pi*rate*t + phase), deg.
  double hold_base_deg = 160;
  double hold_amp_deg = 6;
  double hold_rate_hz = 0.15;
  double hold_phase = 0;
  std::uint64_t seed = 0;
  int participant = 0;

  // Interior stroke boundaries (bowing direction changes), seconds.
  std::vector<double> bow_change_times() const;
  // Zero crossings of vibrato velocity (direction-change events), seconds.
  std::vector<double> vibrato_event_times() const;
};

struct PoseSequence {
  std::vector<double> positions;  // frames x joints x 3, mm
  int frames = 0;
  int joints = 0;
  double fps = 30;

  double at(int f, int j, int a) const {
    return positions[(static_cast<std::size_t>(f) * joints + j) * 3 + a];
  }
  double& at(int f, int j, int a) {
    return positions[(static_cast<std::size_t>(f) * joints + j) * 3 + a];
  }
  Vec3 joint(int f, int j) const { return {at(f, j, 0), at(f, j, 1), at(f, j, 2)}; }
  std::vector<Vec3> trajectory(int j) const;
};

// Temporal derivative with the shared differencing scheme (central interior,
// second-order one-sided ends); dt in frames by default so units are
// mm/frame per order.
PoseSequence pose_derivative(const PoseSequence& pose, double dt = 1.0);

struct Camera {
  double fx = 900, fy = 900;
  double cx = 640, cy = 360;
  int width = 1280, height = 720;
  double position_z_mm = 3000;  // on +z axis, looking toward the performer
};

struct Keypoints2D {
  std::vector<double> values;  // frames x joints x 2, px
  int frames = 0;
  int joints = 0;
  Camera camera;
  double noise_sigma_px = 0;

  double at(int f, int j, int a) const {
    return values[(static_cast<std::size_t>(f) * joints + j) * 2 + a];
  }
  double& at(int f, int j, int a) {
    return values[(static_cast<std::size_t>(f) * joints + j) * 2 + a];
  }
};

PerformanceScript generate_script(std::uint64_t seed, double duration_s, ScriptStyle style);
PoseSequence render_pose(const PerformanceScript& script);
Keypoints2D project_2d(const PoseSequence& pose, const Camera& camera, double noise_sigma_px,
                       std::uint64_t seed, double occlusion_rate = 0.0);
AudioClip synth_audio(const PerformanceScript& script, int sample_rate);

// Scripted bow-speed magnitude at time t (mm/s), for causality checks.
double script_bow_speed(const PerformanceScript& script, double t);

struct SampleMeta {
  double fps = 30;
  int frames = 0;
  int joints = 8;
  std::vector<std::string> joint_names;
  std::uint64_t seed = 0;
  int participant = 0;
  std::string split;
  int audio_sample_rate = 16000;
  std::vector<double> bow_change_times;
  std::vector<double> vibrato_event_times;
  std::vector<VibratoSegment> vibrato_segments;
  std::vector<Stroke> strokes;
};

struct Sample {
  SampleMeta meta;
  PoseSequence pose;
  Keypoints2D kp2d;
  AudioClip audio;
};

// On-disk layout: meta.json, pose3d.bin, kp2d.bin, audio.wav. The .bin files
// carry a "VPSE" magic, u32 frame and joint counts, then little-endian
// float32 payload.
void write_sample(const std::string& dir, const Sample& sample);
Sample read_sample(const std::string& dir);

}  // namespace viopose
