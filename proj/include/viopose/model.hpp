#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "viopose/nn.hpp"
#include "viopose/ops.hpp"

namespace viopose {

enum class HierarchyMode { Cascade, NoCascade, Concat, Conditioning };
enum class MixingMode { Full, NoInt, NoDiff, None };

std::string to_string(HierarchyMode m);
std::string to_string(MixingMode m);
HierarchyMode hierarchy_mode_from_string(const std::string& s);
MixingMode mixing_mode_from_string(const std::string& s);

struct ModelConfig {
  int frames = 90;           // f
  int audio_frames = 300;    // F
  int feature_rate = 100;    // SR
  double fps = 30;
  int joints = 8;
  int dim = 256;             // hidden D
  int pose_blocks = 3;       // N_P
  int hierarchy_blocks = 3;  // N_H, also the audio encoder depth
  int heads = 8;
  int ffn_dim = 1024;
  bool use_audio = true;
  std::string audio_input = "features";  // "spectrogram" reserved, not built
  bool audio_feature_norm = true;        // per-window column standardization
  HierarchyMode hierarchy_mode = HierarchyMode::Cascade;
  MixingMode mixing_mode = MixingMode::Full;
  // Heads emit unit-scale values; these map them to mm / mm-per-frame.
  double out_scale_pose = 500;
  double out_scale_vel = 25;
  double out_scale_acc = 10;

  void validate() const;
};

struct DynamicsTriple {
  Tensor pose, vel, acc;                    // final estimates, (b,f,J,3)
  Tensor pose_init, vel_init, acc_init;     // hierarchy head outputs
};

// Rectangle-rule integral along the frame axis, anchored so frame 0 equals
// the anchor's frame 0.
Tensor integrate_time(const Tensor& x, double dt, const Tensor& anchor);
Tensor differentiate_time(const Tensor& x, double dt);

DynamicsTriple bidirectional_mix(const Tensor& pose_init, const Tensor& vel_init,
                                 const Tensor& acc_init, double dt, MixingMode mode);

class VioPoseModel {
 public:
  VioPoseModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // kp2d: (b,f,J,2) in [-1,1] image coordinates.
  Tensor embed_pose(const Tensor& kp2d) const;
  // features: (b,F,35); returns one latent per encoder block, each (b,f,D).
  std::vector<Tensor> encode_audio(const Tensor& features) const;
  // Constant learned latents standing in for audio in the no-audio variant.
  std::vector<Tensor> constant_audio_latents(int batch) const;
  Tensor fuse(const Tensor& e_pose, const Tensor& e_audio_final) const;
  // Returns {pose_init, vel_init, acc_init}, each (b,f,J,3).
  std::array<Tensor, 3> hierarchy_forward(const Tensor& e_m, const std::vector<Tensor>& e_audio,
                                          BatchNormMode bn_mode) const;
  // Auxiliary audio-only pose prediction (P2A), (b,f,J,3).
  Tensor audio_pose_forward(const Tensor& e_audio_final) const;

  DynamicsTriple forward(const Tensor& kp2d, const Tensor& audio_features,
                         BatchNormMode bn_mode) const;
  // Keeps the final audio latent for the P2A loss without a second pass.
  DynamicsTriple forward(const Tensor& kp2d, const Tensor& audio_features, BatchNormMode bn_mode,
                         Tensor* e_audio_final_out) const;

 private:
  ModelConfig config_;
  ParamStore params_;

  Linear pose_embed_;
  Tensor pose_pos_;
  std::vector<TransformerBlock> pose_blocks_;

  std::vector<Conv1dLayer> audio_convs_;
  Linear audio_lift_;
  Tensor audio_pos_;
  std::vector<TransformerBlock> audio_blocks_;
  std::vector<Tensor> no_audio_latents_;  // per block, (D)

  Linear bottleneck_;
  std::vector<TransformerBlock> hier_blocks_;         // one per stack n
  std::vector<std::vector<BatchNormBT>> hier_norms_;  // [n][level]
  std::vector<std::vector<Linear>> hier_concats_;     // Concat mode only
  Linear head_pose_, head_vel_, head_acc_;
  Linear p2a_head_;
};

}  // namespace viopose
