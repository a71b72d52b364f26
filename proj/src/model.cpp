#include "viopose/model.hpp"

#include <cmath>
#include <stdexcept>

namespace viopose {

std::string to_string(HierarchyMode m) {
  switch (m) {
    case HierarchyMode::Cascade: return "cascade";
    case HierarchyMode::NoCascade: return "no_cascade";
    case HierarchyMode::Concat: return "concat";
    case HierarchyMode::Conditioning: return "conditioning";
  }
  return "cascade";
}

std::string to_string(MixingMode m) {
  switch (m) {
    case MixingMode::Full: return "full";
    case MixingMode::NoInt: return "no_int";
    case MixingMode::NoDiff: return "no_diff";
    case MixingMode::None: return "none";
  }
  return "full";
}

HierarchyMode hierarchy_mode_from_string(const std::string& s) {
  if (s == "cascade") return HierarchyMode::Cascade;
  if (s == "no_cascade") return HierarchyMode::NoCascade;
  if (s == "concat") return HierarchyMode::Concat;
  if (s == "conditioning") return HierarchyMode::Conditioning;
  throw std::invalid_argument("unknown hierarchy mode: " + s);
}

MixingMode mixing_mode_from_string(const std::string& s) {
  if (s == "full") return MixingMode::Full;
  if (s == "no_int") return MixingMode::NoInt;
  if (s == "no_diff") return MixingMode::NoDiff;
  // "parallel" drops Eqs. of both directions, same as disabling the module.
  if (s == "none" || s == "parallel") return MixingMode::None;
  throw std::invalid_argument("unknown mixing mode: " + s);
}

void ModelConfig::validate() const {
  if (dim % heads != 0) {
    throw std::invalid_argument("model config: dim " + std::to_string(dim) +
                                " not divisible by heads " + std::to_string(heads));
  }
  if (frames < 3) throw std::invalid_argument("model config: frames must be >= 3");
  if (joints < 1) throw std::invalid_argument("model config: joints must be >= 1");
  if (pose_blocks < 1 || hierarchy_blocks < 1) {
    throw std::invalid_argument("model config: block counts must be >= 1");
  }
  if (audio_input != "features") {
    throw std::invalid_argument("model config: audio_input variant '" + audio_input +
                                "' is a config stub and is not built");
  }
}

Tensor integrate_time(const Tensor& x, double dt, const Tensor& anchor) {
  if (dt <= 0) throw std::invalid_argument("integrate_time: dt must be positive");
  if (x.shape() != anchor.shape()) {
    throw std::invalid_argument("integrate_time: shape mismatch: " + shape_str(x.shape()) +
                                " vs " + shape_str(anchor.shape()));
  }
  Tensor c = cumsum_time(x, 1);
  Tensor anchored = sub(c, slice_axis(c, 1, 0, 1));       // frame 0 becomes zero
  return add(slice_axis(anchor, 1, 0, 1), scale(anchored, dt));
}

Tensor differentiate_time(const Tensor& x, double dt) { return diff_time(x, 1, dt); }

DynamicsTriple bidirectional_mix(const Tensor& pose_init, const Tensor& vel_init,
                                 const Tensor& acc_init, double dt, MixingMode mode) {
  DynamicsTriple out;
  out.pose_init = pose_init;
  out.vel_init = vel_init;
  out.acc_init = acc_init;

  if (mode == MixingMode::None) {
    out.pose = pose_init;
    out.vel = vel_init;
    out.acc = acc_init;
    return out;
  }

  Tensor vel_avg, pose_hat;
  if (mode == MixingMode::NoInt) {
    vel_avg = vel_init;
    pose_hat = pose_init;
  } else {
    vel_avg = scale(add(vel_init, integrate_time(acc_init, dt, vel_init)), 0.5);
    pose_hat = scale(add(pose_init, integrate_time(vel_avg, dt, pose_init)), 0.5);
  }

  if (mode == MixingMode::NoDiff) {
    out.pose = pose_hat;
    out.vel = vel_avg;
    out.acc = acc_init;
    return out;
  }
  Tensor vel_hat = scale(add(vel_avg, differentiate_time(pose_hat, dt)), 0.5);
  Tensor acc_hat = scale(add(acc_init, differentiate_time(vel_hat, dt)), 0.5);
  out.pose = pose_hat;
  out.vel = vel_hat;
  out.acc = acc_hat;
  return out;
}

VioPoseModel::VioPoseModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(Rng::derive(seed, 0x90de1));
  const int D = config_.dim;
  const int f = config_.frames;
  const int J = config_.joints;

  pose_embed_ = Linear::create(params_, "pose.embed", J * 2, D, rng);
  pose_pos_ = params_.add_param("pose.pos_embed", normal_init({f, D}, 0.02, rng));
  for (int n = 0; n < config_.pose_blocks; ++n) {
    pose_blocks_.push_back(TransformerBlock::create(params_, "pose.block" + std::to_string(n), D,
                                                    config_.heads, config_.ffn_dim, rng));
  }

  if (config_.use_audio) {
    const int chans[4] = {35, 64, 32, 16};
    for (int i = 0; i < 3; ++i) {
      audio_convs_.push_back(Conv1dLayer::create(params_, "audio.conv" + std::to_string(i),
                                                 chans[i], chans[i + 1], 3, 1, rng));
    }
    audio_lift_ = Linear::create(params_, "audio.lift", 16, D, rng);
    audio_pos_ = params_.add_param("audio.pos_embed", normal_init({f, D}, 0.02, rng));
    for (int n = 0; n < config_.hierarchy_blocks; ++n) {
      audio_blocks_.push_back(TransformerBlock::create(
          params_, "audio.block" + std::to_string(n), D, config_.heads, config_.ffn_dim, rng));
    }
    bottleneck_ = Linear::create(params_, "fuse.bottleneck", 2 * D, D, rng);
    p2a_head_ = Linear::create(params_, "audio.p2a_head", D, J * 3, rng);
  } else {
    for (int n = 0; n < config_.hierarchy_blocks; ++n) {
      no_audio_latents_.push_back(params_.add_param("audio.const_latent" + std::to_string(n),
                                                    normal_init({D}, 0.02, rng)));
    }
    bottleneck_ = Linear::create(params_, "fuse.bottleneck", D, D, rng);
  }

  for (int n = 0; n < config_.hierarchy_blocks; ++n) {
    hier_blocks_.push_back(TransformerBlock::create(params_, "hier.block" + std::to_string(n), D,
                                                    config_.heads, config_.ffn_dim, rng));
    std::vector<BatchNormBT> norms;
    std::vector<Linear> concats;
    for (int level = 1; level <= 3; ++level) {
      norms.push_back(BatchNormBT::create(
          params_, "hier.norm" + std::to_string(n) + ".l" + std::to_string(level), D));
      if (config_.hierarchy_mode == HierarchyMode::Concat) {
        concats.push_back(Linear::create(
            params_, "hier.concat" + std::to_string(n) + ".l" + std::to_string(level), 2 * D, D,
            rng));
      }
    }
    hier_norms_.push_back(std::move(norms));
    hier_concats_.push_back(std::move(concats));
  }

  head_pose_ = Linear::create(params_, "head.pose", D, J * 3, rng);
  head_vel_ = Linear::create(params_, "head.vel", D, J * 3, rng);
  head_acc_ = Linear::create(params_, "head.acc", D, J * 3, rng);
}

Tensor VioPoseModel::embed_pose(const Tensor& kp2d) const {
  const int J = config_.joints, f = config_.frames;
  if (kp2d.rank() != 4 || kp2d.dim(1) != f || kp2d.dim(2) != J || kp2d.dim(3) != 2) {
    throw std::invalid_argument("embed_pose: expected (b," + std::to_string(f) + "," +
                                std::to_string(J) + ",2), got " + shape_str(kp2d.shape()));
  }
  const int b = kp2d.dim(0);
  Tensor tokens = reshape(kp2d, {b, f, J * 2});
  Tensor x = add(pose_embed_.forward(tokens), pose_pos_);
  for (const auto& blk : pose_blocks_) x = blk.forward(x);
  return x;
}

std::vector<Tensor> VioPoseModel::encode_audio(const Tensor& features) const {
  if (!config_.use_audio) {
    throw std::runtime_error("encode_audio: model built without the audio path");
  }
  if (features.rank() != 3 || features.dim(2) != 35) {
    throw std::invalid_argument("encode_audio: expected (b,F,35), got " +
                                shape_str(features.shape()));
  }
  const int b = features.dim(0), F = features.dim(1);
  if (F != config_.audio_frames) {
    throw std::invalid_argument("encode_audio: audio frame count " + std::to_string(F) +
                                " does not match config F=" + std::to_string(config_.audio_frames));
  }
  if (F < config_.frames) {
    throw std::invalid_argument("encode_audio: cannot resample F=" + std::to_string(F) +
                                " audio frames down to f=" + std::to_string(config_.frames));
  }

  Tensor x = features;
  if (config_.audio_feature_norm) {
    // Input conditioning only; features are constants on the tape.
    std::vector<double> normed(features.data().begin(), features.data().end());
    for (int bi = 0; bi < b; ++bi) {
      for (int c = 0; c < 35; ++c) {
        double mu = 0;
        for (int t = 0; t < F; ++t) mu += normed[(static_cast<std::size_t>(bi) * F + t) * 35 + c];
        mu /= F;
        double var = 0;
        for (int t = 0; t < F; ++t) {
          const double d = normed[(static_cast<std::size_t>(bi) * F + t) * 35 + c] - mu;
          var += d * d;
        }
        var /= F;
        const double inv = 1.0 / (std::sqrt(var) + 1e-6);
        for (int t = 0; t < F; ++t) {
          auto& v = normed[(static_cast<std::size_t>(bi) * F + t) * 35 + c];
          v = (v - mu) * inv;
        }
      }
    }
    x = Tensor::from_data(features.shape(), std::move(normed));
  }

  x = transpose(x, 1, 2);  // (b,35,F)
  for (const auto& conv : audio_convs_) x = relu(conv.forward(x));
  x = transpose(x, 1, 2);  // (b,F,16)
  x = resample_linear_time(x, 1, config_.frames);
  x = add(audio_lift_.forward(x), audio_pos_);

  std::vector<Tensor> latents;
  for (const auto& blk : audio_blocks_) {
    x = blk.forward(x);
    latents.push_back(x);
  }
  return latents;
}

std::vector<Tensor> VioPoseModel::constant_audio_latents(int batch) const {
  std::vector<Tensor> latents;
  Tensor zero = Tensor::zeros({batch, config_.frames, config_.dim});
  for (const Tensor& latent : no_audio_latents_) latents.push_back(add(zero, latent));
  return latents;
}

Tensor VioPoseModel::fuse(const Tensor& e_pose, const Tensor& e_audio_final) const {
  if (config_.use_audio) {
    if (e_pose.dim(1) != e_audio_final.dim(1)) {
      throw std::invalid_argument("fuse: frame mismatch: " + shape_str(e_pose.shape()) + " vs " +
                                  shape_str(e_audio_final.shape()));
    }
    return relu(bottleneck_.forward(concat({e_pose, e_audio_final}, 2)));
  }
  return relu(bottleneck_.forward(e_pose));
}

std::array<Tensor, 3> VioPoseModel::hierarchy_forward(const Tensor& e_m,
                                                      const std::vector<Tensor>& e_audio,
                                                      BatchNormMode bn_mode) const {
  if (static_cast<int>(e_audio.size()) != config_.hierarchy_blocks) {
    throw std::invalid_argument("hierarchy: expected " + std::to_string(config_.hierarchy_blocks) +
                                " audio latents, got " + std::to_string(e_audio.size()));
  }
  const int b = e_m.dim(0), f = e_m.dim(1), J = config_.joints;

  std::array<Tensor, 3> h = {e_m, e_m, e_m};  // levels 1..3 at n=0
  for (int n = 0; n < config_.hierarchy_blocks; ++n) {
    const TransformerBlock& blk = hier_blocks_[n];
    std::array<Tensor, 3> next;
    Tensor above = e_audio[n];  // h_4^(n)
    for (int level = 3; level >= 1; --level) {
      const BatchNormBT& norm = hier_norms_[n][level - 1];
      Tensor updated;
      switch (config_.hierarchy_mode) {
        case HierarchyMode::Cascade:
          updated = norm.forward(add(blk.forward(h[level - 1]), above), bn_mode);
          break;
        case HierarchyMode::NoCascade:
          updated = norm.forward(blk.forward(h[level - 1]), bn_mode);
          break;
        case HierarchyMode::Concat:
          updated = norm.forward(
              hier_concats_[n][level - 1].forward(concat({blk.forward(h[level - 1]), above}, 2)),
              bn_mode);
          break;
        case HierarchyMode::Conditioning:
          updated = norm.forward(blk.forward_cross(h[level - 1], above), bn_mode);
          break;
      }
      next[level - 1] = updated;
      above = updated;
    }
    h = next;
  }

  auto head = [&](const Linear& lin, const Tensor& latent, double out_scale) {
    return scale(reshape(lin.forward(latent), {b, f, J, 3}), out_scale);
  };
  return {head(head_pose_, h[0], config_.out_scale_pose),
          head(head_vel_, h[1], config_.out_scale_vel),
          head(head_acc_, h[2], config_.out_scale_acc)};
}

Tensor VioPoseModel::audio_pose_forward(const Tensor& e_audio_final) const {
  if (!config_.use_audio) {
    throw std::runtime_error("audio_pose_forward: model built without the audio path");
  }
  const int b = e_audio_final.dim(0), f = e_audio_final.dim(1);
  return scale(reshape(p2a_head_.forward(e_audio_final), {b, f, config_.joints, 3}),
               config_.out_scale_pose);
}

DynamicsTriple VioPoseModel::forward(const Tensor& kp2d, const Tensor& audio_features,
                                     BatchNormMode bn_mode) const {
  return forward(kp2d, audio_features, bn_mode, nullptr);
}

DynamicsTriple VioPoseModel::forward(const Tensor& kp2d, const Tensor& audio_features,
                                     BatchNormMode bn_mode, Tensor* e_audio_final_out) const {
  auto stage = [](const char* name, auto&& fn) {
    try {
      return fn();
    } catch (const std::exception& e) {
      throw std::runtime_error(std::string(name) + ": " + e.what());
    }
  };

  Tensor e_pose = stage("embed_pose", [&] { return embed_pose(kp2d); });
  std::vector<Tensor> e_audio = stage("encode_audio", [&] {
    return config_.use_audio ? encode_audio(audio_features)
                             : constant_audio_latents(kp2d.dim(0));
  });
  if (e_audio_final_out) *e_audio_final_out = e_audio.back();
  Tensor e_m = stage("fuse", [&] { return fuse(e_pose, e_audio.back()); });
  auto inits = stage("hierarchy_forward", [&] { return hierarchy_forward(e_m, e_audio, bn_mode); });
  return stage("bidirectional_mix", [&] {
    return bidirectional_mix(inits[0], inits[1], inits[2], 1.0, config_.mixing_mode);
  });
}

}  // namespace viopose
