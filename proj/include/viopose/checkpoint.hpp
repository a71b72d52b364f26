#pragma once

#include <memory>
#include <string>

#include "viopose/config.hpp"
#include "viopose/optim.hpp"

namespace viopose {

// Checkpoint directory layout:
//   manifest.json  - run config + ordered parameter name/shape table
//   params.bin     - concatenated little-endian float64 in manifest order
//   optim.bin      - Adam moments + step (optional, for resume)
void save_checkpoint(const std::string& dir, const RunConfig& cfg, const ParamStore& params,
                     const AdamState* adam = nullptr, int epoch = 0, double best_val = 0);

struct Checkpoint {
  RunConfig config;
  std::unique_ptr<VioPoseModel> model;
  AdamState adam;
  bool has_adam = false;
  int epoch = 0;
  double best_val = 0;
};

Checkpoint load_checkpoint(const std::string& dir);

}  // namespace viopose
