#include "viopose/checkpoint.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace viopose {

using nlohmann::json;

void save_checkpoint(const std::string& dir, const RunConfig& cfg, const ParamStore& params,
                     const AdamState* adam, int epoch, double best_val) {
  std::filesystem::create_directories(dir);

  json manifest;
  manifest["config"] = json::parse(cfg.to_json());
  manifest["epoch"] = epoch;
  manifest["best_val"] = best_val;
  json plist = json::array();
  for (const auto& e : params.entries()) {
    plist.push_back({{"name", e.name}, {"shape", e.value.shape()}, {"trainable", e.trainable}});
  }
  manifest["params"] = plist;
  {
    std::ofstream os(dir + "/manifest.json");
    if (!os) throw std::runtime_error("checkpoint: cannot open " + dir + "/manifest.json");
    os << manifest.dump(2) << "\n";
  }
  {
    std::ofstream os(dir + "/params.bin", std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot open " + dir + "/params.bin");
    for (const auto& e : params.entries()) {
      const auto d = e.value.data();
      os.write(reinterpret_cast<const char*>(d.data()),
               static_cast<std::streamsize>(d.size() * sizeof(double)));
    }
    if (!os) throw std::runtime_error("checkpoint: write failed: " + dir + "/params.bin");
  }
  if (adam) {
    std::ofstream os(dir + "/optim.bin", std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot open " + dir + "/optim.bin");
    const std::int64_t step = adam->step;
    os.write(reinterpret_cast<const char*>(&step), sizeof(step));
    for (const auto& e : params.entries()) {
      if (!e.trainable) continue;
      const auto write_vec = [&](const std::vector<double>& v) {
        std::vector<double> buf = v;
        buf.resize(static_cast<std::size_t>(e.value.numel()), 0.0);
        os.write(reinterpret_cast<const char*>(buf.data()),
                 static_cast<std::streamsize>(buf.size() * sizeof(double)));
      };
      auto mi = adam->m.find(e.name);
      auto vi = adam->v.find(e.name);
      write_vec(mi != adam->m.end() ? mi->second : std::vector<double>());
      write_vec(vi != adam->v.end() ? vi->second : std::vector<double>());
    }
  }
}

Checkpoint load_checkpoint(const std::string& dir) {
  std::ifstream is(dir + "/manifest.json");
  if (!is) throw std::runtime_error("checkpoint: missing " + dir + "/manifest.json");
  json manifest = json::parse(is);

  Checkpoint ckpt;
  ckpt.config = RunConfig::from_json(manifest.at("config").dump());
  ckpt.epoch = manifest.value("epoch", 0);
  ckpt.best_val = manifest.value("best_val", 0.0);
  ckpt.model = std::make_unique<VioPoseModel>(ckpt.config.model, ckpt.config.seed);

  std::ifstream ps(dir + "/params.bin", std::ios::binary);
  if (!ps) throw std::runtime_error("checkpoint: missing " + dir + "/params.bin");
  const auto& plist = manifest.at("params");
  auto& entries = ckpt.model->params().entries();
  if (plist.size() != entries.size()) {
    throw std::runtime_error("checkpoint: manifest lists " + std::to_string(plist.size()) +
                             " parameters but the model has " + std::to_string(entries.size()));
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const std::string name = plist[i].at("name").get<std::string>();
    const auto shape = plist[i].at("shape").get<Shape>();
    if (name != entries[i].name || shape != entries[i].value.shape()) {
      throw std::runtime_error("checkpoint: parameter mismatch at '" + name + "' (model has '" +
                               entries[i].name + "' " + shape_str(entries[i].value.shape()) + ")");
    }
    auto d = entries[i].value.mutable_data();
    ps.read(reinterpret_cast<char*>(d.data()), static_cast<std::streamsize>(d.size() * sizeof(double)));
    if (static_cast<std::size_t>(ps.gcount()) != d.size() * sizeof(double)) {
      throw std::runtime_error("checkpoint: params.bin truncated at '" + name + "'");
    }
  }

  std::ifstream os(dir + "/optim.bin", std::ios::binary);
  if (os) {
    std::int64_t step = 0;
    os.read(reinterpret_cast<char*>(&step), sizeof(step));
    ckpt.adam.step = step;
    for (const auto& e : entries) {
      if (!e.trainable) continue;
      std::vector<double> m(static_cast<std::size_t>(e.value.numel()));
      std::vector<double> v(m.size());
      os.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
      os.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
      if (!os) throw std::runtime_error("checkpoint: optim.bin truncated");
      ckpt.adam.m[e.name] = std::move(m);
      ckpt.adam.v[e.name] = std::move(v);
    }
    ckpt.has_adam = true;
  }
  return ckpt;
}

}  // namespace viopose
