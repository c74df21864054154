#ifndef PLUMECAST_NEURAL_CHECKPOINT_HPP
#define PLUMECAST_NEURAL_CHECKPOINT_HPP

#include <filesystem>
#include <vector>

#include <json.hpp>

#include "plumecast/neural/unet.hpp"

namespace plumecast::neural {

// "LGC1", u32 header length, JSON header, then f32 little-endian tensors in
// the order listed by header["tensors"].
struct Checkpoint {
  ConvNetConfig config;
  nlohmann::json header;  // config, epoch, metrics, tensors, plus caller extras
  std::vector<StateEntry> state;
};

void save_checkpoint(const std::filesystem::path& path, UNet<float>& model, const nlohmann::json& extra);
Checkpoint read_checkpoint(const std::filesystem::path& path);
UNet<float> load_model(const std::filesystem::path& path, Checkpoint* info = nullptr);

}  // namespace plumecast::neural

#endif
