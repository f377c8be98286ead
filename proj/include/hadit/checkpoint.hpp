#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "hadit/model.hpp"

namespace hadit {

// Versioned binary container: config, training step, all model tensors
// (including adapters), and optionally the optimizer moments. Tensor payloads
// are raw doubles, so save/load round-trips exactly.
struct CheckpointData {
    ModelConfig config;
    bool adapted = false;
    uint64_t step = 0;
    std::map<std::string, Mat> tensors;
    bool has_optimizer = false;
    uint64_t opt_t = 0;
    std::map<std::string, Mat> opt_m, opt_v;
};

void save_checkpoint(const std::string& path, const DitModel& model, uint64_t step,
                     const AdamOpt* opt = nullptr);

CheckpointData read_checkpoint(const std::string& path);

DitModel model_from_checkpoint(const CheckpointData& data);

}  // namespace hadit
