#pragma once

// JSON container shared by model and classifier checkpoints:
//   {"format": "stylealign-checkpoint", "version": 1, "kind": ...,
//    "config": {...}, "tensors": [{"name", "shape", "data"}, ...]}
// Doubles are written in shortest round-trip form, so parameters survive
// write -> read bit-exactly.

#include "stylealign/autodiff.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace stylealign {

struct Checkpoint {
    std::string kind;
    nlohmann::json config;
    ParameterSet params;
};

void write_checkpoint(const std::filesystem::path &path, const Checkpoint &ckpt);
auto read_checkpoint(const std::filesystem::path &path) -> Checkpoint;

auto checkpoint_to_json(const Checkpoint &ckpt) -> nlohmann::json;
auto checkpoint_from_json(const nlohmann::json &j) -> Checkpoint;

}    // namespace stylealign
