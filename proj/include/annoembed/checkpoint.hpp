#pragma once

#include <filesystem>

#include "annoembed/model.hpp"
#include "json.hpp"

namespace annoembed {

// A checkpoint is a directory:
//   manifest.json  configs, registries, vocabulary, annotation index, and a
//                  shape index {name, rows, cols, offset} into params.bin
//   params.bin     every parameter as raw little-endian float64, row-major,
//                  concatenated in store order (offsets count doubles)
void save_checkpoint(const ModelCheckpoint& model, const std::filesystem::path& dir);
ModelCheckpoint load_checkpoint(const std::filesystem::path& dir);

nlohmann::ordered_json to_json(const EncoderConfig& c);
EncoderConfig encoder_config_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

}  // namespace annoembed
