#pragma once

#include <memory>
#include <string>

#include <json.hpp>

#include "ppg/models.hpp"
#include "ppg/train.hpp"

namespace ppg {

// Checkpoint = JSON manifest (config, seed, metric snapshot, ordered parameter
// index, blob checksum) + flat little-endian f64 parameter blob.
void save_checkpoint(const std::string& manifest_path, const std::string& blob_path,
                     Classifier& model, const ModelSpec& mspec,
                     const nlohmann::ordered_json& extra);

struct Checkpoint {
    ModelSpec mspec;
    std::shared_ptr<Classifier> model;
    nlohmann::ordered_json manifest;
};

Checkpoint load_checkpoint(const std::string& manifest_path);

}  // namespace ppg
