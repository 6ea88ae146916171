#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "resdecomp/model.hpp"

namespace resdecomp {

inline constexpr std::string_view kWeightsMagic = "TDW1";

// Optional training metadata stored in a checkpoint header.
struct CheckpointMeta {
    std::int64_t step = 0;
    double train_loss = 0.0;
};

nlohmann::json config_to_json(const ModelConfig& config);
ModelConfig config_from_json(const nlohmann::json& j);

std::string encode_weights(const TransformerWeights& weights,
                           const std::optional<CheckpointMeta>& meta = std::nullopt);

struct DecodedWeights {
    TransformerWeights weights;
    std::optional<CheckpointMeta> meta;
};

// Validates every shape invariant; throws FormatError / DimensionError.
DecodedWeights decode_weights(std::string_view bytes);

void save_weights(const std::filesystem::path& path, const TransformerWeights& weights,
                  const std::optional<CheckpointMeta>& meta = std::nullopt);
DecodedWeights load_weights(const std::filesystem::path& path);

}  // namespace resdecomp
