#pragma once

#include "deepsets/set_layers.hpp"
#include "deepsets/tasks.hpp"

#include <json.hpp>

#include <filesystem>
#include <variant>

namespace deepsets {

using SetModel = std::variant<InvariantModel, EquivariantStack>;

std::vector<Tensor*> parameters(SetModel& model);
std::vector<const Tensor*> parameters(const SetModel& model);
std::size_t parameter_count(const SetModel& model);
ModelGraph forward(const SetModel& model, Tape& tape, const SetBatch& batch);

/// {"format", "task", "architecture", "parameters"}: parameters are flat
/// row-major arrays in parameters() order, written with round-trip precision.
nlohmann::json model_to_json(const SetModel& model, TaskKind task);

struct LoadedModel {
  SetModel model;
  TaskKind task = TaskKind::kPopulation;
};

LoadedModel model_from_json(const nlohmann::json& doc);
void save_model(const std::filesystem::path& path, const SetModel& model, TaskKind task);
LoadedModel load_model(const std::filesystem::path& path);

}  // namespace deepsets
