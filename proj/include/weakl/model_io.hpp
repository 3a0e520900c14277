#pragma once

#include <optional>
#include <string>

#include "weakl/hierarchy.hpp"
#include "weakl/shape_models.hpp"

namespace weakl {

/// Model files are versioned JSON documents; loaders reject unknown format
/// names and versions. Family strings: additive, additive-group, online,
/// combination, hier-bu, hier-g, hier-t.
inline constexpr int kModelFormatVersion = 1;

void save_model(const std::string& path, const AdditiveModel& model);
void save_model(const std::string& path, const GroupAdditiveModel& model);
void save_model(const std::string& path, const OnlineModel& model);
void save_model(const std::string& path, const CombinationModel& model);
void save_model(const std::string& path, const HierModel& model);

struct LoadedModel {
  std::string family;
  std::optional<AdditiveModel> additive;
  std::optional<GroupAdditiveModel> group;
  std::optional<OnlineModel> online;
  std::optional<CombinationModel> combination;
  std::optional<HierModel> hier;
};

LoadedModel load_model(const std::string& path);

}  // namespace weakl
