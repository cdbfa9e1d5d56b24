#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "flair/errors.hpp"

namespace flair::train {

// Training-strategy toggles. filter and monthly_average shape the satellite
// input and therefore also apply at prediction time; the rest are
// train-only.
struct Strategies {
  bool filter = false;
  bool monthly_average = false;
  bool augment = false;
  bool modality_dropout = false;
  bool metadata = false;

  // Parses a strategies list ("filter", "monthly_average", "augment",
  // "modality_dropout", "metadata"). Unknown names are collected into errs.
  static Strategies from_names(const std::vector<std::string>& names,
                               std::vector<std::string>& errs);
};

inline Strategies Strategies::from_names(const std::vector<std::string>& names,
                                         std::vector<std::string>& errs) {
  Strategies s;
  for (const auto& n : names) {
    if (n == "filter") s.filter = true;
    else if (n == "monthly_average") s.monthly_average = true;
    else if (n == "augment") s.augment = true;
    else if (n == "modality_dropout") s.modality_dropout = true;
    else if (n == "metadata") s.metadata = true;
    else errs.push_back("unknown strategy '" + n + "'");
  }
  return s;
}

inline nlohmann::json strategies_to_json(const Strategies& s) {
  return {{"filter", s.filter},
          {"monthly_average", s.monthly_average},
          {"augment", s.augment},
          {"modality_dropout", s.modality_dropout},
          {"metadata", s.metadata}};
}

inline Strategies strategies_from_json(const nlohmann::json& j) {
  Strategies s;
  try {
    s.filter = j.at("filter").get<bool>();
    s.monthly_average = j.at("monthly_average").get<bool>();
    s.augment = j.at("augment").get<bool>();
    s.modality_dropout = j.at("modality_dropout").get<bool>();
    s.metadata = j.at("metadata").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw format_error(std::string("strategies: ") + e.what());
  }
  return s;
}

}  // namespace flair::train
