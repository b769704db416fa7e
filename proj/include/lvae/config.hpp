#pragma once

#include <string>

#include "lvae/corpus.hpp"
#include "lvae/training.hpp"

namespace lvae {

/// JSON object with exactly the TrainConfig field names. Missing keys keep
/// their defaults; unknown keys and wrong types throw ConfigInvalid.
TrainConfig train_config_from_json(const std::string& text);
std::string train_config_to_json(const TrainConfig& cfg, int indent = 2);
TrainConfig load_train_config(const std::string& path);

/// {"base": {...TrainConfig...}, "ranges": {"lr": {"log_uniform": [lo, hi]},
///  "d_h": {"int_uniform": [lo, hi]}, "beta": {"uniform": [lo, hi]}}}
SearchSpace search_space_from_json(const std::string& text);
SearchSpace load_search_space(const std::string& path);

SyntheticSpec synthetic_spec_from_json(const std::string& text);

std::string read_text_file(const std::string& path);

}  // namespace lvae
