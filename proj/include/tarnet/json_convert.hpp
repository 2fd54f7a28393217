#pragma once

#include <json.hpp>

#include "tarnet/dgp.hpp"
#include "tarnet/ipm.hpp"
#include "tarnet/network.hpp"
#include "tarnet/standardize.hpp"
#include "tarnet/train.hpp"
#include "tarnet/transfer.hpp"

// JSON mappings for configuration records. Readers reject unknown keys and
// fill absent ones with defaults; they throw ConfigError on bad values.
namespace tarnet {

void to_json(nlohmann::json& j, const DgpParams& p);
void from_json(const nlohmann::json& j, DgpParams& p);

// input_dim is optional on read: zero means "take it from the data".
void to_json(nlohmann::json& j, const NetworkSpec& s);
void from_json(const nlohmann::json& j, NetworkSpec& s);

void to_json(nlohmann::json& j, const IpmConfig& c);
void from_json(const nlohmann::json& j, IpmConfig& c);

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

void to_json(nlohmann::json& j, const TransferConfig& c);
void from_json(const nlohmann::json& j, TransferConfig& c);

void to_json(nlohmann::json& j, const StandardizeTransform& t);
void from_json(const nlohmann::json& j, StandardizeTransform& t);

void to_json(nlohmann::json& j, const AlignmentTerms& t);
nlohmann::json report_to_json(const TransferReport& r);

}  // namespace tarnet
