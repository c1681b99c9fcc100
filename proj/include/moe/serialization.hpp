#pragma once

#include <string>

#include <json.hpp>

#include "moe/estimation.hpp"
#include "moe/experiment.hpp"
#include "moe/identifiability.hpp"
#include "moe/model.hpp"
#include "moe/voronoi.hpp"

namespace moe {

using Json = nlohmann::json;

Json to_json(const ExpertSpec& spec);
ExpertSpec expert_spec_from_json(const Json& j);

Json to_json(const MixingMeasure& g);
MixingMeasure measure_from_json(const Json& j);

Json to_json(const FitResult& r);
Json to_json(const LossReport& r, const std::string& kind);
Json to_json(const ProbeReport& r);
Json summary_json(const SweepResult& result);

// Dataset CSV (header x_1..x_d,y) plus a JSON sidecar holding the full
// synthesis configuration including the generating measure.
void write_dataset(const Dataset& data, const std::string& csv_path,
                   const std::string& json_path);
Dataset read_dataset(const std::string& csv_path, const std::string& json_path);

GatingKind gating_from_name(const std::string& name);
ScoreKind score_from_name(const std::string& name);
ExpertSpec expert_from_name(const std::string& name, int input_dim);
ProbeMode probe_mode_from_name(const std::string& name);

}  // namespace moe
