#pragma once

#include <string>
#include <vector>

#include "childgrad/io.hpp"
#include "childgrad/training.hpp"

namespace childgrad {

// Declarative run configuration, one JSON object with sections mirroring RunConfig:
//   { "model": {...}, "data": {...}, "pretrained": {...}, "method": {...},
//     "optim": {...}, "training": {...}, "seed": 1 }
// Unknown keys are rejected.
RunConfig run_config_from_json(const Json& j);
Json run_config_to_json(const RunConfig& config);

// Applies "a.b.c=value" overrides. The value is parsed as JSON when possible and
// kept as a string otherwise.
void apply_overrides(Json& doc, const std::vector<std::string>& overrides);

// Hash of the canonical config with the seed removed.
std::string config_hash(const RunConfig& config);

Json report_to_json(const RunReport& report, bool include_timing = false);
RunReport report_from_json(const Json& j);

Json aggregate_to_json(const Aggregate& agg);

// metric,mean,max,std,count
std::string aggregate_csv(const Aggregate& agg);

// One row per method, one "mean (max)" column per metric.
std::string mean_max_table(const std::vector<Aggregate>& rows, const std::vector<std::string>& metrics);

}  // namespace childgrad
