// Copyright 2026 The Minima Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "minima/config.hpp"
#include "minima/container.hpp"
#include "minima/pipeline.hpp"
#include "minima/planner.hpp"
#include "minima/sensitivity.hpp"
#include "minima/spec_decode.hpp"
#include "minima/structured.hpp"

namespace minima {

// Every document carries "schema_version", "kind" and "artifact_version".
nlohmann::json document_header(const std::string& kind);
// Throws FormatError unless the document has the expected kind and schema.
void check_document(const nlohmann::json& doc, const std::string& kind);

nlohmann::json sensitivity_to_json(const Analysis& a, const RunConfig& config);
std::vector<PatchAnalysis> sensitivity_from_json(const nlohmann::json& doc);
std::string sensitivity_csv(const Analysis& a);

nlohmann::json plan_to_json(const CompressionPlan& plan, const RunConfig& config);
CompressionPlan plan_from_json(const nlohmann::json& doc);
std::string plan_csv(const CompressionPlan& plan);

// Compressed models are MNMA files with one f64 tensor per stored core or
// factor, named "<matrix>/<patch id>/core" and "<matrix>/<patch id>/f<k>";
// the metadata document describes matrices, patches and the healing log.
TensorFile compressed_to_file(const CompressedModel& cm);
CompressedModel compressed_from_file(const TensorFile& file);

nlohmann::json heal_log_to_json(const std::vector<HealRecord>& log);
std::vector<HealRecord> heal_log_from_json(const nlohmann::json& doc);
std::string heal_log_csv(const std::vector<HealRecord>& log);

nlohmann::json quality_to_json(const QualityReport& q);
std::string quality_csv(const QualityReport& q);
nlohmann::json flops_to_json(const FlopReport& f);
nlohmann::json specdec_stats_to_json(const SpecDecodeStats& s);

}  // namespace minima
