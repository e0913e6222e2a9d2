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
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "minima/commands.hpp"
#include "minima/config.hpp"
#include "minima/errors.hpp"

namespace {

using nlohmann::json;

int report_error(const std::string& kind, const std::string& message, int code) {
  json doc = {{"schema_version", minima::kSchemaVersion}, {"kind", "error"}, {"error", kind}, {"message", message}};
  std::cout << doc.dump(2) << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"minima: tensor-network compression pipeline"};
  app.require_subcommand(0, 1);
  bool version = false;
  app.add_flag("--version", version, "Print artifact and schema versions");

  std::string config_path;
  std::optional<double> target_ratio;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  for (const char* name : {"synth", "analyze", "plan", "compress", "heal", "eval", "specdec"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("--target-ratio", target_ratio, "Parameter budget as a fraction of dense");
    sub->add_option("--seed", seed, "Seed for this stage");
    sub->add_option("--out", out, "Primary output path");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("UsageError", e.what(), 2);
  }

  if (version) {
    std::cout << json{{"artifact_version", minima::kArtifactVersion}, {"schema_version", minima::kSchemaVersion}}.dump()
              << '\n';
    return 0;
  }
  if (app.get_subcommands().empty()) return report_error("UsageError", "a command is required", 2);

  try {
    const minima::Stage stage = minima::parse_stage(app.get_subcommands().front()->get_name());
    minima::RunConfig config = config_path.empty() ? minima::RunConfig{} : minima::load_config(config_path);
    minima::Overrides o;
    o.target_ratio = target_ratio;
    o.seed = seed;
    if (out) o.out = *out;
    config = minima::apply_overrides(config, stage, o);
    json written = json::array();
    for (const auto& p : minima::run_stage(stage, config)) written.push_back(p.string());
    std::cout << json{{"command", minima::stage_name(stage)}, {"written", written}}.dump(2) << '\n';
    return 0;
  } catch (const minima::InfeasibleBudgetError& e) {
    json doc = {{"schema_version", minima::kSchemaVersion},
                {"kind", "error"},
                {"error", e.kind()},
                {"message", e.what()},
                {"best_ratio", e.best_ratio()}};
    std::cout << doc.dump(2) << '\n';
    return 1;
  } catch (const minima::UsageError& e) {
    return report_error(e.kind(), e.what(), 2);
  } catch (const minima::Error& e) {
    return report_error(e.kind(), e.what(), 1);
  } catch (const std::exception& e) {
    return report_error("InternalError", e.what(), 1);
  }
}
