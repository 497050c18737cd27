/*
 * Copyright 2026 The kgcascade Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <unistd.h>

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "kgc/pipeline/config.hpp"
#include "kgc/pipeline/report.hpp"
#include "kgc/pipeline/stages.hpp"

namespace {

namespace kp = kgc::pipeline;

struct Options {
  std::string config;
  std::string stage_dir = "stages";
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool deterministic = false;
};

kp::StageContext make_context(const Options& o) {
  if (o.config.empty()) throw kgc::Error("--config is required");
  kp::ConfigOverrides ov;
  ov.env = kp::environment_overrides(environ);
  if (o.seed_set) ov.seed = o.seed;
  ov.deterministic = o.deterministic;
  kp::StageContext ctx;
  ctx.config = kp::validate_config(o.config, ov);
  ctx.stage_dir = o.stage_dir;
  ctx.log = &std::clog;
  return ctx;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Retrieve-then-rerank link prediction over a knowledge graph."};
  app.name("kgc");
  app.require_subcommand(1, 1);
  app.fallthrough();

  Options o;
  app.add_option("--config", o.config, "pipeline config (JSON)");
  app.add_option("--stage-dir", o.stage_dir, "directory for stage artifacts")
      ->capture_default_str();
  auto* seed = app.add_option("--seed", o.seed, "overrides the config seed");
  app.add_flag("--deterministic", o.deterministic, "single-threaded, reproducible run");

  for (auto s : kp::kStages) {
    app.add_subcommand(std::string(kp::stage_name(s)), "run the " +
                                                           std::string(kp::stage_name(s)) +
                                                           " stage");
  }
  app.add_subcommand("run-all", "run every stage in order");
  app.add_subcommand("report", "print the tables of a finished run");

  CLI11_PARSE(app, argc, argv);
  o.seed_set = seed->count() > 0;

  try {
    const auto name = app.get_subcommands().front()->get_name();
    if (name == "report") {
      std::cout << kp::emit_report(o.stage_dir);
      return 0;
    }
    auto ctx = make_context(o);
    if (name == "run-all") {
      kp::run_all(ctx);
      std::cout << kp::emit_report(o.stage_dir);
    } else {
      kp::run_stage(ctx, kp::parse_stage(name));
    }
  } catch (const std::exception& e) {
    std::cerr << "kgc: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
