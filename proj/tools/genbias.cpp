/*
 * Copyright 2026 The genbias Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// genbias command-line driver.

#include <cstdint>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "genbias/commands.hpp"
#include "genbias/config.hpp"
#include "genbias/parallel.hpp"

namespace {

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto dash = item.find('-');
    try {
      if (dash != std::string::npos && dash > 0) {
        const auto lo = std::stoull(item.substr(0, dash));
        const auto hi = std::stoull(item.substr(dash + 1));
        if (hi < lo) throw genbias::ConfigError("empty seed range '" + item + "'");
        for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
      } else {
        seeds.push_back(std::stoull(item));
      }
    } catch (const std::logic_error&) {
      throw genbias::ConfigError("bad --seed-list entry '" + item + "'");
    }
  }
  if (seeds.empty()) throw genbias::ConfigError("--seed-list is empty");
  return seeds;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gender-bias auditing toolkit for image-text retrieval datasets"};
  app.require_subcommand(1);

  std::string config_path, out_dir, seed_list;
  std::optional<unsigned> threads;
  app.add_option("--config", config_path, "Run configuration (JSON)")->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "Output directory (overrides out_dir)");
  app.add_option("--seed-list", seed_list, "Comma-separated seeds or ranges, e.g. 0-19");
  app.add_option("--threads", threads, "Worker threads (0 = all cores)");

  auto* label = app.add_subcommand("label", "Ingest COCO captions and assign gender labels");
  auto* neutralize = app.add_subcommand("neutralize", "Neutralize or gender-swap captions");
  std::optional<std::string> caption, to;
  neutralize->add_option("--caption", caption, "Rewrite a single caption and print it");
  neutralize->add_option("--to", to, "neutral (default), male or female");
  auto* eval_bias = app.add_subcommand("eval-bias", "Bias@K / MaxSkew@K benchmark");
  auto* filter = app.add_subcommand("filter", "KNN filter over synthetic edits");
  auto* build = app.add_subcommand("build-contrast-set", "Contrast set from a decisions file");
  auto* verify = app.add_subcommand("verify", "Zero-shot gender accuracy and recall");
  auto* cluster = app.add_subcommand("cluster-report", "K-means clusters of caption embeddings");
  auto* probe = app.add_subcommand("probe", "Text-only gender probe on neutralized captions");

  CLI11_PARSE(app, argc, argv);

  try {
    genbias::RunConfig config;
    if (!config_path.empty()) config = genbias::load_config(config_path);
    if (!out_dir.empty()) config.out_dir = out_dir;
    if (!seed_list.empty()) config.seeds = parse_seed_list(seed_list);
    if (threads) config.threads = *threads;
    if (caption) config.caption = caption;
    if (to) config.to = to;
    genbias::set_default_threads(config.threads);

    auto& log = std::cout;
    if (label->parsed()) genbias::cmd_label(config, log);
    else if (neutralize->parsed()) genbias::cmd_neutralize(config, log);
    else if (eval_bias->parsed()) genbias::cmd_eval_bias(config, log);
    else if (filter->parsed()) genbias::cmd_filter(config, log);
    else if (build->parsed()) genbias::cmd_build_contrast_set(config, log);
    else if (verify->parsed()) genbias::cmd_verify(config, log);
    else if (cluster->parsed()) genbias::cmd_cluster_report(config, log);
    else if (probe->parsed()) genbias::cmd_probe(config, log);
  } catch (const std::exception& e) {
    std::cerr << "genbias: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
