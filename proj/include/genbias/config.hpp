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

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "genbias/benchmark.hpp"
#include "genbias/corpus.hpp"
#include "genbias/error.hpp"
#include "genbias/spurious.hpp"
#include "genbias/synth_filter.hpp"

namespace genbias {

namespace fs = std::filesystem;

struct EmbeddingPaths {
  fs::path manifest;
  fs::path blob;
};

struct AnnotationSource {
  Split split = Split::val;
  fs::path captions;
  std::optional<fs::path> instances;
};

/// An evaluation dataset carved out of the labeled corpus.
struct DatasetSpec {
  std::string tag;
  std::optional<Split> split;
  bool single_person = false;
  bool balanced = false;
  std::string source = "real";  // or "contrast_set"
};

struct ModelConfig {
  std::string tag;
  ModelKind kind = ModelKind::random;
  std::optional<EmbeddingPaths> caption_embeddings;
  std::optional<EmbeddingPaths> image_embeddings;
};

/// A row of the verification table. source is "real" (gender-labeled real
/// images), "synthetic" (every edit) or "contrast_set" (accepted pairs).
struct VerifyVariant {
  std::string tag;
  std::string source = "real";
  std::optional<Split> split;
  bool single_person = true;
};

struct VerifyConfig {
  std::optional<EmbeddingPaths> prompt_embeddings;
  std::optional<EmbeddingPaths> image_embeddings;
  std::optional<EmbeddingPaths> caption_embeddings;
  std::optional<fs::path> distractors;  // one image id per line
  std::vector<std::size_t> ks{1, 5, 10};
  std::vector<VerifyVariant> variants;
};

struct KMeansConfig {
  std::size_t m = 20;
  std::uint64_t seed = 0;
  std::size_t max_iters = 300;
  std::size_t top_terms = 10;
  std::optional<Split> split;
  std::map<std::size_t, std::string> names;
};

struct ProbeConfig {
  ProbeHyper hyper;
  Split train_split = Split::train;
  Split eval_split = Split::val;
  bool permute_labels = false;
  std::uint64_t permutation_seed = 0;
};

struct RunConfig {
  fs::path out_dir = "out";
  std::optional<fs::path> lexicon;
  std::vector<AnnotationSource> annotations;
  std::optional<fs::path> corpus;
  std::vector<std::uint64_t> seeds{0};
  unsigned threads = 0;

  std::vector<DatasetSpec> datasets;
  std::vector<ModelConfig> models;
  std::vector<std::size_t> bias_ks{5, 10};
  std::vector<std::size_t> maxskew_ks{25, 100};

  std::optional<std::string> filter_preset{"clip-default"};
  FilterConfig filter = FilterConfig::preset("clip-default");
  std::optional<EmbeddingPaths> crop_embeddings;
  std::optional<fs::path> decisions;
  std::optional<fs::path> contrast_set;
  std::uint64_t contrast_seed = 0;

  VerifyConfig verify;
  std::optional<EmbeddingPaths> caption_embeddings;
  KMeansConfig kmeans;
  ProbeConfig probe;

  std::optional<std::string> caption;  // neutralize: single caption
  std::optional<std::string> to;       // neutralize: "neutral", "male" or "female"
};

namespace detail {

using nlohmann::json;

class ObjectReader {
 public:
  ObjectReader(const json& j, std::string where, const fs::path& base)
      : j_(j), where_(std::move(where)), base_(base) {
    if (!j.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  ~ObjectReader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError(where_ + ": unknown key '" + key + "'");
    }
  }

  const json* get(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() || it->is_null() ? nullptr : &*it;
  }

  template <class T>
  void read(const std::string& key, T& out) {
    if (const json* v = get(key)) {
      try {
        out = v->get<T>();
      } catch (const json::exception&) {
        throw ConfigError(where_ + "." + key + ": wrong type");
      }
    }
  }

  template <class T>
  void read(const std::string& key, std::optional<T>& out) {
    if (get(key)) {
      T v{};
      read(key, v);
      out = std::move(v);
    }
  }

  void read_path(const std::string& key, fs::path& out) {
    if (const json* v = get(key)) {
      if (!v->is_string()) throw ConfigError(where_ + "." + key + ": expected a path string");
      out = resolve(v->get<std::string>());
    }
  }

  void read_path(const std::string& key, std::optional<fs::path>& out) {
    if (get(key)) {
      fs::path p;
      read_path(key, p);
      out = std::move(p);
    }
  }

  void read_split(const std::string& key, Split& out) {
    std::string s;
    read(key, s);
    if (!s.empty()) out = parse_split_checked(s, key);
  }

  void read_split(const std::string& key, std::optional<Split>& out) {
    std::optional<std::string> s;
    read(key, s);
    if (s) out = parse_split_checked(*s, key);
  }

  void read_embeddings(const std::string& key, std::optional<EmbeddingPaths>& out) {
    if (const json* v = get(key)) {
      ObjectReader r(*v, where_ + "." + key, base_);
      EmbeddingPaths p;
      r.read_path("manifest", p.manifest);
      r.read_path("blob", p.blob);
      if (p.manifest.empty() || p.blob.empty()) {
        throw ConfigError(where_ + "." + key + ": needs 'manifest' and 'blob'");
      }
      out = std::move(p);
    }
  }

  const std::string& where() const { return where_; }
  const fs::path& base() const { return base_; }

 private:
  fs::path resolve(const std::string& p) const {
    fs::path path(p);
    return path.is_absolute() || base_.empty() ? path : base_ / path;
  }

  Split parse_split_checked(const std::string& s, const std::string& key) const {
    try {
      return parse_split(s);
    } catch (const Error&) {
      throw ConfigError(where_ + "." + key + ": unknown split '" + s + "'");
    }
  }

  const json& j_;
  std::string where_;
  fs::path base_;
  std::set<std::string> seen_;
};

inline json embeddings_json(const std::optional<EmbeddingPaths>& p) {
  if (!p) return nullptr;
  return {{"manifest", p->manifest.string()}, {"blob", p->blob.string()}};
}

inline json path_json(const std::optional<fs::path>& p) {
  return p ? json(p->string()) : json(nullptr);
}

inline json split_json(const std::optional<Split>& s) {
  return s ? json(std::string(to_string(*s))) : json(nullptr);
}

}  // namespace detail

/// Parses a run configuration; relative paths resolve against \p base_dir.
/// Unknown keys are rejected.
inline RunConfig parse_config(const nlohmann::json& j, const fs::path& base_dir = {}) {
  RunConfig c;
  detail::ObjectReader r(j, "config", base_dir);
  r.read_path("out_dir", c.out_dir);
  r.read_path("lexicon", c.lexicon);
  r.read_path("corpus", c.corpus);
  r.read("seeds", c.seeds);
  r.read("threads", c.threads);
  r.read("bias_ks", c.bias_ks);
  r.read("maxskew_ks", c.maxskew_ks);
  r.read_path("decisions", c.decisions);
  r.read_path("contrast_set", c.contrast_set);
  r.read("contrast_seed", c.contrast_seed);
  r.read_embeddings("crop_embeddings", c.crop_embeddings);
  r.read_embeddings("caption_embeddings", c.caption_embeddings);
  r.read("caption", c.caption);
  r.read("to", c.to);

  if (const auto* a = r.get("annotations")) {
    if (!a->is_array()) throw ConfigError("config.annotations: expected an array");
    for (std::size_t i = 0; i < a->size(); ++i) {
      detail::ObjectReader ar((*a)[i], "config.annotations[" + std::to_string(i) + "]", base_dir);
      AnnotationSource src;
      ar.read_split("split", src.split);
      ar.read_path("captions", src.captions);
      ar.read_path("instances", src.instances);
      if (src.captions.empty()) throw ConfigError(ar.where() + ": 'captions' is required");
      c.annotations.push_back(std::move(src));
    }
  }
  if (const auto* a = r.get("datasets")) {
    if (!a->is_array()) throw ConfigError("config.datasets: expected an array");
    for (std::size_t i = 0; i < a->size(); ++i) {
      detail::ObjectReader dr((*a)[i], "config.datasets[" + std::to_string(i) + "]", base_dir);
      DatasetSpec d;
      dr.read("tag", d.tag);
      dr.read_split("split", d.split);
      dr.read("single_person", d.single_person);
      dr.read("balanced", d.balanced);
      dr.read("source", d.source);
      if (d.source != "real" && d.source != "contrast_set") {
        throw ConfigError(dr.where() + ": source must be real or contrast_set");
      }
      if (d.tag.empty()) throw ConfigError(dr.where() + ": 'tag' is required");
      c.datasets.push_back(std::move(d));
    }
  }
  if (const auto* a = r.get("models")) {
    if (!a->is_array()) throw ConfigError("config.models: expected an array");
    for (std::size_t i = 0; i < a->size(); ++i) {
      detail::ObjectReader mr((*a)[i], "config.models[" + std::to_string(i) + "]", base_dir);
      ModelConfig m;
      std::string kind = "random";
      mr.read("tag", m.tag);
      mr.read("kind", kind);
      m.kind = parse_model_kind(kind);
      mr.read_embeddings("caption_embeddings", m.caption_embeddings);
      mr.read_embeddings("image_embeddings", m.image_embeddings);
      if (m.tag.empty()) m.tag = kind;
      c.models.push_back(std::move(m));
    }
  }
  if (const auto* f = r.get("filter")) {
    detail::ObjectReader fr(*f, "config.filter", base_dir);
    std::optional<std::string> preset;
    fr.read("preset", preset);
    c.filter_preset = preset;
    c.filter = preset ? FilterConfig::preset(*preset) : FilterConfig{};
    fr.read("k_neighbors", c.filter.k_neighbors);
    fr.read("tau_real", c.filter.tau_real);
    fr.read("tau_gender", c.filter.tau_gender);
    fr.read("k_gender", c.filter.k_gender);
    if (c.filter != (preset ? FilterConfig::preset(*preset) : FilterConfig{})) {
      c.filter_preset.reset();  // explicit values override the preset
    }
  }
  if (const auto* v = r.get("verify")) {
    detail::ObjectReader vr(*v, "config.verify", base_dir);
    vr.read_embeddings("prompt_embeddings", c.verify.prompt_embeddings);
    vr.read_embeddings("image_embeddings", c.verify.image_embeddings);
    vr.read_embeddings("caption_embeddings", c.verify.caption_embeddings);
    vr.read_path("distractors", c.verify.distractors);
    vr.read("ks", c.verify.ks);
    if (const auto* a = vr.get("variants")) {
      if (!a->is_array()) throw ConfigError("config.verify.variants: expected an array");
      for (std::size_t i = 0; i < a->size(); ++i) {
        detail::ObjectReader xr((*a)[i], "config.verify.variants[" + std::to_string(i) + "]",
                                base_dir);
        VerifyVariant var;
        xr.read("tag", var.tag);
        xr.read("source", var.source);
        xr.read_split("split", var.split);
        xr.read("single_person", var.single_person);
        if (var.source != "real" && var.source != "synthetic" && var.source != "contrast_set") {
          throw ConfigError(xr.where() + ": source must be real, synthetic or contrast_set");
        }
        if (var.tag.empty()) var.tag = var.source;
        c.verify.variants.push_back(std::move(var));
      }
    }
  }
  if (const auto* k = r.get("kmeans")) {
    detail::ObjectReader kr(*k, "config.kmeans", base_dir);
    kr.read("m", c.kmeans.m);
    kr.read("seed", c.kmeans.seed);
    kr.read("max_iters", c.kmeans.max_iters);
    kr.read("top_terms", c.kmeans.top_terms);
    kr.read_split("split", c.kmeans.split);
    std::map<std::string, std::string> names;
    kr.read("names", names);
    for (const auto& [idx, name] : names) {
      try {
        c.kmeans.names[std::stoul(idx)] = name;
      } catch (const std::exception&) {
        throw ConfigError("config.kmeans.names: key '" + idx + "' is not a cluster index");
      }
    }
  }
  if (const auto* p = r.get("probe")) {
    detail::ObjectReader pr(*p, "config.probe", base_dir);
    pr.read("epochs", c.probe.hyper.epochs);
    pr.read("learning_rate", c.probe.hyper.learning_rate);
    pr.read("l2", c.probe.hyper.l2);
    pr.read_split("train_split", c.probe.train_split);
    pr.read_split("eval_split", c.probe.eval_split);
    pr.read("permute_labels", c.probe.permute_labels);
    pr.read("permutation_seed", c.probe.permutation_seed);
  }
  return c;
}

inline RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_config(j, path.parent_path());
}

/// Fully resolved configuration with defaults expanded.
inline nlohmann::json config_to_json(const RunConfig& c) {
  using detail::embeddings_json;
  using detail::path_json;
  using detail::split_json;
  using nlohmann::json;
  json j;
  j["out_dir"] = c.out_dir.string();
  j["lexicon"] = path_json(c.lexicon);
  auto ann = json::array();
  for (const auto& a : c.annotations) {
    ann.push_back({{"split", to_string(a.split)},
                   {"captions", a.captions.string()},
                   {"instances", path_json(a.instances)}});
  }
  j["annotations"] = ann;
  j["corpus"] = path_json(c.corpus);
  j["seeds"] = c.seeds;
  j["threads"] = c.threads;
  auto ds = json::array();
  for (const auto& d : c.datasets) {
    ds.push_back({{"tag", d.tag},
                  {"split", split_json(d.split)},
                  {"single_person", d.single_person},
                  {"balanced", d.balanced},
                  {"source", d.source}});
  }
  j["datasets"] = ds;
  auto ms = json::array();
  for (const auto& m : c.models) {
    ms.push_back({{"tag", m.tag},
                  {"kind", to_string(m.kind)},
                  {"caption_embeddings", embeddings_json(m.caption_embeddings)},
                  {"image_embeddings", embeddings_json(m.image_embeddings)}});
  }
  j["models"] = ms;
  j["bias_ks"] = c.bias_ks;
  j["maxskew_ks"] = c.maxskew_ks;
  j["filter"] = {{"preset", c.filter_preset ? json(*c.filter_preset) : json(nullptr)},
                 {"k_neighbors", c.filter.k_neighbors},
                 {"tau_real", c.filter.tau_real},
                 {"tau_gender", c.filter.tau_gender},
                 {"k_gender", c.filter.gender_neighbors()}};
  j["crop_embeddings"] = embeddings_json(c.crop_embeddings);
  j["decisions"] = path_json(c.decisions);
  j["contrast_set"] = path_json(c.contrast_set);
  j["contrast_seed"] = c.contrast_seed;
  auto vars = json::array();
  for (const auto& v : c.verify.variants) {
    vars.push_back({{"tag", v.tag},
                    {"source", v.source},
                    {"split", split_json(v.split)},
                    {"single_person", v.single_person}});
  }
  j["verify"] = {{"prompt_embeddings", embeddings_json(c.verify.prompt_embeddings)},
                 {"image_embeddings", embeddings_json(c.verify.image_embeddings)},
                 {"caption_embeddings", embeddings_json(c.verify.caption_embeddings)},
                 {"distractors", path_json(c.verify.distractors)},
                 {"ks", c.verify.ks},
                 {"variants", vars}};
  j["caption_embeddings"] = embeddings_json(c.caption_embeddings);
  json names = json::object();
  for (const auto& [i, n] : c.kmeans.names) names[std::to_string(i)] = n;
  j["kmeans"] = {{"m", c.kmeans.m},
                 {"seed", c.kmeans.seed},
                 {"max_iters", c.kmeans.max_iters},
                 {"top_terms", c.kmeans.top_terms},
                 {"split", split_json(c.kmeans.split)},
                 {"names", names}};
  j["probe"] = {{"epochs", c.probe.hyper.epochs},
                {"learning_rate", c.probe.hyper.learning_rate},
                {"l2", c.probe.hyper.l2},
                {"train_split", to_string(c.probe.train_split)},
                {"eval_split", to_string(c.probe.eval_split)},
                {"permute_labels", c.probe.permute_labels},
                {"permutation_seed", c.probe.permutation_seed}};
  j["caption"] = c.caption ? json(*c.caption) : json(nullptr);
  j["to"] = c.to ? json(*c.to) : json(nullptr);
  return j;
}

/// Checks the fields every command relies on.
inline void validate_config(const RunConfig& c) {
  if (c.seeds.empty()) throw ConfigError("seeds must not be empty");
  for (auto k : c.bias_ks) {
    if (k == 0) throw ConfigError("bias_ks must be positive");
  }
  for (auto k : c.maxskew_ks) {
    if (k == 0) throw ConfigError("maxskew_ks must be positive");
  }
  for (auto k : c.verify.ks) {
    if (k == 0) throw ConfigError("verify.ks must be positive");
  }
  c.filter.validate();
  std::set<std::string> tags;
  for (const auto& d : c.datasets) {
    if (!tags.insert(d.tag).second) throw ConfigError("duplicate dataset tag '" + d.tag + "'");
  }
  tags.clear();
  for (const auto& m : c.models) {
    if (!tags.insert(m.tag).second) throw ConfigError("duplicate model tag '" + m.tag + "'");
    if (m.kind == ModelKind::embedding && (!m.caption_embeddings || !m.image_embeddings)) {
      throw ConfigError("embedding model '" + m.tag +
                        "' needs caption_embeddings and image_embeddings");
    }
  }
}

/// Throws unless \p p exists.
inline void require_path(const std::optional<fs::path>& p, std::string_view what) {
  if (!p) throw ConfigError(std::string(what) + " is not configured");
  if (!fs::exists(*p)) throw ConfigError(std::string(what) + " not found: " + p->string());
}

inline void require_embeddings(const std::optional<EmbeddingPaths>& p, std::string_view what) {
  if (!p) throw ConfigError(std::string(what) + " is not configured");
  if (!fs::exists(p->manifest)) {
    throw ConfigError(std::string(what) + " manifest not found: " + p->manifest.string());
  }
  if (!fs::exists(p->blob)) {
    throw ConfigError(std::string(what) + " blob not found: " + p->blob.string());
  }
}

}  // namespace genbias
