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

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "genbias/benchmark.hpp"
#include "genbias/caption.hpp"
#include "genbias/config.hpp"
#include "genbias/contrast_set.hpp"
#include "genbias/corpus.hpp"
#include "genbias/embedding_store.hpp"
#include "genbias/error.hpp"
#include "genbias/metrics.hpp"
#include "genbias/random.hpp"
#include "genbias/retrieval.hpp"
#include "genbias/spurious.hpp"
#include "genbias/synth_filter.hpp"

namespace genbias {

/// Output files of one command, written to a staging directory and moved
/// into place only by commit(). An uncommitted stage deletes its files.
class OutputStage {
 public:
  OutputStage(fs::path out_dir, std::string command)
      : out_dir_(std::move(out_dir)), command_(std::move(command)) {
    staging_ = out_dir_ / (".staging-" + command_);
    std::error_code ec;
    fs::remove_all(staging_, ec);
    fs::create_directories(staging_, ec);
    if (ec) throw Error("cannot create output directory " + staging_.string() + ": " + ec.message());
  }

  OutputStage(const OutputStage&) = delete;
  OutputStage& operator=(const OutputStage&) = delete;

  ~OutputStage() {
    std::error_code ec;
    fs::remove_all(staging_, ec);
  }

  /// Opens \p name for writing inside the stage.
  std::ofstream open(const std::string& name) {
    names_.push_back(name);
    std::ofstream out(staging_ / name, std::ios::binary);
    if (!out) throw Error("cannot write " + (staging_ / name).string());
    return out;
  }

  void write(const std::string& name, const std::string& text) {
    auto out = open(name);
    out << text;
    if (!out) throw Error("write failed: " + (staging_ / name).string());
  }

  void write_json(const std::string& name, const nlohmann::json& j) {
    write(name, j.dump(2) + "\n");
  }

  /// Moves every staged file into the output directory.
  std::vector<fs::path> commit() {
    std::vector<fs::path> written;
    for (const auto& name : names_) {
      const auto dst = out_dir_ / name;
      fs::rename(staging_ / name, dst);
      written.push_back(dst);
    }
    names_.clear();
    return written;
  }

 private:
  fs::path out_dir_;
  std::string command_;
  fs::path staging_;
  std::vector<std::string> names_;
};

struct CommandResult {
  std::vector<fs::path> files;
};

namespace detail {

inline GenderLexicon lexicon_of(const RunConfig& c) {
  if (!c.lexicon) return GenderLexicon::builtin();
  require_path(c.lexicon, "lexicon");
  return GenderLexicon::load(*c.lexicon);
}

inline Corpus corpus_of(const RunConfig& c) {
  require_path(c.corpus, "corpus");
  return load_corpus(*c.corpus, lexicon_of(c));
}

inline std::shared_ptr<const EmbeddingStore> store_of(const EmbeddingPaths& p,
                                                      bool normalize) {
  if (!fs::exists(p.manifest)) throw ConfigError("embedding manifest not found: " + p.manifest.string());
  auto store = load_embeddings(p.manifest, p.blob);
  if (normalize && !store.normalized()) store = l2_normalize(store);
  return std::make_shared<const EmbeddingStore>(std::move(store));
}

inline void echo_config(OutputStage& stage, const std::string& command, const RunConfig& c) {
  stage.write_json(command + ".config.json", config_to_json(c));
}

inline std::string fmt_opt(const std::optional<double>& v) {
  return v ? fmt::format("{}", *v) : std::string();
}

inline Gender record_gender(const ImageRecord& r) {
  return r.synthetic ? r.synthetic->target : r.gender_label;
}

/// Real records matching a dataset or variant filter.
inline Corpus real_subset(const Corpus& corpus, const std::optional<Split>& split,
                          bool single_person) {
  return corpus.subset([&](const ImageRecord& r) {
    if (r.synthetic) return false;
    if (split && r.split != *split) return false;
    return !single_person || r.person_box_count == 1;
  });
}

/// Edits named by a contrast set, labeled with their target gender.
inline Corpus contrast_subset(const Corpus& corpus, const ContrastSet& set) {
  Corpus out(corpus.shared_lexicon());
  for (const auto& p : set.pairs) {
    for (const auto* id : {&p.male_edit_id, &p.female_edit_id}) {
      const auto* r = corpus.find(*id);
      if (!r || !r->synthetic) {
        throw ArgumentError("contrast set names '" + *id + "', which is not a synthetic record");
      }
      auto copy = *r;
      copy.gender_label = r->synthetic->target;
      out.add(std::move(copy));
    }
  }
  return out;
}

inline std::vector<std::string> read_id_list(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open id list " + path.string());
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    ids.push_back(line);
  }
  return ids;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// label

struct LabelCounts {
  std::size_t male = 0, female = 0, undefined = 0;
};

inline std::map<Split, LabelCounts> count_labels(const Corpus& corpus) {
  std::map<Split, LabelCounts> out;
  for (const auto& r : corpus.records()) {
    if (r.synthetic) continue;
    auto& c = out[r.split];
    if (r.gender_label == Gender::male) ++c.male;
    else if (r.gender_label == Gender::female) ++c.female;
    else ++c.undefined;
  }
  return out;
}

/// Ingests annotations, labels every image and writes corpus.tsv plus
/// label_counts.{csv,json}.
inline CommandResult cmd_label(const RunConfig& c, std::ostream& log) {
  validate_config(c);
  if (c.annotations.empty()) throw ConfigError("no annotations configured");
  const auto lexicon = std::make_shared<const GenderLexicon>(detail::lexicon_of(c));
  Corpus corpus(lexicon);
  for (const auto& a : c.annotations) {
    require_path(a.captions, "caption annotations");
    if (a.instances) require_path(a.instances, "instance annotations");
    const auto part = assign_gender_labels(load_annotations(a.captions, a.instances, a.split, *lexicon));
    for (const auto& r : part.records()) corpus.add(r);
  }
  const auto counts = count_labels(corpus);

  OutputStage stage(c.out_dir, "label");
  {
    auto out = stage.open("corpus.tsv");
    write_corpus(out, corpus);
  }
  std::string csv = "split,male,female,undefined\n";
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [split, n] : counts) {
    csv += fmt::format("{},{},{},{}\n", to_string(split), n.male, n.female, n.undefined);
    j[std::string(to_string(split))] = {{"male", n.male}, {"female", n.female}, {"undefined", n.undefined}};
    log << fmt::format("{}: male={} female={} undefined={}\n", to_string(split), n.male,
                       n.female, n.undefined);
  }
  if (counts.empty()) log << "no images\n";
  stage.write("label_counts.csv", csv);
  stage.write_json("label_counts.json", j);
  detail::echo_config(stage, "label", c);
  return {stage.commit()};
}

// ---------------------------------------------------------------------------
// neutralize

/// Rewrites captions toward a gender ("male"/"female") or neutral. With a
/// single configured caption the result is printed; otherwise the corpus is
/// rewritten to neutralized_corpus.tsv (labels are kept).
inline CommandResult cmd_neutralize(const RunConfig& c, std::ostream& log) {
  validate_config(c);
  const std::string to = c.to.value_or("neutral");
  std::optional<Gender> target;
  if (to != "neutral") {
    target = parse_gender(to);
    if (!is_defined(*target)) throw ConfigError("--to must be neutral, male or female");
  }
  if (c.caption) {
    const auto lexicon = detail::lexicon_of(c);
    log << (target ? swap_caption_gender(*c.caption, *target, lexicon)
                   : neutralize_caption(*c.caption, lexicon))
        << '\n';
    return {};
  }
  const auto corpus = detail::corpus_of(c);
  Corpus out(corpus.shared_lexicon());
  for (auto r : corpus.records()) {
    for (auto& cap : r.captions) {
      cap = target ? swap_caption_gender(cap, *target, corpus.lexicon())
                   : neutralize_caption(cap, corpus.lexicon());
    }
    out.add(std::move(r));
  }
  OutputStage stage(c.out_dir, "neutralize");
  {
    auto f = stage.open("neutralized_corpus.tsv");
    write_corpus(f, out);
  }
  detail::echo_config(stage, "neutralize", c);
  log << fmt::format("rewrote {} records ({})\n", out.size(), to);
  return {stage.commit()};
}

// ---------------------------------------------------------------------------
// eval-bias

/// Table of "mean" or "mean±std" cells: one row per model, one column per
/// (dataset, metric, K).
inline std::string format_bias_table(std::span<const BiasReport> reports) {
  std::vector<std::string> models, datasets;
  std::set<MetricKey> keys;
  std::map<std::tuple<std::string, std::string, MetricKey>, MetricValue> cells;
  for (const auto& r : reports) {
    if (std::find(models.begin(), models.end(), r.model_tag) == models.end()) models.push_back(r.model_tag);
    if (std::find(datasets.begin(), datasets.end(), r.dataset_tag) == datasets.end()) {
      datasets.push_back(r.dataset_tag);
    }
    for (const auto& [k, v] : r.values) {
      keys.insert(k);
      cells[{r.model_tag, r.dataset_tag, k}] = v;
    }
  }
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header{"model"};
  for (const auto& d : datasets) {
    for (const auto& k : keys) header.push_back(fmt::format("{} {}@{}", d, k.metric, k.k));
  }
  rows.push_back(header);
  for (const auto& m : models) {
    std::vector<std::string> row{m};
    for (const auto& d : datasets) {
      for (const auto& k : keys) {
        auto it = cells.find({m, d, k});
        if (it == cells.end()) {
          row.emplace_back("-");
        } else if (it->second.n_seeds > 1) {
          row.push_back(fmt::format("{:.2f}±{:.2f}", it->second.mean, it->second.std));
        } else {
          row.push_back(fmt::format("{:.2f}", it->second.mean));
        }
      }
    }
    rows.push_back(std::move(row));
  }
  std::string out;
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "\t" : "") + row[i];
    out += '\n';
  }
  return out;
}

inline Corpus dataset_corpus(const Corpus& corpus, const DatasetSpec& d,
                             const std::optional<ContrastSet>& contrast) {
  if (d.source == "contrast_set") {
    if (!contrast) throw ConfigError("dataset '" + d.tag + "' needs a contrast_set file");
    return detail::contrast_subset(corpus, *contrast);
  }
  auto out = detail::real_subset(corpus, d.split, d.single_person);
  if (d.single_person) out = select_single_person_gendered(out);
  return out;
}

/// Runs every configured model on every dataset and writes
/// bias_report.{csv,json} and bias_table.txt.
inline CommandResult cmd_eval_bias(const RunConfig& c, std::ostream& log) {
  validate_config(c);
  const auto corpus = detail::corpus_of(c);
  std::vector<DatasetSpec> datasets = c.datasets;
  if (datasets.empty()) datasets.push_back({"all", std::nullopt, false, false, "real"});
  std::vector<ModelConfig> model_configs = c.models;
  if (model_configs.empty()) {
    model_configs.push_back({"random", ModelKind::random, {}, {}});
    model_configs.push_back({"tfidf", ModelKind::tfidf, {}, {}});
  }
  std::optional<ContrastSet> contrast;
  for (const auto& d : datasets) {
    if (d.source == "contrast_set" && !contrast) {
      require_path(c.contrast_set, "contrast_set");
      contrast = read_contrast_set(*c.contrast_set);
    }
  }
  std::vector<ModelSpec> models;
  for (const auto& m : model_configs) {
    ModelSpec spec{m.tag, m.kind, nullptr, nullptr};
    if (m.kind == ModelKind::embedding) {
      require_embeddings(m.caption_embeddings, "model '" + m.tag + "' caption embeddings");
      require_embeddings(m.image_embeddings, "model '" + m.tag + "' image embeddings");
      spec.caption_store = detail::store_of(*m.caption_embeddings, true);
      spec.image_store = detail::store_of(*m.image_embeddings, true);
    }
    models.push_back(std::move(spec));
  }
  const EvalSettings settings{c.bias_ks, c.maxskew_ks, c.seeds};

  std::vector<BiasReport> reports;
  for (const auto& d : datasets) {
    const auto data = dataset_corpus(corpus, d, contrast);
    for (const auto& m : models) {
      reports.push_back(evaluate_bias(m, data, d.tag, d.balanced, settings));
      log << fmt::format("evaluated {} on {} ({} images)\n", m.tag, d.tag, data.size());
    }
  }

  OutputStage stage(c.out_dir, "eval-bias");
  {
    auto out = stage.open("bias_report.csv");
    write_reports_csv(out, reports);
  }
  stage.write_json("bias_report.json", reports_to_json(reports));
  const auto table = format_bias_table(reports);
  stage.write("bias_table.txt", table);
  detail::echo_config(stage, "eval-bias", c);
  log << table;
  return {stage.commit()};
}

// ---------------------------------------------------------------------------
// filter / build-contrast-set

inline nlohmann::json contrast_summary(std::span<const FilterDecision> decisions,
                                       const ContrastSet& set) {
  std::size_t accepted = 0, male = 0, female = 0;
  for (const auto& d : decisions) {
    if (!d.accepted) continue;
    ++accepted;
    (d.target_gender == Gender::male ? male : female)++;
  }
  std::map<int, std::size_t> deciles;
  for (const auto& p : set.pairs) ++deciles[p_real_decile(p.mean_p_real)];
  nlohmann::json dec = nlohmann::json::object();
  for (const auto& [d, n] : deciles) dec[std::to_string(d)] = n;
  return {{"edits", decisions.size()},
          {"accepted", accepted},
          {"accepted_male", male},
          {"accepted_female", female},
          {"pairs", set.pairs.size()},
          {"images", set.image_count()},
          {"pairs_by_p_real_decile", dec}};
}

/// Scores every synthetic edit with the KNN filter and assembles the
/// contrast set: decisions.csv, contrast_set.tsv, filter_summary.json.
inline CommandResult cmd_filter(const RunConfig& c, std::ostream& log) {
  validate_config(c);
  const auto corpus = detail::corpus_of(c);
  require_embeddings(c.crop_embeddings, "crop_embeddings");
  const auto store = detail::store_of(*c.crop_embeddings, false);
  const auto decisions = filter_dataset(corpus, *store, c.filter);
  const auto set = assemble_contrast_set(corpus, decisions, c.contrast_seed);

  OutputStage stage(c.out_dir, "filter");
  {
    auto out = stage.open("decisions.csv");
    write_decisions_csv(out, decisions);
  }
  {
    auto out = stage.open("contrast_set.tsv");
    write_contrast_set(out, set);
  }
  auto summary = contrast_summary(decisions, set);
  summary["preset"] = c.filter_preset ? nlohmann::json(*c.filter_preset) : nlohmann::json();
  stage.write_json("filter_summary.json", summary);
  detail::echo_config(stage, "filter", c);
  log << fmt::format("accepted {} of {} edits; contrast set: {} pairs\n",
                     summary["accepted"].get<std::size_t>(), decisions.size(), set.pairs.size());
  return {stage.commit()};
}

/// Re-assembles a contrast set from an existing decisions file.
inline CommandResult cmd_build_contrast_set(const RunConfig& c, std::ostream& log) {
  validate_config(c);
  const auto corpus = detail::corpus_of(c);
  require_path(c.decisions, "decisions");
  std::ifstream in(*c.decisions);
  const auto decisions = read_decisions_csv(in, c.decisions->string());
  const auto set = assemble_contrast_set(corpus, decisions, c.contrast_seed);

  OutputStage stage(c.out_dir, "build-contrast-set");
  {
    auto out = stage.open("contrast_set.tsv");
    write_contrast_set(out, set);
  }
  stage.write_json("contrast_summary.json", contrast_summary(decisions, set));
  detail::echo_config(stage, "build-contrast-set", c);
  log << fmt::format("contrast set: {} pairs\n", set.pairs.size());
  return {stage.commit()};
}

// ---------------------------------------------------------------------------
// verify

struct VerifyRow {
  std::string dataset;
  std::size_t n_images = 0;                  // distinct base images
  std::optional<double> edits_per_image;     // synthetic variants only
  double zs_accuracy = 0;                    // fraction
  std::map<std::size_t, double> recall;      // K -> fraction
  std::size_t n_queries = 0;
};

/// Zero-shot gender accuracy against each target's label and caption-to-image
/// recall of the target against distractors plus the target itself.
inline VerifyRow verify_variant(const std::string& tag, const Corpus& targets,
                                const EmbeddingStore& image_store,
                                const EmbeddingStore& prompt_store,
                                const EmbeddingStore& caption_store,
                                std::span<const std::string> distractors,
                                std::span<const std::size_t> ks) {
  if (targets.empty()) throw ArgumentError("verification set '" + tag + "' is empty");
  if (ks.empty()) throw ConfigError("no recall K configured");
  VerifyRow row;
  row.dataset = tag;
  std::set<std::string> bases;
  std::size_t correct = 0, edits = 0;
  for (const auto& r : targets.records()) {
    if (!image_store.contains(r.id)) throw ArgumentError("no image vector for '" + r.id + "'");
    const Gender g = detail::record_gender(r);
    if (!is_defined(g)) throw ArgumentError("verification target '" + r.id + "' has no gender");
    if (zero_shot_gender(image_store, prompt_store, r.id) == g) ++correct;
    if (r.synthetic) {
      ++edits;
      bases.insert(r.synthetic->source_id);
    } else {
      bases.insert(r.id);
    }
  }
  row.n_images = bases.size();
  if (edits) row.edits_per_image = static_cast<double>(edits) / static_cast<double>(bases.size());
  row.zs_accuracy = static_cast<double>(correct) / static_cast<double>(targets.size());

  std::vector<std::size_t> distractor_rows;
  for (const auto& id : distractors) distractor_rows.push_back(image_store.row_of(id));
  std::sort(distractor_rows.begin(), distractor_rows.end());
  distractor_rows.erase(std::unique(distractor_rows.begin(), distractor_rows.end()),
                        distractor_rows.end());
  const std::size_t depth = *std::max_element(ks.begin(), ks.end());

  RetrievalRun run;
  run.model_tag = tag;
  run.order = ScoreOrder::ascending;
  std::vector<std::vector<std::size_t>> pools;
  for (const auto& r : targets.records()) {
    for (std::size_t j = 0; j < r.captions.size(); ++j) {
      const auto qid = caption_id(r.id, j);
      if (!caption_store.contains(qid)) throw ArgumentError("no caption vector for '" + qid + "'");
      run.queries.push_back({qid, r.id, detail::record_gender(r)});
    }
  }
  run.rankings.resize(run.queries.size());
  parallel_for(run.queries.size(), [&](std::size_t i) {
    std::vector<std::size_t> pool = distractor_rows;
    const auto target = image_store.row_of(run.queries[i].source_image_id);
    auto pos = std::lower_bound(pool.begin(), pool.end(), target);
    if (pos == pool.end() || *pos != target) pool.insert(pos, target);
    if (depth > pool.size()) {
      throw ConfigError(fmt::format("recall K={} exceeds the pool size {}", depth, pool.size()));
    }
    run.rankings[i] = embedding_retrieve(caption_store, image_store, run.queries[i].query_id,
                                         pool, depth);
  });
  for (auto k : ks) row.recall[k] = recall_at_k(run, k);
  row.n_queries = run.queries.size();
  return row;
}

inline void write_verify_csv(std::ostream& out, std::span<const VerifyRow> rows,
                             std::span<const std::size_t> ks) {
  out << "dataset,n_images,edits_per_image,zs_accuracy";
  for (auto k : ks) out << ",R@" << k;
  out << ",n_queries\n";
  for (const auto& r : rows) {
    out << fmt::format("{},{},{},{}", r.dataset, r.n_images, detail::fmt_opt(r.edits_per_image),
                       r.zs_accuracy);
    for (auto k : ks) out << fmt::format(",{}", r.recall.at(k));
    out << fmt::format(",{}\n", r.n_queries);
  }
}

/// Plain-text table: percentages with one decimal, "-" for real rows.
inline std::string format_verify_table(std::span<const VerifyRow> rows,
                                       std::span<const std::size_t> ks) {
  std::string out = "Dataset\tN\tEdits/img\tZS Acc";
  for (auto k : ks) out += fmt::format("\tR@{}", k);
  out += '\n';
  for (const auto& r : rows) {
    out += fmt::format("{}\t{}\t{}\t{:.1f}", r.dataset, r.n_images,
                       r.edits_per_image ? fmt::format("{:g}", *r.edits_per_image) : "-",
                       100.0 * r.zs_accuracy);
    for (auto k : ks) out += fmt::format("\t{:.1f}", 100.0 * r.recall.at(k));
    out += '\n';
  }
  return out;
}

inline CommandResult cmd_verify(const RunConfig& c, std::ostream& log) {
  validate_config(c);
  const auto corpus = detail::corpus_of(c);
  const auto& v = c.verify;
  require_embeddings(v.prompt_embeddings, "verify.prompt_embeddings");
  require_embeddings(v.image_embeddings, "verify.image_embeddings");
  require_embeddings(v.caption_embeddings, "verify.caption_embeddings");
  require_path(v.distractors, "verify.distractors");
  const auto prompts = detail::store_of(*v.prompt_embeddings, true);
  const auto images = detail::store_of(*v.image_embeddings, true);
  const auto captions = detail::store_of(*v.caption_embeddings, true);
  const auto distractors = detail::read_id_list(*v.distractors);
  if (v.variants.empty()) throw ConfigError("verify.variants is empty");

  std::vector<VerifyRow> rows;
  for (const auto& var : v.variants) {
    Corpus targets(corpus.shared_lexicon());
    if (var.source == "real") {
      targets = detail::real_subset(corpus, var.split, var.single_person)
                    .subset([](const ImageRecord& r) { return is_defined(r.gender_label); });
    } else if (var.source == "synthetic") {
      targets = corpus.subset([&](const ImageRecord& r) {
        return r.synthetic && (!var.split || r.split == *var.split);
      });
    } else {
      require_path(c.contrast_set, "contrast_set");
      targets = detail::contrast_subset(corpus, read_contrast_set(*c.contrast_set));
    }
    rows.push_back(verify_variant(var.tag, targets, *images, *prompts, *captions, distractors, v.ks));
  }

  OutputStage stage(c.out_dir, "verify");
  {
    auto out = stage.open("verify_table.csv");
    write_verify_csv(out, rows, v.ks);
  }
  auto j = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json recall = nlohmann::json::object();
    for (const auto& [k, x] : r.recall) recall[std::to_string(k)] = x;
    j.push_back({{"dataset", r.dataset},
                 {"n_images", r.n_images},
                 {"edits_per_image", r.edits_per_image ? nlohmann::json(*r.edits_per_image) : nlohmann::json()},
                 {"zs_accuracy", r.zs_accuracy},
                 {"recall", recall},
                 {"n_queries", r.n_queries}});
  }
  stage.write_json("verify_table.json", j);
  const auto table = format_verify_table(rows, v.ks);
  stage.write("verify_table.txt", table);
  detail::echo_config(stage, "verify", c);
  log << table;
  return {stage.commit()};
}

// ---------------------------------------------------------------------------
// cluster-report

/// Clusters gender-labeled real images by their mean caption embedding and
/// reports male over-representation and salient terms per cluster.
inline ClusterReport cluster_corpus(const Corpus& corpus, const EmbeddingStore& caption_store,
                                    const KMeansConfig& k) {
  std::map<std::string, std::vector<std::string>> caption_ids, texts;
  LabelMap labels;
  for (const auto& r : corpus.records()) {
    if (r.synthetic || !is_defined(r.gender_label)) continue;
    if (k.split && r.split != *k.split) continue;
    auto& ids = caption_ids[r.id];
    for (std::size_t j = 0; j < r.captions.size(); ++j) {
      const auto id = caption_id(r.id, j);
      if (!caption_store.contains(id)) throw ArgumentError("no caption vector for '" + id + "'");
      ids.push_back(id);
      texts[r.id].push_back(neutralize_caption(r.captions[j], corpus.lexicon()));
    }
    labels[r.id] = r.gender_label;
  }
  if (caption_ids.size() < k.m) {
    throw ArgumentError(fmt::format("cluster-report: {} images for m={} clusters",
                                    caption_ids.size(), k.m));
  }
  const auto features = average_caption_features(caption_store, caption_ids);
  const auto result = kmeans(features, k.m, k.seed, k.max_iters);
  std::unordered_map<std::string, std::size_t> assignment;
  for (std::size_t i = 0; i < features.size(); ++i) {
    assignment[features.ids()[i]] = result.assignment[i];
  }
  return build_cluster_report(assignment, labels, texts, k.m, k.top_terms, k.names);
}

inline CommandResult cmd_cluster_report(const RunConfig& c, std::ostream& log) {
  validate_config(c);
  const auto corpus = detail::corpus_of(c);
  require_embeddings(c.caption_embeddings, "caption_embeddings");
  const auto store = detail::store_of(*c.caption_embeddings, false);
  const auto report = cluster_corpus(corpus, *store, c.kmeans);

  OutputStage stage(c.out_dir, "cluster-report");
  {
    auto out = stage.open("cluster_report.csv");
    write_cluster_csv(out, report);
  }
  stage.write_json("cluster_report.json", cluster_report_json(report));
  detail::echo_config(stage, "cluster-report", c);

  const ClusterSummary* most_male = nullptr;
  const ClusterSummary* most_female = nullptr;
  for (const auto& cl : report.clusters) {
    if (!cl.delta_m) continue;
    if (!most_male || *cl.delta_m > *most_male->delta_m) most_male = &cl;
    if (!most_female || *cl.delta_m < *most_female->delta_m) most_female = &cl;
  }
  auto describe = [](const ClusterSummary& cl) {
    std::string terms;
    for (std::size_t i = 0; i < std::min<std::size_t>(5, cl.top_terms.size()); ++i) {
      terms += (i ? ", " : "") + cl.top_terms[i];
    }
    return fmt::format("cluster {} (n={}, dM={:+.1f}): {}", cl.index, cl.members.size(),
                       *cl.delta_m, terms);
  };
  log << fmt::format("global male share: {:.1f}%\n", report.global_male_pct);
  if (most_male) log << "most male-skewed " << describe(*most_male) << '\n';
  if (most_female) log << "most female-skewed " << describe(*most_female) << '\n';
  return {stage.commit()};
}

// ---------------------------------------------------------------------------
// probe

struct ProbeExamples {
  std::vector<std::string> captions;  // neutralized
  std::vector<Gender> labels;
};

/// One example per caption of every gender-labeled real image in \p split.
inline ProbeExamples probe_examples(const Corpus& corpus, Split split) {
  ProbeExamples ex;
  for (const auto& r : corpus.records()) {
    if (r.synthetic || r.split != split || !is_defined(r.gender_label)) continue;
    for (const auto& cap : r.captions) {
      ex.captions.push_back(neutralize_caption(cap, corpus.lexicon()));
      ex.labels.push_back(r.gender_label);
    }
  }
  return ex;
}

struct ProbeOutcome {
  ProbeModel model;
  double auc = 0;
  std::size_t train_examples = 0;
  std::size_t eval_examples = 0;
  std::vector<double> loss_history;
};

/// Trains on one split and scores AUC (male positive) on another. With
/// permute_labels the training labels are shuffled first.
inline ProbeOutcome run_probe(const Corpus& corpus, const ProbeConfig& p) {
  auto train = probe_examples(corpus, p.train_split);
  const auto eval = probe_examples(corpus, p.eval_split);
  if (p.permute_labels) {
    Rng rng(p.permutation_seed);
    const auto perm = sample_without_replacement(train.labels.size(), train.labels.size(), rng);
    std::vector<Gender> shuffled(train.labels.size());
    for (std::size_t i = 0; i < perm.size(); ++i) shuffled[i] = train.labels[perm[i]];
    train.labels = std::move(shuffled);
  }
  ProbeOutcome out;
  out.model = train_probe(train.captions, train.labels, p.hyper, corpus.lexicon(), &out.loss_history);
  std::vector<double> scores;
  std::vector<int> y;
  for (std::size_t i = 0; i < eval.captions.size(); ++i) {
    scores.push_back(out.model.decision(eval.captions[i]));
    y.push_back(eval.labels[i] == Gender::male ? 1 : 0);
  }
  out.auc = auc(scores, y);
  out.train_examples = train.captions.size();
  out.eval_examples = eval.captions.size();
  return out;
}

inline CommandResult cmd_probe(const RunConfig& c, std::ostream& log) {
  validate_config(c);
  const auto corpus = detail::corpus_of(c);
  const auto res = run_probe(corpus, c.probe);

  OutputStage stage(c.out_dir, "probe");
  {
    auto out = stage.open("probe_model.tsv");
    res.model.save(out);
  }
  const double final_loss = res.loss_history.empty() ? 0.0 : res.loss_history.back();
  stage.write("probe_report.csv",
              fmt::format("train_split,eval_split,train_examples,eval_examples,auc,final_loss,"
                          "permuted\n{},{},{},{},{},{},{}\n",
                          to_string(c.probe.train_split), to_string(c.probe.eval_split),
                          res.train_examples, res.eval_examples, res.auc, final_loss,
                          c.probe.permute_labels));
  stage.write_json("probe_report.json", {{"train_split", to_string(c.probe.train_split)},
                                         {"eval_split", to_string(c.probe.eval_split)},
                                         {"train_examples", res.train_examples},
                                         {"eval_examples", res.eval_examples},
                                         {"auc", res.auc},
                                         {"final_loss", final_loss},
                                         {"permuted", c.probe.permute_labels}});
  detail::echo_config(stage, "probe", c);
  log << fmt::format("probe AUC on {}: {:.4f} ({} train / {} eval captions)\n",
                     to_string(c.probe.eval_split), res.auc, res.train_examples,
                     res.eval_examples);
  return {stage.commit()};
}

}  // namespace genbias
