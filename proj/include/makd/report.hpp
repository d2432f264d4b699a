/*
Copyright 2026 The makd Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "makd/annotate.hpp"
#include "makd/data.hpp"
#include "makd/model.hpp"
#include "makd/train.hpp"

namespace makd::report {

// Percentage of argmax-over-class-slice predictions equal to the labels.
double accuracy(const model::Model& model, const data::Dataset& dataset, data::Split split);

// C x Q matrix: mean aspect target over each class's images.
numerics::Tensor aspect_mean_by_class(const annotate::AnnotationStore& store,
                                      const data::DatasetManifest& manifest);
std::string class_means_tsv(const numerics::Tensor& means, const data::DatasetManifest& manifest,
                            const annotate::AnnotationStore& store);

struct AspectComparison {
  std::vector<std::uint64_t> question_ids;
  std::vector<double> per_question;  // mean |sigmoid(aspect logit) - q|
  double overall = 0.0;
};

AspectComparison compare_model_vs_store(const model::Model& model,
                                        const annotate::AnnotationStore& store,
                                        const data::Dataset& dataset, data::Split split);
std::string comparison_tsv(const AspectComparison& cmp);

struct AspectExportRow {
  std::string image_id;
  std::uint64_t question_id = 0;
  double model_probability = 0.0;
  double store_q = 0.0;
  friend bool operator==(const AspectExportRow&, const AspectExportRow&) = default;
};

// Image-major rows for every (image in split, selected question).
std::vector<AspectExportRow> export_aspect_logits(const model::Model& model,
                                                  const annotate::AnnotationStore& store,
                                                  const data::Dataset& dataset, data::Split split);
std::string aspect_export_tsv(const std::vector<AspectExportRow>& rows);
std::vector<AspectExportRow> parse_aspect_export_tsv(std::string_view text);

// ---------------------------------------------------------------------------
// Ablation harness

// Everything needed to reproduce one desk-scale benchmark run except the
// per-cell overrides.
struct BenchmarkSpec {
  data::SyntheticConfig data;
  std::vector<std::size_t> hidden_dims{128, 64};
  model::Activation activation = model::Activation::kRelu;
  std::size_t num_questions = 10;
  std::size_t num_candidates = 100;
  double oracle_scale = 3.0;
  double oracle_noise = 0.0;
  train::TrainConfig train;
  std::vector<std::size_t> teacher_hidden{256, 128};
  double kd_temperature = 4.0;
  double kd_weight = 1.0;

  std::string canonical() const;
};

// The default desk-scale benchmark at a given epoch budget, with the
// step schedule rescaled to it.
BenchmarkSpec default_benchmark(std::size_t epochs = 240);

// One point of the experiment grid.
struct CellConfig {
  double alpha = 1.0;
  std::size_t num_questions = 10;
  double fraction = 1.0;
  losses::AspectLossKind loss_variant = losses::AspectLossKind::kBce;
  train::TargetSource target_source = train::TargetSource::kOracle;
  bool kd = false;

  bool is_baseline() const noexcept { return alpha == 0.0 || num_questions == 0; }
  // Same fraction and KD setting, no aspect term.
  CellConfig matched_baseline() const;
  std::string label() const;
  std::string digest() const;
  friend bool operator==(const CellConfig&, const CellConfig&) = default;
};

struct Axis {
  std::string name;  // alpha | Q | fraction | loss_variant | target_source | kd
  std::vector<std::string> values;
};

Axis parse_axis(const std::string& spec);  // "name=v1,v2,..."

struct ExperimentPlan {
  std::string benchmark_id = "synthetic-default";
  BenchmarkSpec benchmark = default_benchmark();
  std::vector<Axis> axes;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::filesystem::path output_dir;
  std::size_t jobs = 1;

  // Cartesian product of the axes, followed by any matched baselines not
  // already present.
  std::vector<CellConfig> cells() const;
};

struct RunOutcome {
  CellConfig cell;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  double aspect_diff_before = 0.0;  // NaN when the cell has no aspects
  double aspect_diff_after = 0.0;
  std::string checkpoint_sha;
  std::string error;
  train::RunRecord record;
  bool ok() const noexcept { return error.empty(); }
};

struct ComparisonRow {
  std::string digest;
  CellConfig cell;
  std::vector<double> per_seed;
  std::size_t failures = 0;
  double mean = 0.0;
  double std = 0.0;
  double baseline_mean = 0.0;
  double gap = 0.0;  // mean - baseline_mean
  double aspect_diff_before = 0.0;
  double aspect_diff_after = 0.0;
};

struct PlanResult {
  std::vector<ComparisonRow> rows;
  std::vector<RunOutcome> runs;
  std::size_t failures = 0;
  const ComparisonRow& row(const CellConfig& cell) const;
};

// Trains and evaluates one cell for one replicate seed. The seed drives the
// dataset draw, subsampling, oracle noise, initialization and shuffling, so
// cells sharing a seed are paired.
RunOutcome run_cell(const BenchmarkSpec& benchmark, const CellConfig& cell, std::uint64_t seed);

// Runs every cell x seed (in parallel when plan.jobs > 1) and, when
// output_dir is set, writes summary.tsv, runs.tsv, one <axis>_sweep.tsv per
// axis and fraction_gap.tsv when fraction is an axis. Output is independent
// of scheduling.
PlanResult run_plan(const ExperimentPlan& plan);
void write_plan_outputs(const ExperimentPlan& plan, const PlanResult& result);

std::string summary_tsv(const PlanResult& result);
std::string runs_tsv(const PlanResult& result);
std::string fraction_gap_tsv(const PlanResult& result);
std::string sweep_tsv(const PlanResult& result, const Axis& axis);

}  // namespace makd::report
