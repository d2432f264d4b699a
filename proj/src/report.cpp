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

#include "makd/report.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include <fmt/format.h>

#include "makd/losses.hpp"
#include "makd/util.hpp"

namespace makd::report {

using numerics::Tensor;

double accuracy(const model::Model& model, const data::Dataset& dataset, data::Split split) {
  const auto rows = dataset.indices(split);
  if (rows.empty()) throw DomainError("accuracy: split '" + data::split_name(split) + "' is empty");
  const auto pred = model.predict_classes(dataset.gather_features(rows));
  const auto labels = dataset.gather_labels(rows);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += pred[i] == labels[i];
  return 100.0 * static_cast<double>(hit) / static_cast<double>(labels.size());
}

Tensor aspect_mean_by_class(const annotate::AnnotationStore& store,
                            const data::DatasetManifest& manifest) {
  if (!store.complete()) throw DomainError("aspect_mean_by_class: annotation store is incomplete");
  const std::size_t c = manifest.num_classes();
  const std::size_t q = store.num_questions();
  Tensor sums = Tensor::matrix(c, q);
  std::vector<std::size_t> counts(c, 0);
  for (const auto& im : manifest.images) {
    const auto idx = store.image_index(im.id);
    if (!idx) throw DomainError("image '" + im.id + "' is missing from the annotation store");
    ++counts[im.label];
    for (std::size_t j = 0; j < q; ++j) sums.at(im.label, j) += store.q(*idx, j);
  }
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t j = 0; j < q; ++j)
      sums.at(k, j) = counts[k] ? sums.at(k, j) / static_cast<double>(counts[k])
                                : std::numeric_limits<double>::quiet_NaN();
  return sums;
}

std::string class_means_tsv(const Tensor& means, const data::DatasetManifest& manifest,
                            const annotate::AnnotationStore& store) {
  std::string s = "class";
  for (auto id : store.question_ids()) s += fmt::format("\tq{}", id);
  s += "\n";
  for (std::size_t k = 0; k < means.rows(); ++k) {
    s += manifest.class_names.at(k);
    for (std::size_t j = 0; j < means.cols(); ++j) s += "\t" + util::format_double(means.at(k, j));
    s += "\n";
  }
  return s;
}

namespace {

// Sigmoid of the aspect logits and the matching store rows for one split.
std::pair<Tensor, Tensor> aspect_pairs(const model::Model& model,
                                       const annotate::AnnotationStore& store,
                                       const data::Dataset& dataset, data::Split split) {
  if (model.num_aspects() != store.num_questions())
    throw ShapeError(fmt::format("model has {} aspect outputs, store has {} questions",
                                 model.num_aspects(), store.num_questions()));
  const auto rows = dataset.indices(split);
  if (rows.empty()) throw DomainError("split '" + data::split_name(split) + "' is empty");
  const auto logits = model.predict(dataset.gather_features(rows));
  const auto ids = dataset.gather_ids(rows);
  Tensor targets = store.targets_for(ids);
  Tensor probs = Tensor::matrix(rows.size(), model.num_aspects());
  const std::size_t c = model.num_classes();
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < probs.cols(); ++j)
      probs.at(i, j) = losses::sigmoid(logits.at(i, c + j));
  return {std::move(probs), std::move(targets)};
}

}  // namespace

AspectComparison compare_model_vs_store(const model::Model& model,
                                        const annotate::AnnotationStore& store,
                                        const data::Dataset& dataset, data::Split split) {
  const auto [probs, targets] = aspect_pairs(model, store, dataset, split);
  AspectComparison cmp;
  cmp.question_ids = store.question_ids();
  cmp.per_question.assign(probs.cols(), 0.0);
  for (std::size_t i = 0; i < probs.rows(); ++i)
    for (std::size_t j = 0; j < probs.cols(); ++j)
      cmp.per_question[j] += std::abs(probs.at(i, j) - targets.at(i, j));
  for (auto& v : cmp.per_question) v /= static_cast<double>(probs.rows());
  if (!cmp.per_question.empty()) {
    double total = 0.0;
    for (double v : cmp.per_question) total += v;
    cmp.overall = total / static_cast<double>(cmp.per_question.size());
  }
  return cmp;
}

std::string comparison_tsv(const AspectComparison& cmp) {
  std::string s = "question_id\tmean_abs_diff\n";
  for (std::size_t j = 0; j < cmp.per_question.size(); ++j)
    s += fmt::format("{}\t{}\n", cmp.question_ids[j], util::format_double(cmp.per_question[j]));
  s += "overall\t" + util::format_double(cmp.overall) + "\n";
  return s;
}

std::vector<AspectExportRow> export_aspect_logits(const model::Model& model,
                                                  const annotate::AnnotationStore& store,
                                                  const data::Dataset& dataset, data::Split split) {
  const auto [probs, targets] = aspect_pairs(model, store, dataset, split);
  const auto ids = dataset.gather_ids(dataset.indices(split));
  std::vector<AspectExportRow> out;
  out.reserve(probs.size());
  for (std::size_t i = 0; i < probs.rows(); ++i)
    for (std::size_t j = 0; j < probs.cols(); ++j)
      out.push_back({ids[i], store.question_ids()[j], probs.at(i, j), targets.at(i, j)});
  return out;
}

std::string aspect_export_tsv(const std::vector<AspectExportRow>& rows) {
  std::string s = "image_id\tquestion_id\tmodel_probability\tstore_q\n";
  for (const auto& r : rows)
    s += fmt::format("{}\t{}\t{}\t{}\n", r.image_id, r.question_id,
                     util::format_double(r.model_probability), util::format_double(r.store_q));
  return s;
}

std::vector<AspectExportRow> parse_aspect_export_tsv(std::string_view text) {
  std::vector<AspectExportRow> out;
  const auto lines = util::split(text, '\n');
  bool header = true;
  for (std::size_t n = 0; n < lines.size(); ++n) {
    if (lines[n].empty()) continue;
    if (header) {
      if (lines[n] != "image_id\tquestion_id\tmodel_probability\tstore_q")
        throw ParseError("unexpected aspect export header", std::string(text));
      header = false;
      continue;
    }
    const auto f = util::split(lines[n], '\t');
    if (f.size() != 4)
      throw ParseError(fmt::format("aspect export line {} has {} fields", n + 1, f.size()),
                       std::string(text));
    AspectExportRow r;
    r.image_id = f[0];
    r.question_id = static_cast<std::uint64_t>(util::parse_double(f[1]));
    r.model_probability = util::parse_double(f[2]);
    r.store_q = util::parse_double(f[3]);
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Harness

std::string BenchmarkSpec::canonical() const {
  std::string s = fmt::format(
      "data.num_classes={}\ndata.num_attributes={}\ndata.feature_dim={}\n"
      "data.train_per_class={}\ndata.test_per_class={}\ndata.prototype_scale={}\n"
      "data.noise_sigma={}\ndata.latent_mode={}\n",
      data.num_classes, data.num_attributes, data.feature_dim, data.train_per_class,
      data.test_per_class, util::format_double(data.prototype_scale),
      util::format_double(data.noise_sigma), data::latent_mode_name(data.latent_mode));
  s += "model.hidden_dims=";
  for (std::size_t i = 0; i < hidden_dims.size(); ++i)
    s += (i ? "," : "") + std::to_string(hidden_dims[i]);
  s += "\nmodel.activation=" + model::activation_name(activation) + "\n";
  s += fmt::format("questions.num_questions={}\nquestions.num_candidates={}\n", num_questions,
                   num_candidates);
  s += fmt::format("oracle.scale={}\noracle.noise={}\n", util::format_double(oracle_scale),
                   util::format_double(oracle_noise));
  s += "teacher.hidden_dims=";
  for (std::size_t i = 0; i < teacher_hidden.size(); ++i)
    s += (i ? "," : "") + std::to_string(teacher_hidden[i]);
  s += fmt::format("\nkd.temperature={}\nkd.weight={}\n", util::format_double(kd_temperature),
                   util::format_double(kd_weight));
  s += train.canonical();
  return s;
}

BenchmarkSpec default_benchmark(std::size_t epochs) {
  BenchmarkSpec b;
  b.train.epochs = epochs;
  b.train.lr_milestones = train::scaled_milestones(epochs);
  b.train.evaluate_each_epoch = false;
  return b;
}

CellConfig CellConfig::matched_baseline() const {
  CellConfig b;
  b.alpha = 0.0;
  b.num_questions = 0;
  b.fraction = fraction;
  b.kd = kd;
  return b;
}

std::string CellConfig::label() const {
  return fmt::format("alpha={} Q={} fraction={} loss_variant={} target_source={} kd={}",
                     util::format_double(alpha), num_questions, util::format_double(fraction),
                     train::loss_variant_name(loss_variant),
                     train::target_source_name(target_source), kd ? "on" : "off");
}

std::string CellConfig::digest() const { return util::sha256_hex(label()).substr(0, 16); }

namespace {

const std::set<std::string> kAxisNames{"alpha", "Q", "fraction", "loss_variant", "target_source",
                                       "kd"};

void apply_axis_value(CellConfig& cell, const std::string& name, const std::string& value) {
  if (name == "alpha") {
    cell.alpha = util::parse_double(value);
    if (!(cell.alpha >= 0.0)) throw DomainError("alpha must be non-negative");
  } else if (name == "Q") {
    const double v = util::parse_double(value);
    if (!(v >= 0.0) || v != std::floor(v)) throw DomainError("Q must be a non-negative integer");
    cell.num_questions = static_cast<std::size_t>(v);
  } else if (name == "fraction") {
    cell.fraction = util::parse_double(value);
    if (!(cell.fraction > 0.0 && cell.fraction <= 1.0))
      throw DomainError("fraction must lie in (0, 1]");
  } else if (name == "loss_variant") {
    cell.loss_variant = train::parse_loss_variant(value);
  } else if (name == "target_source") {
    cell.target_source = train::parse_target_source(value);
    if (cell.target_source == train::TargetSource::kEndpoint)
      throw DomainError("the ablation harness supports oracle and random targets only");
  } else if (name == "kd") {
    if (value == "on" || value == "true" || value == "1")
      cell.kd = true;
    else if (value == "off" || value == "false" || value == "0")
      cell.kd = false;
    else
      throw DomainError("kd axis values are on/off");
  } else {
    throw DomainError("unknown axis '" + name + "'");
  }
}

}  // namespace

Axis parse_axis(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos) throw DomainError("axis must look like name=v1,v2: '" + spec + "'");
  Axis a;
  a.name = util::trim(spec.substr(0, eq));
  if (!kAxisNames.count(a.name)) throw DomainError("unknown axis '" + a.name + "'");
  for (const auto& v : util::split(spec.substr(eq + 1), ',')) {
    auto t = util::trim(v);
    if (t.empty()) continue;
    CellConfig probe;
    apply_axis_value(probe, a.name, t);
    a.values.push_back(std::move(t));
  }
  if (a.values.empty()) throw DomainError("axis '" + a.name + "' has no values");
  return a;
}

std::vector<CellConfig> ExperimentPlan::cells() const {
  std::set<std::string> seen;
  for (const auto& a : axes)
    if (!seen.insert(a.name).second) throw DomainError("axis '" + a.name + "' given twice");

  CellConfig base;
  base.num_questions = benchmark.num_questions;
  std::vector<CellConfig> out{base};
  for (const auto& a : axes) {
    std::vector<CellConfig> next;
    for (const auto& c : out)
      for (const auto& v : a.values) {
        CellConfig n = c;
        apply_axis_value(n, a.name, v);
        next.push_back(n);
      }
    out = std::move(next);
  }
  std::vector<CellConfig> unique;
  std::set<std::string> digests;
  for (const auto& c : out)
    if (digests.insert(c.digest()).second) unique.push_back(c);
  const auto n = unique.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto b = unique[i].matched_baseline();
    if (digests.insert(b.digest()).second) unique.push_back(b);
  }
  return unique;
}

const ComparisonRow& PlanResult::row(const CellConfig& cell) const {
  const auto d = cell.digest();
  for (const auto& r : rows)
    if (r.digest == d) return r;
  throw DomainError("no result row for cell " + cell.label());
}

namespace {

enum SeedTag : std::uint64_t { kData = 1, kSubsample, kInit, kTrain, kOracle, kTeacher };

model::Model build_model(const BenchmarkSpec& b, const data::Dataset& ds,
                         std::vector<std::size_t> hidden, std::size_t q, std::uint64_t seed) {
  model::ModelConfig mc;
  mc.input_dim = ds.feature_dim();
  mc.hidden_dims = std::move(hidden);
  mc.num_classes = ds.num_classes();
  mc.num_aspects = q;
  mc.activation = b.activation;
  mc.init_seed = seed;
  return model::Model::build(mc);
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Sample standard deviation (n - 1); 0 for a single value.
double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

std::string num(double v) { return std::isnan(v) ? "nan" : util::format_double(v); }

}  // namespace

RunOutcome run_cell(const BenchmarkSpec& benchmark, const CellConfig& cell, std::uint64_t seed) {
  RunOutcome out;
  out.cell = cell;
  out.seed = seed;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  out.aspect_diff_before = out.aspect_diff_after = nan;
  out.accuracy = nan;
  try {
    auto dcfg = benchmark.data;
    dcfg.seed = numerics::derive_seed(seed, kData);
    const auto full = data::generate_synthetic(dcfg);
    const auto ds = data::subsample_train(full, cell.fraction, numerics::derive_seed(seed, kSubsample));
    const std::size_t q = cell.num_questions;

    std::optional<annotate::AnnotationStore> store;
    if (q > 0) {
      aspects::QuestionSet qs;
      qs.dataset_id = ds.manifest.dataset_id;
      qs.classes = ds.manifest.class_names;
      qs.all_questions =
          aspects::offline_generate(qs.classes, std::max(benchmark.num_candidates, q));
      qs = aspects::select_in_order(qs, q);
      const auto spec =
          annotate::default_oracle(dcfg.num_attributes, q, benchmark.oracle_scale,
                                   benchmark.oracle_noise, numerics::derive_seed(seed, kOracle));
      store = annotate::oracle_annotate(ds, qs, spec);
    }

    auto tcfg = benchmark.train;
    tcfg.alpha = cell.num_questions == 0 ? 0.0 : cell.alpha;
    tcfg.seed = numerics::derive_seed(seed, kTrain);
    tcfg.loss_variant = cell.loss_variant;
    tcfg.aspect_target_source = cell.target_source;
    tcfg.evaluate_each_epoch = false;

    auto net = build_model(benchmark, ds, benchmark.hidden_dims, q, numerics::derive_seed(seed, kInit));
    if (store) out.aspect_diff_before = compare_model_vs_store(net, *store, ds, data::Split::kTest).overall;

    std::optional<Tensor> teacher_logits;
    if (cell.kd) {
      auto teacher_cfg = tcfg;
      teacher_cfg.alpha = 0.0;
      teacher_cfg.kd.reset();
      teacher_cfg.seed = numerics::derive_seed(seed, kTeacher);
      auto teacher = build_model(benchmark, ds, benchmark.teacher_hidden, 0,
                                 numerics::derive_seed(seed, kTeacher + 100));
      auto trained = train::train(std::move(teacher), ds, nullptr, teacher_cfg);
      teacher_logits = trained.model.predict(ds.gather_features(ds.indices(data::Split::kTrain)));
      tcfg.kd = train::KdConfig{benchmark.kd_temperature, benchmark.kd_weight,
                                fmt::format("mlp-ce-teacher:{}", checkpoint_digest(trained.model))};
    }

    train::TrainResult result = [&] {
      if (cell.target_source == train::TargetSource::kRandom && q > 0) {
        if (teacher_logits) {
          const auto n = ds.indices(data::Split::kTrain).size();
          const auto t = train::random_targets(n, q, numerics::derive_seed(tcfg.seed, 0x72616e64));
          return train::train_core(std::move(net), ds, {&t, &*teacher_logits}, tcfg);
        }
        return train::train_with_random_targets(std::move(net), ds, tcfg);
      }
      const annotate::AnnotationStore* s = store ? &*store : nullptr;
      if (teacher_logits) return train::train_with_kd(std::move(net), ds, *teacher_logits, s, tcfg);
      return train::train(std::move(net), ds, s, tcfg);
    }();

    out.accuracy = accuracy(result.model, ds, data::Split::kTest);
    if (store)
      out.aspect_diff_after =
          compare_model_vs_store(result.model, *store, ds, data::Split::kTest).overall;
    out.checkpoint_sha = model::checkpoint_digest(result.model);
    out.record = std::move(result.record);
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  return out;
}

PlanResult run_plan(const ExperimentPlan& plan) {
  if (plan.seeds.empty()) throw DomainError("plan needs at least one seed");
  const auto cells = plan.cells();
  std::vector<RunOutcome> runs(cells.size() * plan.seeds.size());

  // each task owns one output slot, so results do not depend on scheduling
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t; (t = next.fetch_add(1)) < runs.size();)
      runs[t] = run_cell(plan.benchmark, cells[t / plan.seeds.size()],
                         plan.seeds[t % plan.seeds.size()]);
  };
  const std::size_t jobs = std::max<std::size_t>(1, std::min(plan.jobs, runs.size()));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }

  PlanResult res;
  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    ComparisonRow row;
    row.cell = cells[ci];
    row.digest = cells[ci].digest();
    std::vector<double> before, after;
    for (std::size_t si = 0; si < plan.seeds.size(); ++si) {
      const auto& r = runs[ci * plan.seeds.size() + si];
      if (!r.ok()) {
        ++row.failures;
        continue;
      }
      row.per_seed.push_back(r.accuracy);
      if (!std::isnan(r.aspect_diff_before)) before.push_back(r.aspect_diff_before);
      if (!std::isnan(r.aspect_diff_after)) after.push_back(r.aspect_diff_after);
    }
    row.mean = mean_of(row.per_seed);
    row.std = std_of(row.per_seed);
    row.aspect_diff_before = mean_of(before);
    row.aspect_diff_after = mean_of(after);
    res.failures += row.failures;
    res.rows.push_back(std::move(row));
  }
  for (auto& row : res.rows) {
    const auto b = row.cell.matched_baseline().digest();
    for (const auto& other : res.rows)
      if (other.digest == b) row.baseline_mean = other.mean;
    row.gap = row.mean - row.baseline_mean;
  }
  std::sort(res.rows.begin(), res.rows.end(),
            [](const auto& a, const auto& b) { return a.digest < b.digest; });
  res.runs = std::move(runs);
  if (!plan.output_dir.empty()) write_plan_outputs(plan, res);
  return res;
}

std::string summary_tsv(const PlanResult& result) {
  std::string s =
      "digest\talpha\tQ\tfraction\tloss_variant\ttarget_source\tkd\tseeds\tfailures\tmean\tstd\t"
      "baseline_mean\tgap\taspect_diff_before\taspect_diff_after\n";
  for (const auto& r : result.rows)
    s += fmt::format("{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n", r.digest,
                     num(r.cell.alpha), r.cell.num_questions, num(r.cell.fraction),
                     train::loss_variant_name(r.cell.loss_variant),
                     train::target_source_name(r.cell.target_source), r.cell.kd ? "on" : "off",
                     r.per_seed.size(), r.failures, num(r.mean), num(r.std), num(r.baseline_mean),
                     num(r.gap), num(r.aspect_diff_before), num(r.aspect_diff_after));
  return s;
}

std::string runs_tsv(const PlanResult& result) {
  std::vector<const RunOutcome*> order;
  for (const auto& r : result.runs) order.push_back(&r);
  std::stable_sort(order.begin(), order.end(), [](const auto* a, const auto* b) {
    const auto da = a->cell.digest(), db = b->cell.digest();
    return da != db ? da < db : a->seed < b->seed;
  });
  std::string s =
      "digest\tseed\taccuracy\taspect_diff_before\taspect_diff_after\tcheckpoint_sha\tconfig_digest\t"
      "error\n";
  for (const auto* r : order) {
    auto err = r->error;
    std::replace(err.begin(), err.end(), '\t', ' ');
    std::replace(err.begin(), err.end(), '\n', ' ');
    s += fmt::format("{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n", r->cell.digest(), r->seed,
                     num(r->accuracy), num(r->aspect_diff_before), num(r->aspect_diff_after),
                     r->checkpoint_sha, r->record.config_digest, err);
  }
  return s;
}

std::string fraction_gap_tsv(const PlanResult& result) {
  std::vector<const ComparisonRow*> ours;
  for (const auto& r : result.rows)
    if (!r.cell.is_baseline()) ours.push_back(&r);
  std::stable_sort(ours.begin(), ours.end(), [](const auto* a, const auto* b) {
    return a->cell.fraction != b->cell.fraction ? a->cell.fraction < b->cell.fraction
                                                : a->digest < b->digest;
  });
  std::string s = "fraction\tdigest\tbase\tours\tgap\n";
  for (const auto* r : ours)
    s += fmt::format("{}\t{}\t{}\t{}\t{}\n", num(r->cell.fraction), r->digest,
                     num(r->baseline_mean), num(r->mean), num(r->gap));
  return s;
}

std::string sweep_tsv(const PlanResult& result, const Axis& axis) {
  auto value_of = [&](const CellConfig& c) -> std::string {
    if (axis.name == "alpha") return num(c.alpha);
    if (axis.name == "Q") return std::to_string(c.num_questions);
    if (axis.name == "fraction") return num(c.fraction);
    if (axis.name == "loss_variant") return train::loss_variant_name(c.loss_variant);
    if (axis.name == "target_source") return train::target_source_name(c.target_source);
    return c.kd ? "on" : "off";
  };
  std::vector<const ComparisonRow*> rows;
  for (const auto& r : result.rows) rows.push_back(&r);
  std::map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < axis.values.size(); ++i) {
    CellConfig probe;
    apply_axis_value(probe, axis.name, axis.values[i]);
    position.emplace(value_of(probe), i);
  }
  std::stable_sort(rows.begin(), rows.end(), [&](const auto* a, const auto* b) {
    const auto pa = position.count(value_of(a->cell)) ? position[value_of(a->cell)] : axis.values.size();
    const auto pb = position.count(value_of(b->cell)) ? position[value_of(b->cell)] : axis.values.size();
    return pa != pb ? pa < pb : a->digest < b->digest;
  });
  std::string s = axis.name + "\tdigest\tmean\tstd\tgap\n";
  for (const auto* r : rows)
    s += fmt::format("{}\t{}\t{}\t{}\t{}\n", value_of(r->cell), r->digest, num(r->mean),
                     num(r->std), num(r->gap));
  return s;
}

void write_plan_outputs(const ExperimentPlan& plan, const PlanResult& result) {
  std::filesystem::create_directories(plan.output_dir);
  util::write_text_file(plan.output_dir / "summary.tsv", summary_tsv(result));
  util::write_text_file(plan.output_dir / "runs.tsv", runs_tsv(result));
  for (const auto& a : plan.axes) {
    util::write_text_file(plan.output_dir / (a.name + "_sweep.tsv"), sweep_tsv(result, a));
    if (a.name == "fraction")
      util::write_text_file(plan.output_dir / "fraction_gap.tsv", fraction_gap_tsv(result));
  }
}

}  // namespace makd::report
