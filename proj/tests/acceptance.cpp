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

// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
// failure.

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "makd/annotate.hpp"
#include "makd/cli.hpp"
#include "makd/losses.hpp"
#include "makd/report.hpp"
#include "makd/train.hpp"
#include "makd/util.hpp"

using namespace makd;
using numerics::Rng;
using numerics::Tensor;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::vector<double> random_values(Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("makd_acceptance_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// ---------------------------------------------------------------------------

Verdict yes_no_identity() {
  Rng rng(1);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double a = rng.uniform(-60, 60), b = rng.uniform(-60, 60);
    worst = std::max(worst, std::abs(losses::yes_no_probability(a, b) - losses::sigmoid(a - b)));
  }
  bool extremes_ok = true;
  for (double a : {-1000.0, 0.0, 1000.0})
    for (double b : {-1000.0, 0.0, 1000.0}) {
      const double p = losses::yes_no_probability(a, b);
      extremes_ok = extremes_ok && std::isfinite(p) && p >= 0.0 && p <= 1.0;
    }
  return {worst <= 1e-12 && extremes_ok,
          fmt::format("max deviation {:.3g} over 10000 pairs, extremes finite={}", worst,
                      extremes_ok)};
}

Verdict gradient_suite() {
  constexpr double kStep = 1e-5, kTol = 1e-5;
  constexpr int kConfigs = 50;
  double worst_ce = 0, worst_bce = 0, worst_kl = 0, worst_kd = 0, worst_total = 0;
  for (int s = 0; s < kConfigs; ++s) {
    Rng rng(numerics::derive_seed(2, static_cast<std::uint64_t>(s)));
    const std::size_t c = 2 + rng.below(8), q = 1 + rng.below(8);
    const std::size_t label = rng.below(c);
    const auto targets = random_values(rng, q, 0, 1);
    const auto teacher = random_values(rng, c, -4, 4);
    const double temp = rng.uniform(0.5, 6);
    const Tensor point = Tensor::vector(random_values(rng, c + q, -5, 5));
    const Tensor student = Tensor::vector(random_values(rng, c, -5, 5));

    auto wrap = [&](auto loss) -> numerics::DifferentiableFunction {
      return [&, loss](const Tensor& p, Tensor* g) {
        std::span<double> gs;
        if (g) gs = g->values();
        return loss(losses::ExpandedOutput(p.values(), c, q), gs);
      };
    };
    worst_ce = std::max(worst_ce, numerics::grad_check(wrap([&](const auto& o, auto g) {
      return losses::class_cross_entropy(o, label, g);
    }), point, kStep));
    worst_bce = std::max(worst_bce, numerics::grad_check(wrap([&](const auto& o, auto g) {
      return losses::makd_bce(o, targets, g);
    }), point, kStep));
    worst_kl = std::max(worst_kl, numerics::grad_check(wrap([&](const auto& o, auto g) {
      return losses::kl_aspect_loss(o, targets, g);
    }), point, kStep));
    worst_kd = std::max(worst_kd, numerics::grad_check(
                                      [&](const Tensor& p, Tensor* g) {
                                        std::span<double> gs;
                                        if (g) gs = g->values();
                                        return losses::kd_kl(p.values(), teacher, temp, gs);
                                      },
                                      student, kStep));

    // full objective through a random small model
    model::ModelConfig mc;
    mc.input_dim = 3 + rng.below(4);
    mc.hidden_dims = {2 + rng.below(5)};
    mc.num_classes = c;
    mc.num_aspects = q;
    mc.init_seed = rng.next_u64();
    mc.activation = s % 2 ? model::Activation::kSigmoid : model::Activation::kRelu;
    const auto m = model::Model::build(mc);
    const std::size_t b = 1 + rng.below(4);
    Tensor x({b, mc.input_dim});
    for (auto& v : x.values()) v = rng.normal();
    std::vector<std::size_t> labels;
    for (std::size_t i = 0; i < b; ++i) labels.push_back(rng.below(c));
    Tensor t({b, q});
    for (auto& v : t.values()) v = rng.uniform();
    Tensor tl({b, c});
    for (auto& v : tl.values()) v = rng.normal();
    const auto kind = s % 3 ? losses::AspectLossKind::kBce : losses::AspectLossKind::kKl;
    auto obj = train::flat_objective(m, x, labels, t, rng.uniform(0, 2), kind,
                                     s % 2 ? std::optional<Tensor>(tl) : std::nullopt, temp, 0.7);
    worst_total = std::max(worst_total, numerics::grad_check(obj.fn, obj.parameters, kStep));
  }
  const double worst = std::max({worst_ce, worst_bce, worst_kl, worst_kd, worst_total});
  return {worst <= kTol,
          fmt::format("{} configs each; worst relative error ce={:.2g} bce={:.2g} kl={:.2g} "
                      "kd={:.2g} total={:.2g}",
                      kConfigs, worst_ce, worst_bce, worst_kl, worst_kd, worst_total)};
}

Verdict alpha_zero_equivalence() {
  auto spec = report::default_benchmark(6);
  const auto ds = data::generate_synthetic(spec.data);
  auto build = [&](std::size_t q) {
    model::ModelConfig mc;
    mc.input_dim = ds.feature_dim();
    mc.hidden_dims = spec.hidden_dims;
    mc.num_classes = ds.num_classes();
    mc.num_aspects = q;
    mc.init_seed = 11;
    return model::Model::build(mc);
  };
  // Without milestones a run of e epochs is exactly the first e epochs of a
  // longer run, so comparing e = 1..E compares the whole trajectory.
  train::TrainConfig t = spec.train;
  t.lr_milestones.clear();
  t.alpha = 0.0;
  t.seed = 5;
  std::size_t compared = 0;
  bool identical = true;
  for (std::size_t e = 1; e <= 6; ++e) {
    t.epochs = e;
    const auto base = train::train(build(0), ds, nullptr, t);
    const auto wide = train::train(build(10), ds, nullptr, t);
    const auto& lb = base.model.layers();
    const auto& lw = wide.model.layers();
    for (std::size_t l = 0; l + 1 < lb.size(); ++l) identical = identical && lb[l] == lw[l];
    const auto& fb = lb.back();
    const auto& fw = lw.back();
    const std::size_t c = ds.num_classes();
    for (std::size_t r = 0; r < fb.weight.rows(); ++r)
      for (std::size_t k = 0; k < c; ++k) {
        identical = identical && fb.weight.at(r, k) == fw.weight.at(r, k);
        ++compared;
      }
    for (std::size_t k = 0; k < c; ++k) identical = identical && fb.bias[k] == fw.bias[k];
    for (std::size_t i = 0; i < e; ++i)
      identical = identical && base.record.epochs[i].ce == wide.record.epochs[i].ce;
  }
  return {identical, fmt::format("6 epoch prefixes, {} class-slice head weights plus all hidden "
                                 "layers compared bit-for-bit: {}",
                                 compared, identical ? "identical" : "DIFFERENT")};
}

Verdict slice_isolation() {
  Rng rng(4);
  double worst = 0.0;
  bool argmax_same = true;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t c = 2 + rng.below(10), q = 1 + rng.below(10);
    auto logits = random_values(rng, c + q, -10, 10);
    const auto targets = random_values(rng, q, 0, 1);
    const std::size_t label = rng.below(c);
    const losses::ExpandedOutput o(logits, c, q);
    const double ce = losses::class_cross_entropy(o, label);
    const double bce = losses::makd_bce(o, targets);
    const auto arg = o.predicted_class();

    auto a = logits;
    for (std::size_t k = c; k < c + q; ++k) a[k] = rng.uniform(-1e4, 1e4);
    const losses::ExpandedOutput oa(a, c, q);
    worst = std::max(worst, std::abs(losses::class_cross_entropy(oa, label) - ce));
    argmax_same = argmax_same && oa.predicted_class() == arg;

    auto b = logits;
    for (std::size_t k = 0; k < c; ++k) b[k] = rng.uniform(-1e4, 1e4);
    worst = std::max(worst, std::abs(losses::makd_bce(losses::ExpandedOutput(b, c, q), targets) - bce));
  }
  return {worst <= 1e-12 && argmax_same,
          fmt::format("1000 probes, max change {:.3g}, argmax stable={}", worst, argmax_same)};
}

// ---------------------------------------------------------------------------
// Benchmark grid shared by the directional criteria.

struct Grid {
  report::BenchmarkSpec spec = report::default_benchmark(60);
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::map<std::string, std::vector<report::RunOutcome>> runs;
  bool any_error = false;

  std::vector<double> acc(const std::string& key) const {
    std::vector<double> v;
    for (const auto& r : runs.at(key)) v.push_back(r.accuracy);
    return v;
  }

  void run(const std::string& key, const report::CellConfig& cell) {
    for (auto s : seeds) {
      auto out = report::run_cell(spec, cell, s);
      if (!out.ok()) {
        any_error = true;
        std::cerr << "run failed: " << cell.label() << " seed " << s << ": " << out.error << "\n";
      }
      runs[key].push_back(std::move(out));
    }
  }
};

report::CellConfig cell(double alpha, std::size_t q, double fraction = 1.0,
                        losses::AspectLossKind kind = losses::AspectLossKind::kBce,
                        train::TargetSource src = train::TargetSource::kOracle) {
  report::CellConfig c;
  c.alpha = alpha;
  c.num_questions = q;
  c.fraction = fraction;
  c.loss_variant = kind;
  c.target_source = src;
  return c;
}

Verdict main_result(const Grid& g) {
  const auto base = g.acc("base"), ours = g.acc("q10");
  int wins = 0;
  for (std::size_t i = 0; i < base.size(); ++i) wins += ours[i] > base[i];
  const bool pass = !g.any_error && mean(ours) > mean(base) && wins >= 4;
  return {pass, fmt::format("baseline {:.2f}, MaKD {:.2f} (gap {:+.2f}), paired wins {}/5",
                            mean(base), mean(ours), mean(ours) - mean(base), wins)};
}

Verdict reduced_data(const Grid& g) {
  const double gap_full = mean(g.acc("q10")) - mean(g.acc("base"));
  const double gap_small = mean(g.acc("q10_f04")) - mean(g.acc("base_f04"));
  return {!g.any_error && gap_small >= gap_full,
          fmt::format("gap at fraction 0.4 {:+.2f} (base {:.2f}, MaKD {:.2f}) vs at 1.0 {:+.2f}",
                      gap_small, mean(g.acc("base_f04")), mean(g.acc("q10_f04")), gap_full)};
}

Verdict random_control(const Grid& g) {
  const double rnd = mean(g.acc("random")), orc = mean(g.acc("q10")), base = mean(g.acc("base"));
  return {!g.any_error && rnd <= orc && rnd - base <= 1.0,
          fmt::format("random {:.2f}, oracle {:.2f}, baseline {:.2f}", rnd, orc, base)};
}

Verdict bce_vs_kl(const Grid& g) {
  const double bce = mean(g.acc("q10")), kl = mean(g.acc("kl")), base = mean(g.acc("base"));

  // gradients of both variants on matched batches of a trained model
  auto spec = report::default_benchmark(5);
  const auto ds = data::generate_synthetic(spec.data);
  aspects::QuestionSet qs;
  qs.dataset_id = ds.manifest.dataset_id;
  qs.classes = ds.manifest.class_names;
  qs.all_questions = aspects::offline_generate(qs.classes, 100);
  qs = aspects::select_in_order(qs, 10);
  const auto store = annotate::oracle_annotate(
      ds, qs, annotate::default_oracle(spec.data.num_attributes, 10, 3.0, 0.0, 0));
  model::ModelConfig mc;
  mc.input_dim = ds.feature_dim();
  mc.hidden_dims = spec.hidden_dims;
  mc.num_classes = ds.num_classes();
  mc.num_aspects = 10;
  const auto trained = train::train(model::Model::build(mc), ds, &store, spec.train).model;
  const auto train_rows = ds.indices(data::Split::kTrain);
  double worst = 0.0;
  Rng rng(9);
  for (int batch = 0; batch < 20; ++batch) {
    std::vector<std::size_t> rows;
    for (int i = 0; i < 16; ++i) rows.push_back(train_rows[rng.below(train_rows.size())]);
    const auto x = ds.gather_features(rows);
    const auto labels = ds.gather_labels(rows);
    const auto ids = ds.gather_ids(rows);
    const auto targets = store.targets_for(ids);
    auto ob = train::flat_objective(trained, x, labels, targets, 1.0, losses::AspectLossKind::kBce);
    auto ok = train::flat_objective(trained, x, labels, targets, 1.0, losses::AspectLossKind::kKl);
    Tensor gb(ob.parameters.shape()), gk(ok.parameters.shape());
    ob.fn(ob.parameters, &gb);
    ok.fn(ok.parameters, &gk);
    for (std::size_t i = 0; i < gb.size(); ++i) worst = std::max(worst, std::abs(gb[i] - gk[i]));
  }
  return {!g.any_error && bce > base && kl > base && worst <= 1e-10,
          fmt::format("BCE mean {:.2f}, KL mean {:.2f}, baseline {:.2f}; max gradient difference "
                      "{:.3g} over 20 batches",
                      bce, kl, base, worst)};
}

Verdict q_sweep(const Grid& g) {
  const double q0 = mean(g.acc("base")), q5 = mean(g.acc("q5")), q10 = mean(g.acc("q10"));
  return {!g.any_error && q5 >= q0 && q10 >= q0,
          fmt::format("Q=0 {:.2f}, Q=5 {:.2f}, Q=10 {:.2f}", q0, q5, q10)};
}

Verdict fidelity(const Grid& g) {
  std::vector<double> before, after;
  bool each = true;
  for (const auto& r : g.runs.at("q10")) {
    before.push_back(r.aspect_diff_before);
    after.push_back(r.aspect_diff_after);
    each = each && r.aspect_diff_after < r.aspect_diff_before;
  }
  return {!g.any_error && each && mean(after) < mean(before),
          fmt::format("mean |p - q| before {:.4f}, after {:.4f}; decreased in every seed={}",
                      mean(before), mean(after), each)};
}

// ---------------------------------------------------------------------------

class FixedEndpoint final : public annotate::ChatEndpoint {
 public:
  std::atomic<std::size_t> calls{0};
  annotate::Json complete(const annotate::Json& request) override {
    ++calls;
    const auto text =
        request.at("messages").at(0).at("content").at(1).at("text").get<std::string>();
    const auto [y, n] = values(text);
    annotate::Json top = annotate::Json::array(
        {{{"token", "Yes"}, {"logprob", y}}, {{"token", "No"}, {"logprob", n}},
         {{"token", "The"}, {"logprob", -7.5}}});
    return {{"choices",
             annotate::Json::array(
                 {{{"logprobs",
                    {{"content", annotate::Json::array({{{"token", "Yes"},
                                                         {"logprob", y},
                                                         {"top_logprobs", top}}})}}}}})}};
  }
  static std::pair<double, double> values(const std::string& text) {
    const auto h = std::stoull(util::sha256_hex(text).substr(0, 6), nullptr, 16);
    return {-0.01 * static_cast<double>(h % 500), -0.01 * static_cast<double>((h / 500) % 500)};
  }
};

Verdict pipeline_exactness() {
  const auto dir = scratch("pipeline");
  aspects::QuestionSet qs;
  qs.dataset_id = "stub";
  qs.classes = {"a", "b", "c"};
  qs.all_questions = aspects::offline_generate(qs.classes, 20);
  qs = aspects::select_in_order(qs, 6);
  std::vector<annotate::ImageRef> images;
  for (int i = 0; i < 12; ++i) {
    annotate::ImageRef r;
    r.id = fmt::format("img_{:03}", i);
    r.bytes = {0xff, 0xd8, static_cast<unsigned char>(i)};
    r.mime = "image/jpeg";
    images.push_back(r);
  }
  annotate::EndpointConfig cfg;
  cfg.model = "stub";
  cfg.max_concurrent = 3;
  FixedEndpoint first;
  const auto rep = annotate::annotate_dataset("stub", images, qs, first, cfg, dir / "store.bin");
  const auto loaded = annotate::AnnotationStore::load(dir / "store.bin");
  bool exact = rep.complete() && loaded.complete();
  const auto sel = qs.selected_questions();
  for (std::size_t i = 0; i < images.size(); ++i)
    for (std::size_t j = 0; j < sel.size(); ++j) {
      const auto [y, n] = FixedEndpoint::values(sel[j].text + " " +
                                                std::string(annotate::kAnswerInstruction));
      exact = exact && loaded.q(i, j) == losses::yes_no_probability(y, n);
    }
  FixedEndpoint second;
  const auto again = annotate::annotate_dataset("stub", images, qs, second, cfg, dir / "store.bin");
  const bool idle = second.calls == 0 && again.store == loaded;
  fs::remove_all(dir);
  return {exact && idle, fmt::format("{} pairs, {} calls, bit-exact after reload={}, rerun calls={}",
                                     images.size() * sel.size(), first.calls.load(), exact,
                                     second.calls.load())};
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "makd");
  std::ostringstream out, err;
  const int code = cli::dispatch(args, out, err);
  if (code != 0) std::cerr << err.str();
  return code;
}

Verdict determinism() {
  const auto dir = scratch("determinism");
  const auto ds = (dir / "data").string();
  bool ok = cli({"synth", "--seed", "3", "--out", ds}) == 0;
  const auto cands = (dir / "cands.json").string(), sel = (dir / "sel.json").string();
  const auto store = (dir / "store.bin").string();
  ok = ok && cli({"gen-questions", "--dataset", ds, "--out", cands}) == 0;
  ok = ok && cli({"select", "--questions", cands, "--count", "10", "--out", sel}) == 0;
  ok = ok && cli({"oracle-annotate", "--dataset", ds, "--questions", sel, "--store", store}) == 0;
  for (const char* run : {"t1", "t2"})
    ok = ok && cli({"train", "--dataset", ds, "--store", store, "--questions", sel, "--epochs",
                    "10", "--seed", "7", "--out", (dir / run).string()}) == 0;
  for (const char* run : {"a1", "a2"})
    ok = ok && cli({"ablate", "--axis", "alpha=0,1", "--axis", "Q=5,10", "--seeds", "0,1",
                    "--epochs", "8", "--out", (dir / run).string()}) == 0;
  bool same = ok;
  std::string ckpt_sha, summary_sha;
  if (ok) {
    auto file = [&](const char* run, const char* name) {
      return util::read_text_file(dir / run / name);
    };
    same = file("t1", "checkpoint.bin") == file("t2", "checkpoint.bin") &&
           file("t1", "config.digest") == file("t2", "config.digest") &&
           file("t1", "run.tsv") == file("t2", "run.tsv") &&
           file("a1", "config.digest") == file("a2", "config.digest") &&
           file("a1", "summary.tsv") == file("a2", "summary.tsv") &&
           file("a1", "runs.tsv") == file("a2", "runs.tsv");
    ckpt_sha = util::sha256_hex(file("t1", "checkpoint.bin")).substr(0, 12);
    summary_sha = util::sha256_hex(file("a1", "summary.tsv")).substr(0, 12);
  }
  fs::remove_all(dir);
  return {ok && same, fmt::format("commands succeeded={}, checkpoint {} and summary {} identical "
                                  "across two invocations={}",
                                  ok, ckpt_sha, summary_sha, same)};
}

}  // namespace

int main() {
  int failures = 0;
  auto report_line = [&](int id, const std::string& name, const std::function<Verdict()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failures += v.pass ? 0 : 1;
    std::cout << fmt::format("{} C{:<2} {}: {} [{:.1f}s]", v.pass ? "PASS" : "FAIL", id, name,
                             v.detail, secs)
              << std::endl;
  };

  report_line(1, "yes/no probability identity", yes_no_identity);
  report_line(2, "gradient suite", gradient_suite);
  report_line(3, "alpha=0 equivalence", alpha_zero_equivalence);
  report_line(4, "slice isolation", slice_isolation);

  Grid grid;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    grid.run("base", cell(0, 0));
    grid.run("q10", cell(1, 10));
    grid.run("q5", cell(1, 5));
    grid.run("kl", cell(1, 10, 1.0, losses::AspectLossKind::kKl));
    grid.run("random", cell(1, 10, 1.0, losses::AspectLossKind::kBce, train::TargetSource::kRandom));
    grid.run("base_f04", cell(0, 0, 0.4));
    grid.run("q10_f04", cell(1, 10, 0.4));
  } catch (const std::exception& e) {
    std::cerr << "benchmark grid failed: " << e.what() << "\n";
    grid.any_error = true;
  }
  std::cout << fmt::format("benchmark grid: 7 cells x 5 seeds, 60 epochs, {:.1f}s",
                           std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                               .count())
            << std::endl;

  report_line(5, "synthetic main result", [&] { return main_result(grid); });
  report_line(6, "reduced-data trend", [&] { return reduced_data(grid); });
  report_line(7, "random-target control", [&] { return random_control(grid); });
  report_line(8, "BCE vs KL", [&] { return bce_vs_kl(grid); });
  report_line(9, "Q sweep", [&] { return q_sweep(grid); });
  report_line(10, "aspect fidelity", [&] { return fidelity(grid); });
  report_line(11, "pipeline exactness", pipeline_exactness);
  report_line(12, "determinism", determinism);

  std::cout << fmt::format("{} of 12 criteria passed", 12 - failures) << std::endl;
  return failures == 0 ? 0 : 1;
}
