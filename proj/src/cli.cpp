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

#include "makd/cli.hpp"

#include <charconv>
#include <iostream>
#include <mutex>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "makd/aspects.hpp"
#include "makd/config.hpp"
#include "makd/data.hpp"
#include "makd/model.hpp"
#include "makd/report.hpp"
#include "makd/train.hpp"
#include "makd/util.hpp"

namespace makd::cli {

namespace fs = std::filesystem;

namespace {

std::mutex factory_mutex;
EndpointFactory factory;

std::unique_ptr<annotate::ChatEndpoint> make_endpoint(const annotate::EndpointConfig& cfg) {
  {
    std::lock_guard lock(factory_mutex);
    if (factory) return factory(cfg);
  }
  cfg.validate();
  return std::make_unique<annotate::HttpChatEndpoint>(cfg);
}

// Config file, then --set overrides, then dedicated flags.
struct ConfigSources {
  std::string file;
  std::vector<std::string> sets;
  std::vector<std::pair<std::string, std::string>> flags;

  config::Config merged() const {
    auto c = file.empty() ? config::Config{} : config::Config::load(file);
    for (const auto& s : sets) c.apply_override(s);
    for (const auto& [k, v] : flags) c.set(k, v);
    return c;
  }
};

void add_config_options(CLI::App* cmd, ConfigSources& src) {
  cmd->add_option("--config", src.file, "Configuration file ([section] key = value)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--set", src.sets, "Override one key, e.g. --set train.alpha=0.5");
}

// A flag that, when given, writes `key` in the merged configuration.
template <typename T>
void add_mapped(CLI::App* cmd, ConfigSources& src, const std::string& flag, const std::string& key,
                const std::string& help) {
  cmd->add_option_function<T>(
      flag,
      [&src, key](const T& v) {
        if constexpr (std::is_same_v<T, std::string>)
          src.flags.emplace_back(key, v);
        else
          src.flags.emplace_back(key, fmt::format("{}", v));
      },
      help + " (" + key + ")");
}

std::string chat_text(annotate::ChatEndpoint& endpoint, const annotate::EndpointConfig& cfg,
                      const aspects::Prompt& prompt) {
  annotate::Json req{{"model", cfg.model},
                     {"temperature", 0},
                     {"messages",
                      {{{"role", "system"}, {"content", prompt.system}},
                       {{"role", "user"}, {"content", prompt.instruction}}}}};
  const auto resp = endpoint.complete(req);
  try {
    return resp.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const annotate::Json::exception&) {
    throw annotate::ExtractionError("chat response carries no message content",
                                    util::sha256_hex(resp.dump()));
  }
}

void ensure_parent(const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
}

model::Model build_for(const data::Dataset& ds, const config::Config& c, std::size_t q,
                       std::uint64_t train_seed) {
  model::ModelConfig mc;
  mc.input_dim = ds.feature_dim();
  mc.num_classes = ds.num_classes();
  mc.num_aspects = q;
  mc.hidden_dims = c.get_sizes("model.hidden_dims", mc.hidden_dims);
  mc.activation = model::parse_activation(c.get_string("model.activation", "relu"));
  mc.init_seed = c.get_u64("model.init_seed", train_seed);
  return model::Model::build(mc);
}

data::Split split_of(const std::string& s) { return data::parse_split(s); }

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  for (const auto& part : util::split(text, ',')) {
    const auto t = util::trim(part);
    if (t.empty()) continue;
    std::uint64_t v = 0;
    const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
    if (r.ec != std::errc{} || r.ptr != t.data() + t.size())
      throw DomainError("seed '" + t + "' is not a non-negative integer");
    out.push_back(v);
  }
  if (out.empty()) throw DomainError("no seeds given");
  return out;
}

}  // namespace

void set_endpoint_factory(EndpointFactory f) {
  std::lock_guard lock(factory_mutex);
  factory = std::move(f);
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
}

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-aspect knowledge distillation toolkit", "makd"};
  app.require_subcommand(1, 1);
  app.fallthrough(false);

  std::function<int()> action;

  // synth -------------------------------------------------------------------
  ConfigSources synth_src;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Generate the synthetic benchmark dataset");
  add_config_options(synth, synth_src);
  add_mapped<std::uint64_t>(synth, synth_src, "--seed", "data.seed", "Dataset seed");
  add_mapped<std::size_t>(synth, synth_src, "--classes", "data.num_classes", "Number of classes");
  add_mapped<std::size_t>(synth, synth_src, "--train-per-class", "data.train_per_class",
                          "Training images per class");
  synth->add_option("--out", synth_out, "Output dataset directory")->required();
  synth->callback([&] {
    action = [&] {
      const auto c = synth_src.merged();
      const auto ds = data::generate_synthetic(config::synthetic_config(c));
      data::save_dataset(ds, synth_out);
      config::write_digest(c, synth_out);
      out << fmt::format("wrote {} images ({} classes) to {}\n", ds.num_images(),
                         ds.num_classes(), synth_out);
      return 0;
    };
  });

  // gen-questions -----------------------------------------------------------
  ConfigSources gen_src;
  std::string gen_dataset, gen_out, gen_response;
  bool gen_live = false, gen_print = false;
  auto* gen = app.add_subcommand("gen-questions", "Generate candidate yes/no aspect questions");
  add_config_options(gen, gen_src);
  gen->add_option("--dataset", gen_dataset, "Dataset directory")->required();
  add_mapped<std::size_t>(gen, gen_src, "--count", "questions.num_candidates",
                          "Number of candidate questions");
  gen->add_option("--response", gen_response, "Parse a saved LLM response instead of generating")
      ->check(CLI::ExistingFile);
  gen->add_flag("--live", gen_live, "Ask the configured chat endpoint");
  gen->add_flag("--print-prompt", gen_print, "Print the generation prompt and exit");
  gen->add_option("--out", gen_out, "Output question-set file (JSON)");
  gen->callback([&] {
    action = [&] {
      const auto c = gen_src.merged();
      const auto ds = data::load_dataset(gen_dataset);
      const auto n = c.get_size("questions.num_candidates", 100);
      const auto prompt = aspects::build_generation_prompt(ds.manifest.class_names, ds.num_images(), n);
      if (gen_print) {
        out << prompt.system << "\n\n" << prompt.instruction << "\n";
        return 0;
      }
      if (gen_out.empty()) throw DomainError("--out is required unless --print-prompt is given");
      aspects::QuestionSet qs;
      qs.dataset_id = ds.manifest.dataset_id;
      qs.classes = ds.manifest.class_names;
      const auto prompt_digest = util::sha256_hex(prompt.system + "\n" + prompt.instruction);
      if (gen_live) {
        const auto ecfg = config::endpoint_config(c);
        auto ep = make_endpoint(ecfg);
        qs.all_questions = aspects::parse_question_list(chat_text(*ep, ecfg, prompt),
                                                        {ecfg.model, prompt_digest});
      } else if (!gen_response.empty()) {
        qs.all_questions = aspects::parse_question_list(util::read_text_file(gen_response),
                                                        {"response-file", prompt_digest});
      } else {
        qs.all_questions = aspects::offline_generate(qs.classes, n);
      }
      ensure_parent(gen_out);
      aspects::save_question_set(qs, gen_out);
      out << fmt::format("wrote {} candidate questions to {}\n", qs.all_questions.size(), gen_out);
      return 0;
    };
  });

  // select ------------------------------------------------------------------
  ConfigSources sel_src;
  std::string sel_in, sel_out, sel_response;
  bool sel_live = false, sel_print = false;
  auto* sel = app.add_subcommand("select", "Rank and keep the most relevant Q questions");
  add_config_options(sel, sel_src);
  sel->add_option("--questions", sel_in, "Candidate question-set file")->required()->check(
      CLI::ExistingFile);
  add_mapped<std::size_t>(sel, sel_src, "--count", "questions.num_questions",
                          "Number of questions to keep");
  sel->add_option("--response", sel_response, "Parse a saved LLM selection response")
      ->check(CLI::ExistingFile);
  sel->add_flag("--live", sel_live, "Ask the configured chat endpoint to select");
  sel->add_flag("--print-prompt", sel_print, "Print the selection prompt and exit");
  sel->add_option("--out", sel_out, "Output question-set file");
  sel->callback([&] {
    action = [&] {
      const auto c = sel_src.merged();
      const auto qs = aspects::load_question_set(sel_in);
      const auto q = c.get_size("questions.num_questions", 10);
      const auto text = aspects::build_selection_prompt(qs.all_questions, q);
      if (sel_print) {
        out << text << "\n";
        return 0;
      }
      if (sel_out.empty()) throw DomainError("--out is required unless --print-prompt is given");
      aspects::QuestionSet result;
      if (sel_live) {
        const auto ecfg = config::endpoint_config(c);
        auto ep = make_endpoint(ecfg);
        result = aspects::apply_selection(
            qs, chat_text(*ep, ecfg, {"You are a good question maker.", text}), q);
      } else if (!sel_response.empty()) {
        result = aspects::apply_selection(qs, util::read_text_file(sel_response), q);
      } else {
        result = aspects::select_in_order(qs, q);
      }
      ensure_parent(sel_out);
      aspects::save_question_set(result, sel_out);
      out << fmt::format("selected {} questions, digest {}\n", result.num_selected(),
                         result.digest());
      return 0;
    };
  });

  // annotate ----------------------------------------------------------------
  ConfigSources ann_src;
  std::string ann_dataset, ann_questions, ann_store, ann_root;
  auto* ann = app.add_subcommand("annotate", "Annotate aspect targets with a live chat endpoint");
  add_config_options(ann, ann_src);
  ann->add_option("--dataset", ann_dataset, "Dataset directory")->required();
  ann->add_option("--questions", ann_questions, "Selected question-set file")->required();
  ann->add_option("--store", ann_store, "Annotation store (created or resumed)")->required();
  ann->add_option("--image-root", ann_root, "Directory image paths are relative to");
  add_mapped<std::string>(ann, ann_src, "--base-url", "endpoint.base_url", "Endpoint base URL");
  add_mapped<std::string>(ann, ann_src, "--model", "endpoint.model", "Endpoint model name");
  add_mapped<std::size_t>(ann, ann_src, "--max-concurrent", "endpoint.max_concurrent",
                          "Concurrent requests");
  ann->callback([&] {
    action = [&] {
      const auto c = ann_src.merged();
      const auto ds = data::load_dataset(ann_dataset);
      const auto qs = aspects::load_question_set(ann_questions);
      const auto ecfg = config::endpoint_config(c);
      auto ep = make_endpoint(ecfg);
      const auto refs = annotate::image_refs(ds, ann_root.empty() ? fs::path(ann_dataset) : fs::path(ann_root));
      ensure_parent(ann_store);
      const auto rep = annotate::annotate_dataset(ds.manifest.dataset_id, refs, qs, *ep, ecfg, ann_store);
      out << fmt::format("endpoint calls {}, annotated {}, complete {}/{}\n", rep.endpoint_calls,
                         rep.annotated, rep.store.completed(),
                         rep.store.num_images() * rep.store.num_questions());
      for (const auto& f : rep.failed)
        err << fmt::format("failed: image {} question {}: {}\n", f.image_id, f.question_id, f.error);
      return rep.complete() ? 0 : 1;
    };
  });

  // oracle-annotate ---------------------------------------------------------
  ConfigSources ora_src;
  std::string ora_dataset, ora_questions, ora_store;
  auto* ora = app.add_subcommand("oracle-annotate",
                                 "Annotate a synthetic dataset with the latent-attribute oracle");
  add_config_options(ora, ora_src);
  ora->add_option("--dataset", ora_dataset, "Synthetic dataset directory")->required();
  ora->add_option("--questions", ora_questions, "Selected question-set file")->required();
  ora->add_option("--store", ora_store, "Output annotation store")->required();
  add_mapped<double>(ora, ora_src, "--scale", "oracle.scale", "Logit scale");
  add_mapped<double>(ora, ora_src, "--noise", "oracle.noise", "Answer flip probability");
  add_mapped<std::uint64_t>(ora, ora_src, "--seed", "oracle.seed", "Oracle seed");
  ora->callback([&] {
    action = [&] {
      const auto c = ora_src.merged();
      const auto ds = data::load_dataset(ora_dataset);
      const auto qs = aspects::load_question_set(ora_questions);
      if (!ds.manifest.latents) throw DomainError("dataset has no latent attributes");
      const auto spec = annotate::default_oracle(
          ds.manifest.latents->cols(), qs.num_selected(), c.get_double("oracle.scale", 3.0),
          c.get_double("oracle.noise", 0.0), c.get_u64("oracle.seed", 0));
      const auto store = annotate::oracle_annotate(ds, qs, spec);
      ensure_parent(ora_store);
      store.save(ora_store);
      out << fmt::format("annotated {} images x {} questions\n", store.num_images(),
                         store.num_questions());
      return 0;
    };
  });

  // train -------------------------------------------------------------------
  ConfigSources tr_src;
  std::string tr_dataset, tr_store, tr_questions, tr_teacher, tr_out;
  double tr_fraction = 1.0;
  auto* tr = app.add_subcommand("train", "Train a student with the multi-aspect objective");
  add_config_options(tr, tr_src);
  tr->add_option("--dataset", tr_dataset, "Dataset directory")->required();
  tr->add_option("--store", tr_store, "Annotation store with aspect targets");
  tr->add_option("--questions", tr_questions, "Question set the store must match");
  tr->add_option("--teacher", tr_teacher, "Teacher checkpoint; enables logit distillation");
  tr->add_option("--fraction", tr_fraction, "Fraction of training images per class")
      ->check(CLI::Range(0.0, 1.0));
  tr->add_option("--out", tr_out, "Output directory")->required();
  add_mapped<double>(tr, tr_src, "--alpha", "train.alpha", "Aspect loss weight");
  add_mapped<std::size_t>(tr, tr_src, "--epochs", "train.epochs", "Training epochs");
  add_mapped<std::uint64_t>(tr, tr_src, "--seed", "train.seed", "Training seed");
  add_mapped<std::string>(tr, tr_src, "--loss-variant", "train.loss_variant", "bce or kl");
  add_mapped<std::string>(tr, tr_src, "--target-source", "train.target_source",
                          "oracle, endpoint or random");
  add_mapped<std::size_t>(tr, tr_src, "--random-aspects", "questions.num_questions",
                          "Aspect count for random targets");
  tr->callback([&] {
    action = [&] {
      auto c = tr_src.merged();
      auto tcfg = config::train_config(c);
      auto ds = data::load_dataset(tr_dataset);
      if (tr_fraction < 1.0) ds = data::subsample_train(ds, tr_fraction, tcfg.seed);
      std::optional<annotate::AnnotationStore> store;
      if (!tr_store.empty()) {
        store = annotate::AnnotationStore::load(tr_store);
        if (!tr_questions.empty())
          store->check_matches(aspects::load_question_set(tr_questions), ds.manifest.dataset_id);
      }
      const bool random = tcfg.aspect_target_source == train::TargetSource::kRandom;
      std::size_t q = store ? store->num_questions() : 0;
      if (random) q = c.get_size("questions.num_questions", q ? q : 10);
      auto net = build_for(ds, c, q, tcfg.seed);
      std::optional<numerics::Tensor> teacher;
      if (!tr_teacher.empty()) {
        const auto t = model::load_checkpoint(tr_teacher);
        const auto logits = t.predict(ds.gather_features(ds.indices(data::Split::kTrain)));
        auto cls = numerics::Tensor::matrix(logits.rows(), t.num_classes());
        for (std::size_t i = 0; i < logits.rows(); ++i)
          for (std::size_t j = 0; j < t.num_classes(); ++j) cls.at(i, j) = logits.at(i, j);
        teacher = std::move(cls);
        tcfg.kd = train::KdConfig{c.get_double("train.kd_temperature", 4.0),
                                  c.get_double("train.kd_weight", 1.0),
                                  "checkpoint:" + model::checkpoint_digest(t)};
      }
      train::TrainResult res = [&] {
        if (random && q > 0) {
          if (teacher) {
            const auto rt = train::random_targets(ds.indices(data::Split::kTrain).size(), q,
                                                  numerics::derive_seed(tcfg.seed, 0x72616e64));
            return train::train_core(std::move(net), ds, {&rt, &*teacher}, tcfg);
          }
          return train::train_with_random_targets(std::move(net), ds, tcfg);
        }
        const annotate::AnnotationStore* s = store ? &*store : nullptr;
        if (teacher) return train::train_with_kd(std::move(net), ds, *teacher, s, tcfg);
        return train::train(std::move(net), ds, s, tcfg);
      }();
      fs::create_directories(tr_out);
      model::save_checkpoint(res.model, fs::path(tr_out) / "checkpoint.bin");
      res.record.write_tsv(fs::path(tr_out) / "run.tsv");
      if (tr_fraction < 1.0) c.set("train.fraction", util::format_double(tr_fraction));
      config::write_digest(c, tr_out);
      const auto& last = res.record.epochs.back();
      out << fmt::format("trained {} epochs: loss {} test accuracy {}\n", res.record.epochs.size(),
                         util::format_double(last.total), util::format_double(last.test_accuracy));
      return 0;
    };
  });

  // eval --------------------------------------------------------------------
  ConfigSources ev_src;
  std::string ev_dataset, ev_ckpt, ev_store, ev_split = "test", ev_out;
  auto* ev = app.add_subcommand("eval", "Evaluate accuracy and aspect fidelity");
  add_config_options(ev, ev_src);
  ev->add_option("--dataset", ev_dataset, "Dataset directory")->required();
  ev->add_option("--checkpoint", ev_ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
  ev->add_option("--store", ev_store, "Annotation store for aspect comparisons");
  ev->add_option("--split", ev_split, "train or test")->check(CLI::IsMember({"train", "test"}));
  ev->add_option("--out", ev_out, "Directory for metrics.tsv and aspect tables");
  ev->callback([&] {
    action = [&] {
      const auto c = ev_src.merged();
      const auto ds = data::load_dataset(ev_dataset);
      const auto m = model::load_checkpoint(ev_ckpt);
      const auto split = split_of(ev_split);
      const double acc = report::accuracy(m, ds, split);
      std::string metrics = "metric\tvalue\naccuracy\t" + util::format_double(acc) + "\n";
      std::optional<report::AspectComparison> cmp;
      std::optional<annotate::AnnotationStore> store;
      if (!ev_store.empty()) {
        store = annotate::AnnotationStore::load(ev_store);
        cmp = report::compare_model_vs_store(m, *store, ds, split);
        metrics += "aspect_mean_abs_diff\t" + util::format_double(cmp->overall) + "\n";
      }
      out << metrics;
      if (!ev_out.empty()) {
        fs::create_directories(ev_out);
        util::write_text_file(fs::path(ev_out) / "metrics.tsv", metrics);
        if (store) {
          util::write_text_file(fs::path(ev_out) / "aspect_comparison.tsv", report::comparison_tsv(*cmp));
          const auto means = report::aspect_mean_by_class(*store, ds.manifest);
          util::write_text_file(fs::path(ev_out) / "class_means.tsv",
                                report::class_means_tsv(means, ds.manifest, *store));
        }
        config::write_digest(c, ev_out);
      }
      return 0;
    };
  });

  // ablate ------------------------------------------------------------------
  ConfigSources ab_src;
  std::vector<std::string> ab_axes;
  std::string ab_out;
  auto* ab = app.add_subcommand("ablate", "Run an experiment grid on the synthetic benchmark");
  add_config_options(ab, ab_src);
  ab->add_option("--axis", ab_axes,
                 "Axis as name=v1,v2 (alpha, Q, fraction, loss_variant, target_source, kd)");
  add_mapped<std::string>(ab, ab_src, "--seeds", "plan.seeds", "Comma-separated replicate seeds");
  add_mapped<std::size_t>(ab, ab_src, "--jobs", "plan.jobs", "Parallel runs");
  add_mapped<std::size_t>(ab, ab_src, "--epochs", "train.epochs", "Epochs per run");
  ab->add_option("--out", ab_out, "Output directory")->required();
  ab->callback([&] {
    action = [&] {
      auto c = ab_src.merged();
      report::ExperimentPlan plan;
      plan.benchmark_id = c.get_string("plan.benchmark_id", plan.benchmark_id);
      plan.benchmark = config::benchmark_spec(c);
      for (const auto& a : ab_axes) plan.axes.push_back(report::parse_axis(a));
      plan.seeds = parse_seeds(c.get_string("plan.seeds", "0,1,2"));
      plan.jobs = c.get_size("plan.jobs", 1);
      plan.output_dir = ab_out;
      // the axes are part of what the digest must identify
      std::string axes_text;
      for (const auto& a : ab_axes) axes_text += (axes_text.empty() ? "" : ";") + a;
      const auto res = report::run_plan(plan);
      config::write_digest(c, ab_out);
      util::write_text_file(fs::path(ab_out) / "plan.txt",
                            "axes=" + axes_text + "\n" + plan.benchmark.canonical());
      out << report::summary_tsv(res);
      if (res.failures) {
        err << fmt::format("{} run(s) failed; see runs.tsv\n", res.failures);
        return 1;
      }
      return 0;
    };
  });

  // export ------------------------------------------------------------------
  std::string ex_dataset, ex_ckpt, ex_store, ex_split = "test", ex_out;
  auto* ex = app.add_subcommand("export", "Export per-image aspect probabilities");
  ex->add_option("--dataset", ex_dataset, "Dataset directory")->required();
  ex->add_option("--checkpoint", ex_ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
  ex->add_option("--store", ex_store, "Annotation store")->required()->check(CLI::ExistingFile);
  ex->add_option("--split", ex_split, "train or test")->check(CLI::IsMember({"train", "test"}));
  ex->add_option("--out", ex_out, "Output TSV file")->required();
  ex->callback([&] {
    action = [&] {
      const auto ds = data::load_dataset(ex_dataset);
      const auto m = model::load_checkpoint(ex_ckpt);
      const auto store = annotate::AnnotationStore::load(ex_store);
      const auto rows = report::export_aspect_logits(m, store, ds, split_of(ex_split));
      ensure_parent(ex_out);
      util::write_text_file(ex_out, report::aspect_export_tsv(rows));
      out << fmt::format("wrote {} rows to {}\n", rows.size(), ex_out);
      return 0;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    const auto subs = app.get_subcommands();
    out << (subs.empty() ? app.help() : subs.front()->help());
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    const auto subs = app.get_subcommands();
    err << "error: " << e.what() << "\n\n" << (subs.empty() ? app.help() : subs.front()->help());
    return 2;
  }

  try {
    return action ? action() : 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace makd::cli
