// livekt command line: ingest interaction logs, run the streaming evaluation,
// pretrain the in-context model, explain predictions, benchmark scaling.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage/config error.

#include <algorithm>
#include <atomic>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "livekt/baselines.hpp"
#include "livekt/bench.hpp"
#include "livekt/data_model.hpp"
#include "livekt/dataset_io.hpp"
#include "livekt/encoding.hpp"
#include "livekt/error.hpp"
#include "livekt/evaluation.hpp"
#include "livekt/gbdt.hpp"
#include "livekt/minipfn.hpp"
#include "livekt/pretrain.hpp"
#include "livekt/prior.hpp"
#include "livekt/report_io.hpp"
#include "livekt/weights_io.hpp"

namespace {

using namespace livekt;

std::atomic<bool> g_interrupted{false};

void handle_sigint(int) { g_interrupted.store(true); }

std::vector<std::int32_t> parse_int_list(const std::string& csv, const char* what) {
  std::vector<std::int32_t> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw UsageError(std::string("bad ") + what + " value: '" + item + "'");
    }
  }
  if (out.empty()) throw UsageError(std::string("empty ") + what + " list");
  return out;
}

Dataset load_any_dataset(const std::string& path, bool lenient) {
  if (is_dataset_file(path)) return load_dataset(path);
  ParseOptions opts;
  opts.lenient = lenient;
  const InteractionLog log = parse_interactions_file(path, opts);
  return remap_ids(log);
}

// ---- ingest ----

int cmd_ingest(const std::string& input, const std::string& out, bool lenient) {
  ParseOptions opts;
  opts.lenient = lenient;
  const InteractionLog log = parse_interactions_file(input, opts);
  if (log.malformed_rows > 0) {
    std::cerr << "warning: skipped " << log.malformed_rows << " malformed rows\n";
  }
  const Dataset ds = remap_ids(log);
  const Stats st = dataset_stats(ds);
  save_dataset(ds, out);
  std::cout << "students=" << st.n_students << " questions=" << st.n_questions
            << " skills=" << st.n_skills << " interactions=" << st.n_interactions << "\n";
  std::cout << "wrote " << out << "\n";
  return 0;
}

// ---- eval ----

struct ModelOptions {
  LRParams lr;
  GBDTParams gbdt;
  std::string weights_path;
};

std::unique_ptr<Predictor> make_predictor(const std::string& name, const ModelOptions& opts) {
  if (name == "majority") return std::make_unique<MajorityPredictor>();
  if (name == "lr") return std::make_unique<LRPredictor>(opts.lr);
  if (name == "gbdt") return std::make_unique<GBDTPredictor>(opts.gbdt);
  if (name == "minipfn") {
    if (opts.weights_path.empty()) {
      throw UsageError("model 'minipfn' needs --weights (run `livekt pretrain` first)");
    }
    return std::make_unique<MiniPFNPredictor>(load_minipfn_weights(opts.weights_path));
  }
  throw UsageError("unknown model '" + name + "'; valid: majority, lr, gbdt, minipfn");
}

void print_eval_table(const std::vector<EvalEntry>& entries,
                      const std::vector<std::int32_t>& horizons,
                      const std::map<std::string, double>& medians,
                      const std::vector<std::string>& model_order) {
  std::printf("%-10s %-12s %-7s", "model", "median_time", "epochs");
  for (const auto T : horizons) std::printf("  T=%-6d", T);
  std::printf("\n");
  for (const auto& model : model_order) {
    std::printf("%-10s %-12s", model.c_str(), (std::to_string(medians.at(model)) + "s").substr(0, 8).c_str());
    int epochs = 1;
    for (const auto& e : entries) {
      if (e.model == model) epochs = e.epochs;
    }
    std::printf(" %-7d", epochs);
    for (const auto T : horizons) {
      bool found = false;
      for (const auto& e : entries) {
        if (e.model == model && e.T == T) {
          if (e.auc) {
            std::printf("  %.3f  ", *e.auc);
          } else {
            std::printf("  na     ");
          }
          found = true;
        }
      }
      if (!found) std::printf("  -      ");
    }
    std::printf("\n");
  }
}

int cmd_eval(const std::string& data, const std::string& models_csv, const std::string& t_csv,
             double split_ratio, std::uint64_t split_seed, std::uint64_t seed,
             const ModelOptions& mopts, const std::string& out_dir, const std::string& emit_csv,
             const std::string& dataset_name, bool lenient) {
  const Dataset ds = load_any_dataset(data, lenient);
  const Split split = split_students(ds, split_ratio, split_seed);
  LiveSchedule schedule;
  schedule.horizons = parse_int_list(t_csv, "T");
  schedule.validate();

  std::vector<std::string> model_names;
  {
    std::stringstream ss(models_csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) model_names.push_back(item);
    }
  }
  if (model_names.empty()) throw UsageError("no models given");

  std::vector<EvalEntry> all_entries;
  std::map<std::string, double> medians;
  for (const auto& name : model_names) {
    auto predictor = make_predictor(name, mopts);
    const EvalResult result = run_live_eval(*predictor, ds, split, schedule, seed, dataset_name);
    all_entries.insert(all_entries.end(), result.entries.begin(), result.entries.end());
    medians[name] = result.median_seconds;
  }

  print_eval_table(all_entries, schedule.horizons, medians, model_names);
  for (std::size_t i = 0; i < model_names.size(); ++i) {
    for (std::size_t j = i + 1; j < model_names.size(); ++j) {
      const double a = medians[model_names[i]];
      const double b = medians[model_names[j]];
      if (b > 0.0) {
        std::printf("%s/%s time ratio = %.2f\n", model_names[i].c_str(), model_names[j].c_str(),
                    a / b);
      }
    }
  }

  std::filesystem::create_directories(out_dir);
  std::stringstream emit(emit_csv);
  std::string kind;
  while (std::getline(emit, kind, ',')) {
    const std::string base = out_dir + "/livekt_eval.";
    if (kind == "json") {
      write_file_atomic(base + "json", report_to_json(all_entries));
    } else if (kind == "csv") {
      write_file_atomic(base + "csv", report_to_csv(all_entries));
    } else if (kind == "svg") {
      write_file_atomic(base + "svg", report_to_svg(all_entries));
    } else if (!kind.empty()) {
      throw UsageError("unknown emit kind '" + kind + "'; valid: json, csv, svg");
    }
  }
  return 0;
}

// ---- pretrain ----

int cmd_pretrain(const std::string& prior_name, KTPriorParams kt, const SCMPriorParams& scm,
                 TrainParams tp, const MiniPFNConfig& config, const std::string& out,
                 const std::string& curve_path, const std::string& resume) {
  // lowering a max below the default min narrows the range instead of failing
  kt.n_students_min = std::min(kt.n_students_min, kt.n_students_max);
  kt.T_min = std::min(kt.T_min, kt.T_max);

  EpisodeSampler sampler;
  if (prior_name == "kt") {
    sampler = [kt](std::uint64_t s) { return sample_kt_episode(kt, s); };
  } else if (prior_name == "scm") {
    sampler = [scm](std::uint64_t s) { return sample_scm_episode(scm, s); };
  } else {
    throw UsageError("unknown prior '" + prior_name + "'; valid: kt, scm");
  }

  if (tp.checkpoint_path.empty()) tp.checkpoint_path = out + ".ckpt";
  std::signal(SIGINT, handle_sigint);

  const PretrainResult result =
      resume.empty() ? pretrain(sampler, tp, config, &g_interrupted)
                     : pretrain_resume(resume, sampler, tp, &g_interrupted);

  save_minipfn_weights(result.weights, out);
  std::ostringstream curve;
  curve << "episode,smoothed_loss\n";
  for (const auto& pt : result.curve) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.6f", pt.smoothed_loss);
    curve << pt.episode << ',' << buf << '\n';
  }
  write_file_atomic(curve_path.empty() ? out + ".loss.csv" : curve_path, curve.str());

  std::cout << "episodes=" << result.episodes_done << " wrote " << out << "\n";
  if (g_interrupted.load()) {
    std::cout << "interrupted; checkpoint at " << tp.checkpoint_path << "\n";
  }
  return 0;
}

// ---- explain ----

int cmd_explain(const std::string& weights_path, const std::string& data,
                const std::string& student, std::int32_t T, std::size_t k, double split_ratio,
                std::uint64_t split_seed, bool lenient) {
  const Dataset ds = load_any_dataset(data, lenient);
  const std::int32_t dense = ds.student_vocab.lookup(student);
  if (dense == 0) throw UsageError("unknown student ID '" + student + "'");
  const Split split = split_students(ds, split_ratio, split_seed);
  if (split.is_train(dense)) {
    throw UsageError("student '" + student + "' is on the train side of this split");
  }

  const TablePair tables = build_tables(ds, split, T, T, T - 1);
  std::int32_t test_row = -1;
  for (std::int32_t i = 0; i < tables.test.n_rows(); ++i) {
    if (tables.test.rows[static_cast<std::size_t>(i)].student_idx == dense) test_row = i;
  }
  if (test_row < 0) {
    throw UsageError("student '" + student + "' has too little history to encode at T=" +
                     std::to_string(T));
  }

  const MiniPFNWeights weights = load_minipfn_weights(weights_path);
  AttentionRecord record;
  predict_in_context(weights, tables.train, tables.test, &record);
  const auto top = explain(record, static_cast<std::size_t>(test_row), k);
  for (std::size_t rank = 0; rank < top.size(); ++rank) {
    const auto& row = tables.train.rows[static_cast<std::size_t>(top[rank].train_row)];
    std::printf("%zu, %s, %.3f\n", rank + 1, ds.student_vocab.external(row.student_idx).c_str(),
                top[rank].weight);
  }
  return 0;
}

// ---- bench ----

int cmd_bench(const std::string& weights_path, const std::string& sizes_csv,
              const std::string& t_sizes_csv, int fixed_T, int fixed_n, int reps,
              std::uint64_t seed, const std::string& out) {
  MiniPFNWeights weights = weights_path.empty()
                               ? init_weights<float>(MiniPFNConfig{}, seed)
                               : load_minipfn_weights(weights_path);
  const auto n_sizes = parse_int_list(sizes_csv, "sizes");
  const auto t_sizes = parse_int_list(t_sizes_csv, "t-sizes");
  std::vector<int> ns(n_sizes.begin(), n_sizes.end());
  std::vector<int> ts(t_sizes.begin(), t_sizes.end());

  const BenchReport report = run_scaling_bench(weights, ns, fixed_T, ts, fixed_n, 64, reps, seed);
  for (const auto& p : report.points) {
    std::printf("%s=%d median=%.6fs\n", p.kind.c_str(), p.size, p.median_seconds);
  }
  if (report.slope_n) {
    std::printf("slope_N = %.3f\n", *report.slope_n);
  } else {
    std::printf("slope_N = na\n");
  }
  if (report.slope_t) {
    std::printf("slope_T = %.3f\n", *report.slope_t);
  } else {
    std::printf("slope_T = na\n");
  }
  if (!out.empty()) write_file_atomic(out, bench_to_csv(report));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"live knowledge tracing toolkit"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags usable after the subcommand name
  app.set_config("--config", "", "key=value config file; flags override it");

  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "global seed")->capture_default_str();

  // ingest
  auto* ingest = app.add_subcommand("ingest", "parse an interaction CSV into a dataset container");
  std::string in_input, in_out;
  bool lenient = false;
  ingest->add_option("--input", in_input, "interaction CSV")->required();
  ingest->add_option("--out", in_out, "output .lktd path")->required();
  ingest->add_flag("--lenient", lenient, "skip malformed rows instead of failing");

  // eval
  auto* eval = app.add_subcommand("eval", "run the streaming evaluation");
  std::string ev_data, ev_models = "majority,lr,gbdt", ev_T = "5,10,15,20";
  std::string ev_out = ".", ev_emit = "json,csv", ev_name = "dataset", ev_weights;
  double ev_ratio = 0.8;
  std::uint64_t ev_split_seed = 42;
  ModelOptions mopts;
  eval->add_option("--data", ev_data, "dataset container or CSV")->required();
  eval->add_option("--models", ev_models, "comma list: majority,lr,gbdt,minipfn")->capture_default_str();
  eval->add_option("--T", ev_T, "comma list of horizons")->capture_default_str();
  eval->add_option("--split-ratio", ev_ratio, "train fraction")->capture_default_str();
  eval->add_option("--split-seed", ev_split_seed, "student split seed")->capture_default_str();
  eval->add_option("--weights", ev_weights, "minipfn weights file");
  eval->add_option("--out", ev_out, "output directory")->capture_default_str();
  eval->add_option("--emit", ev_emit, "comma list: json,csv,svg")->capture_default_str();
  eval->add_option("--dataset-name", ev_name, "name used in reports")->capture_default_str();
  eval->add_flag("--lenient", lenient, "lenient CSV parsing");
  eval->add_option("--lr-epochs", mopts.lr.epochs, "LR training passes")->capture_default_str();
  eval->add_option("--lr-rate", mopts.lr.learning_rate, "LR base step size")->capture_default_str();
  eval->add_option("--lr-l2", mopts.lr.l2, "LR L2 coefficient")->capture_default_str();
  bool lr_warm = false;
  eval->add_flag("--lr-warm-start", lr_warm, "continue LR weights across horizons");
  eval->add_option("--gbdt-trees", mopts.gbdt.n_trees, "boosting rounds")->capture_default_str();
  eval->add_option("--gbdt-depth", mopts.gbdt.max_depth, "tree depth")->capture_default_str();
  eval->add_option("--gbdt-rate", mopts.gbdt.learning_rate, "shrinkage")->capture_default_str();
  eval->add_option("--gbdt-min-leaf", mopts.gbdt.min_samples_leaf, "min rows per leaf")->capture_default_str();

  // pretrain
  auto* pre = app.add_subcommand("pretrain", "pretrain minipfn on a synthetic prior");
  std::string pr_prior = "kt", pr_out = "minipfn.lktw", pr_curve, pr_resume, pr_ckpt;
  TrainParams tp;
  MiniPFNConfig config;
  KTPriorParams kt_prior;
  SCMPriorParams scm_prior;
  pre->add_option("--prior", pr_prior, "episode prior: kt or scm")->capture_default_str();
  pre->add_option("--episodes", tp.n_episodes, "episodes to train on")->capture_default_str();
  pre->add_option("--batch", tp.batch_episodes, "episodes per optimizer step")->capture_default_str();
  pre->add_option("--lr", tp.learning_rate, "learning rate")->capture_default_str();
  pre->add_option("--clip-norm", tp.clip_norm, "gradient norm clip")->capture_default_str();
  pre->add_option("--checkpoint-interval", tp.checkpoint_interval, "episodes between checkpoints")->capture_default_str();
  pre->add_option("--checkpoint", pr_ckpt, "checkpoint path (default <out>.ckpt)");
  pre->add_option("--resume", pr_resume, "resume from a checkpoint file");
  pre->add_option("--out", pr_out, "output weights path")->capture_default_str();
  pre->add_option("--curve", pr_curve, "loss curve CSV path (default <out>.loss.csv)");
  pre->add_option("--d-model", config.d_model, "model width")->capture_default_str();
  pre->add_option("--n-heads", config.n_heads, "attention heads")->capture_default_str();
  pre->add_option("--n-blocks", config.n_blocks, "attention blocks")->capture_default_str();
  pre->add_option("--d-ff", config.d_ff, "feed-forward width")->capture_default_str();
  pre->add_option("--dropout", config.dropout, "training dropout")->capture_default_str();
  pre->add_option("--prior-students-max", kt_prior.n_students_max, "max students per episode")->capture_default_str();
  pre->add_option("--prior-t-max", kt_prior.T_max, "max horizon per episode")->capture_default_str();

  // explain
  auto* expl = app.add_subcommand("explain", "top-k influential train students for a prediction");
  std::string ex_weights, ex_data, ex_student;
  std::int32_t ex_T = 10;
  std::size_t ex_k = 5;
  double ex_ratio = 0.8;
  std::uint64_t ex_split_seed = 42;
  expl->add_option("--weights", ex_weights, "minipfn weights file")->required();
  expl->add_option("--data", ex_data, "dataset container or CSV")->required();
  expl->add_option("--student", ex_student, "external student ID (test side)")->required();
  expl->add_option("--T", ex_T, "horizon")->capture_default_str();
  expl->add_option("--k", ex_k, "how many students to list")->capture_default_str();
  expl->add_option("--split-ratio", ex_ratio, "train fraction")->capture_default_str();
  expl->add_option("--split-seed", ex_split_seed, "student split seed")->capture_default_str();
  expl->add_flag("--lenient", lenient, "lenient CSV parsing");

  // bench
  auto* bench = app.add_subcommand("bench", "time in-context prediction across table sizes");
  std::string be_weights, be_sizes = "128,256,512,1024", be_tsizes = "5,10,15,20", be_out;
  int be_T = 10, be_n = 256, be_reps = 5;
  bench->add_option("--weights", be_weights, "minipfn weights (default: fresh init)");
  bench->add_option("--sizes", be_sizes, "train-row counts")->capture_default_str();
  bench->add_option("--t-sizes", be_tsizes, "horizons")->capture_default_str();
  bench->add_option("--fixed-T", be_T, "horizon for the row sweep")->capture_default_str();
  bench->add_option("--fixed-N", be_n, "train rows for the horizon sweep")->capture_default_str();
  bench->add_option("--reps", be_reps, "runs per cell (median)")->capture_default_str();
  bench->add_option("--out", be_out, "CSV output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*ingest) return cmd_ingest(in_input, in_out, lenient);
    if (*eval) {
      mopts.lr.seed = seed;
      mopts.lr.warm_start = lr_warm;
      mopts.gbdt.seed = seed;
      mopts.weights_path = ev_weights;
      return cmd_eval(ev_data, ev_models, ev_T, ev_ratio, ev_split_seed, seed, mopts, ev_out,
                      ev_emit, ev_name, lenient);
    }
    if (*pre) {
      tp.seed = seed;
      tp.checkpoint_path = pr_ckpt;
      return cmd_pretrain(pr_prior, kt_prior, scm_prior, tp, config, pr_out, pr_curve, pr_resume);
    }
    if (*expl) {
      return cmd_explain(ex_weights, ex_data, ex_student, ex_T, ex_k, ex_ratio, ex_split_seed,
                         lenient);
    }
    if (*bench) {
      return cmd_bench(be_weights, be_sizes, be_tsizes, be_T, be_n, be_reps, seed, be_out);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    // Parse/format failures on user input are config errors.
    const std::string msg = e.what();
    if (msg.find("parse error") != std::string::npos ||
        msg.find("missing or wrong header") != std::string::npos ||
        msg.find("missing header") != std::string::npos) {
      return 2;
    }
    return 1;
  }
  return 0;
}
