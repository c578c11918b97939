/*
 * Copyright 2026 The MOOMIN Authors.
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

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "moomin/moomin.hpp"

namespace {

using namespace moomin;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string fmt_opt(const std::optional<double>& v) {
  return v ? fmt(*v) : "nan";
}

/// Writes to --out when given, stdout otherwise.
class OutputSink {
 public:
  explicit OutputSink(const std::string& path) {
    if (!path.empty()) {
      file_.open(path, std::ios::binary);
      if (!file_) throw DataError("cannot write '" + path + "'");
    }
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

struct BundleFlags {
  std::string graph, proteins, cells, synergy;
  std::vector<std::string> molecules;

  void add_to(CLI::App* cmd, bool with_synergy) {
    cmd->add_option("--graph", graph, "drug-protein edge list (TSV)")
        ->required();
    cmd->add_option("--molecules", molecules,
                    "molecule files: .smi, fallback text or directories")
        ->required();
    cmd->add_option("--proteins", proteins, "protein feature CSV")->required();
    cmd->add_option("--cells", cells, "cell line TSV")->required();
    if (with_synergy) {
      cmd->add_option("--synergy", synergy, "labeled synergy CSV")->required();
    }
  }

  DatasetBundle load(bool with_synergy) const {
    BundlePaths paths;
    paths.graph = graph;
    paths.molecules = molecules;
    paths.proteins = proteins;
    paths.cells = cells;
    if (with_synergy) {
      paths.synergy = synergy;
      return load_bundle(paths);
    }
    // no synergy file: validate the rest against an empty record set
    namespace fs = std::filesystem;
    const std::string stub =
        (fs::temp_directory_path() /
         ("moomin-empty-" + std::to_string(::getpid()) + ".csv"))
            .string();
    std::ofstream(stub) << "drug_a,drug_b,cell,label\n";
    paths.synergy = stub;
    DatasetBundle bundle = load_bundle(paths);
    fs::remove(stub);
    return bundle;
  }
};

struct ModeFlags {
  std::string mode = "exact";
  int samples = 128;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--mode", mode, "representation route")
        ->check(CLI::IsMember({"exact", "sampled"}))
        ->capture_default_str();
    cmd->add_option("--samples", samples, "walks per drug in sampled mode")
        ->capture_default_str();
  }

  Mode parsed() const {
    return mode == "exact" ? Mode::Exact : Mode::Sampled;
  }
};

std::vector<SynergyRecord> load_triples(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::vector<SynergyRecord> records;
  std::string line;
  std::size_t lineno = 0;
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
      if (c == ',') {
        fields.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    fields.push_back(cur);
    if (!saw_header) {
      if (fields.size() < 3 || fields[0] != "drug_a" || fields[1] != "drug_b" ||
          fields[2] != "cell") {
        throw ParseError(path + ": line " + std::to_string(lineno) +
                         ": expected header 'drug_a,drug_b,cell[,label]'");
      }
      saw_header = true;
      continue;
    }
    if (fields.size() < 3) {
      throw ParseError(path + ": line " + std::to_string(lineno) +
                       ": expected at least 3 fields");
    }
    SynergyRecord rec{fields[0], fields[1], fields[2], 0};
    if (fields.size() >= 4 && fields[3] == "1") rec.label = 1;
    records.push_back(rec);
  }
  if (!saw_header) throw ParseError(path + ": missing header");
  return records;
}

std::vector<int> parse_ladder(const std::string& text, const char* what) {
  std::vector<int> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw ArgumentError(std::string(what) + ": '" + item +
                          "' is not an integer");
    }
    if (out.back() < 1) {
      throw ArgumentError(std::string(what) + ": entries must be >= 1");
    }
  }
  if (out.empty()) throw ArgumentError(std::string(what) + ": empty ladder");
  return out;
}

int run_synth(const SynthSpec& spec, const std::string& out_dir) {
  DatasetBundle bundle = synth_dataset(spec, out_dir);
  std::cout << "wrote " << out_dir << ": " << bundle.graph.drug_count()
            << " drugs, " << bundle.graph.protein_count() << " proteins, "
            << bundle.graph.edge_count() << " edges, " << bundle.synergy.size()
            << " records\n";
  return 0;
}

int run_train(const BundleFlags& bundle_flags, const TrainConfig& cfg,
              const std::string& out_dir) {
  DatasetBundle bundle = bundle_flags.load(true);
  std::filesystem::create_directories(out_dir);
  const std::string history_path = out_dir + "/history.csv";
  std::ofstream history(history_path, std::ios::binary);
  if (!history) throw DataError("cannot write '" + history_path + "'");
  history << "epoch,train_loss,val_roc_auc,val_pr_auc,val_f1\n";

  TrainResult result = train(
      cfg, bundle.synergy, bundle.graph, bundle.features, bundle.cell_ids(),
      [&](const EpochStats& stats, const Model&) {
        history << stats.epoch << ',' << fmt(stats.train_loss) << ','
                << fmt_opt(stats.val_roc_auc) << ','
                << fmt_opt(stats.val_pr_auc) << ',' << fmt_opt(stats.val_f1)
                << '\n';
        history.flush();
        return true;
      });

  const std::string ckpt_path = out_dir + "/checkpoint.txt";
  save_checkpoint(result.model, ckpt_path);
  std::cout << "trained " << result.history.size() << " epochs; checkpoint at "
            << ckpt_path << "\n";
  if (!result.history.empty() && result.history.back().val_roc_auc) {
    std::cout << "final held-out roc_auc "
              << fmt(*result.history.back().val_roc_auc) << "\n";
  }
  return 0;
}

int run_score(const BundleFlags& bundle_flags, const std::string& ckpt,
              const std::string& triples_path, const ModeFlags& mode,
              std::uint64_t seed, int threads, const std::string& out) {
  DatasetBundle bundle = bundle_flags.load(false);
  Model model = load_checkpoint(ckpt);
  std::vector<SynergyRecord> triples = load_triples(triples_path);
  ScoreConfig sc;
  sc.mode = mode.parsed();
  sc.samples = mode.samples;
  sc.seed = seed;
  sc.threads = threads;
  const std::vector<double> scores =
      score_records(model, bundle.graph, bundle.features, triples, sc);
  OutputSink sink(out);
  sink.stream() << "drug_a,drug_b,cell,score\n";
  for (std::size_t i = 0; i < triples.size(); ++i) {
    sink.stream() << triples[i].drug_a << ',' << triples[i].drug_b << ','
                  << triples[i].cell << ',' << fmt(scores[i]) << '\n';
  }
  return 0;
}

int run_eval(const BundleFlags& bundle_flags, const std::string& ckpt,
             const ModeFlags& mode, std::uint64_t seed, double threshold,
             const std::string& group_by, int threads, const std::string& out) {
  DatasetBundle bundle = bundle_flags.load(true);
  Model model = load_checkpoint(ckpt);
  ScoreConfig sc;
  sc.mode = mode.parsed();
  sc.samples = mode.samples;
  sc.seed = seed;
  sc.threads = threads;
  GroupBy gb = GroupBy::None;
  if (group_by == "tissue") gb = GroupBy::Tissue;
  else if (group_by == "molsize") gb = GroupBy::MolSize;
  const auto groups =
      evaluate_grouped(model, bundle, bundle.synergy, sc, threshold, gb);
  OutputSink sink(out);
  sink.stream() << "group,n,roc_auc,pr_auc,f1,tp,fp,tn,fn,n_pos,n_neg\n";
  for (const auto& [key, rep] : groups) {
    sink.stream() << key << ',' << (rep.n_pos + rep.n_neg) << ','
                  << fmt_opt(rep.roc_auc) << ',' << fmt_opt(rep.pr_auc) << ','
                  << fmt(rep.f1) << ',' << rep.tp << ',' << rep.fp << ','
                  << rep.tn << ',' << rep.fn << ',' << rep.n_pos << ','
                  << rep.n_neg << '\n';
  }
  return 0;
}

int run_walkcheck(const BundleFlags& bundle_flags, const std::string& drug,
                  int r, int samples, int trials, std::uint64_t seed,
                  const std::string& out) {
  DatasetBundle bundle = bundle_flags.load(true);
  ModelConfig mc;
  mc.r = r;
  mc.protein_dim = bundle.protein_dim();
  mc.cell_ids = bundle.cell_ids();
  Model model = Model::init(mc, seed);
  auto rows = walkcheck(model, bundle.graph, bundle.features, drug, r, samples,
                        trials, seed);
  OutputSink sink(out);
  sink.stream() << "s,mean_rel_err,max_rel_err,std_rel_err\n";
  for (const auto& row : rows) {
    sink.stream() << row.samples << ',' << fmt(row.mean_rel_err) << ','
                  << fmt(row.max_rel_err) << ',' << fmt(row.std_rel_err)
                  << '\n';
  }
  return 0;
}

int run_gradcheck(std::uint64_t seed) {
  bool all_ok = true;
  for (int r : {0, 2}) {
    GradCheckReport report = gradcheck(r, seed);
    const bool ok = report.max_rel_err < 1e-4;
    all_ok = all_ok && ok;
    std::cout << "gradcheck r=" << r << ": " << report.checked
              << " parameters, max rel err " << fmt(report.max_rel_err) << " "
              << (ok ? "PASS" : "FAIL") << "\n";
    for (const auto& entry : report.per_param) {
      std::cout << "  " << entry.param << " " << fmt(entry.max_rel_err) << "\n";
    }
  }
  std::cout << (all_ok ? "gradcheck PASS" : "gradcheck FAIL") << "\n";
  return 0;  // failures are report entries, not process errors
}

int run_bench(const BundleFlags& bundle_flags, int r,
              const std::string& batches, const std::string& samples,
              int reps, std::uint64_t seed, const std::string& out) {
  DatasetBundle bundle = bundle_flags.load(true);
  ModelConfig mc;
  mc.r = r;
  mc.protein_dim = bundle.protein_dim();
  mc.cell_ids = bundle.cell_ids();
  Model model = Model::init(mc, seed);
  auto rows = bench(model, bundle, parse_ladder(batches, "--batches"),
                    parse_ladder(samples, "--samples-ladder"), reps, seed);
  OutputSink sink(out);
  sink.stream() << "mode,batch,samples,mean_seconds,std_seconds,relative_pct\n";
  for (const auto& row : rows) {
    sink.stream() << row.mode << ',' << row.batch << ',' << row.samples << ','
                  << fmt(row.mean_seconds) << ',' << fmt(row.std_seconds)
                  << ',' << fmt(row.relative_pct) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MOOMIN drug-synergy pipeline"};
  app.require_subcommand(1);

  // synth
  SynthSpec synth_spec;
  std::string synth_out;
  std::string synth_rule = "shared-protein";
  auto* synth_cmd =
      app.add_subcommand("synth", "generate a synthetic dataset");
  synth_cmd->add_option("--out", synth_out, "output directory")->required();
  synth_cmd->add_option("--n-drugs", synth_spec.n_drugs)->capture_default_str();
  synth_cmd->add_option("--n-proteins", synth_spec.n_proteins)
      ->capture_default_str();
  synth_cmd->add_option("--n-cells", synth_spec.n_cells)->capture_default_str();
  synth_cmd->add_option("--edge-prob", synth_spec.edge_prob)
      ->capture_default_str();
  synth_cmd->add_option("--n-records", synth_spec.n_records)
      ->capture_default_str();
  synth_cmd->add_option("--rule", synth_rule, "planted labeling rule")
      ->check(CLI::IsMember({"shared-protein", "molecular", "mixed"}))
      ->capture_default_str();
  synth_cmd->add_option("--noise-rate", synth_spec.noise_rate)
      ->capture_default_str();
  synth_cmd->add_option("--seed", synth_spec.seed)->capture_default_str();
  synth_cmd->add_option("--protein-dim", synth_spec.protein_dim)
      ->capture_default_str();

  // train
  BundleFlags train_bundle;
  ModeFlags train_mode;
  TrainConfig train_cfg;
  std::string train_out;
  auto* train_cmd = app.add_subcommand("train", "train a model");
  train_bundle.add_to(train_cmd, true);
  train_mode.add_to(train_cmd);
  train_cmd->add_option("--out", train_out, "output directory")->required();
  train_cmd->add_option("--r", train_cfg.r, "max proximity scale")
      ->capture_default_str();
  train_cmd->add_option("--batch-size", train_cfg.batch_size)
      ->capture_default_str();
  train_cmd->add_option("--lr", train_cfg.lr)->capture_default_str();
  train_cmd->add_option("--weight-decay", train_cfg.weight_decay)
      ->capture_default_str();
  train_cmd->add_option("--epochs", train_cfg.epochs)->capture_default_str();
  train_cmd->add_option("--train-ratio", train_cfg.train_ratio)
      ->capture_default_str();
  train_cmd->add_option("--seed", train_cfg.seed)->capture_default_str();
  train_cmd->add_option("--threshold", train_cfg.threshold)
      ->capture_default_str();
  train_cmd->add_flag("--cv-early-stop", train_cfg.cv_epoch_selection,
                      "pick the epoch count by cross-validation inside the "
                      "training split");
  train_cmd
      ->add_option("--threads", train_cfg.threads,
                   "workers for held-out evaluation; updates stay "
                   "single-threaded")
      ->capture_default_str();

  // score
  BundleFlags score_bundle;
  ModeFlags score_mode;
  std::string score_ckpt, score_triples, score_out;
  std::uint64_t score_seed = 0;
  int score_threads = 1;
  auto* score_cmd = app.add_subcommand("score", "score drug pair triples");
  score_bundle.add_to(score_cmd, false);
  score_mode.add_to(score_cmd);
  score_cmd->add_option("--checkpoint", score_ckpt)->required();
  score_cmd->add_option("--triples", score_triples,
                        "CSV with drug_a,drug_b,cell[,label]")
      ->required();
  score_cmd->add_option("--seed", score_seed)->capture_default_str();
  score_cmd->add_option("--threads", score_threads)->capture_default_str();
  score_cmd->add_option("--out", score_out, "output CSV (stdout if absent)");

  // eval
  BundleFlags eval_bundle;
  ModeFlags eval_mode;
  std::string eval_ckpt, eval_group, eval_out;
  std::uint64_t eval_seed = 0;
  double eval_threshold = 0.5;
  int eval_threads = 1;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_bundle.add_to(eval_cmd, true);
  eval_mode.add_to(eval_cmd);
  eval_cmd->add_option("--checkpoint", eval_ckpt)->required();
  eval_cmd->add_option("--seed", eval_seed)->capture_default_str();
  eval_cmd->add_option("--threshold", eval_threshold)->capture_default_str();
  eval_cmd->add_option("--group-by", eval_group, "tissue or molsize")
      ->check(CLI::IsMember({"tissue", "molsize"}));
  eval_cmd->add_option("--threads", eval_threads)->capture_default_str();
  eval_cmd->add_option("--out", eval_out, "output CSV (stdout if absent)");

  // walkcheck
  BundleFlags walk_bundle;
  std::string walk_drug, walk_out;
  int walk_r = 2, walk_samples = 128, walk_trials = 10;
  std::uint64_t walk_seed = 0;
  auto* walk_cmd = app.add_subcommand(
      "walkcheck", "sampled-vs-exact representation convergence");
  walk_bundle.add_to(walk_cmd, true);
  walk_cmd->add_option("--drug", walk_drug)->required();
  walk_cmd->add_option("--r", walk_r)->capture_default_str();
  walk_cmd->add_option("--samples", walk_samples, "top of the doubling ladder")
      ->capture_default_str();
  walk_cmd->add_option("--trials", walk_trials)->capture_default_str();
  walk_cmd->add_option("--seed", walk_seed)->capture_default_str();
  walk_cmd->add_option("--out", walk_out, "output CSV (stdout if absent)");

  // gradcheck
  std::uint64_t grad_seed = 2026;
  auto* grad_cmd = app.add_subcommand(
      "gradcheck", "finite-difference check of the full computation graph");
  grad_cmd->add_option("--seed", grad_seed)->capture_default_str();

  // bench
  BundleFlags bench_bundle;
  std::string bench_batches = "1,2,4,8,16,32", bench_samples = "2,8,32,128";
  std::string bench_out;
  int bench_r = 1, bench_reps = 100;
  std::uint64_t bench_seed = 0;
  auto* bench_cmd =
      app.add_subcommand("bench", "forward+backward step wall-clock");
  bench_bundle.add_to(bench_cmd, true);
  bench_cmd->add_option("--r", bench_r)->capture_default_str();
  bench_cmd->add_option("--batches", bench_batches, "comma-separated ladder")
      ->capture_default_str();
  bench_cmd->add_option("--samples-ladder", bench_samples,
                        "comma-separated ladder")
      ->capture_default_str();
  bench_cmd->add_option("--reps", bench_reps, "repetitions per cell")
      ->capture_default_str();
  bench_cmd->add_option("--seed", bench_seed)->capture_default_str();
  bench_cmd->add_option("--out", bench_out, "output CSV (stdout if absent)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;  // usage problems count as validation errors
  }

  try {
    if (synth_cmd->parsed()) {
      synth_spec.planted_rule = planted_rule_from_name(synth_rule);
      return run_synth(synth_spec, synth_out);
    }
    if (train_cmd->parsed()) {
      train_cfg.mode = train_mode.parsed();
      train_cfg.samples = train_mode.samples;
      return run_train(train_bundle, train_cfg, train_out);
    }
    if (score_cmd->parsed()) {
      return run_score(score_bundle, score_ckpt, score_triples, score_mode,
                       score_seed, score_threads, score_out);
    }
    if (eval_cmd->parsed()) {
      return run_eval(eval_bundle, eval_ckpt, eval_mode, eval_seed,
                      eval_threshold, eval_group, eval_threads, eval_out);
    }
    if (walk_cmd->parsed()) {
      return run_walkcheck(walk_bundle, walk_drug, walk_r, walk_samples,
                           walk_trials, walk_seed, walk_out);
    }
    if (grad_cmd->parsed()) {
      return run_gradcheck(grad_seed);
    }
    if (bench_cmd->parsed()) {
      return run_bench(bench_bundle, bench_r, bench_batches, bench_samples,
                       bench_reps, bench_seed, bench_out);
    }
  } catch (const InternalError& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
