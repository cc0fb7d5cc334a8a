// Command-line entry point: generate | ingest | run | report | verify.
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "sampleval/dataset.hpp"
#include "sampleval/harness.hpp"
#include "sampleval/verify.hpp"

using namespace sampleval;

namespace {

void print_stats(const char* label, const SplitStatistics& s) {
  std::cout << label << ": users=" << s.users << " items=" << s.items << " positives=" << s.positives
            << " negatives=" << s.negatives << " density=" << s.density << "\n";
}

void print_bundle(const DatasetBundle& b) {
  print_stats("train (source rows)", b.report.observed_train);
  print_stats("test  (source rows)", b.report.observed_test);
  print_stats("train (bundle)", train_statistics(b));
  print_stats("test  (bundle)", test_statistics(b));
  std::cout << "holdout cells: " << b.holdout.size() << " (redraws " << b.report.holdout_redraws << ")\n";
  for (const auto& w : b.report.warnings) std::cout << "warning: " << w << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sampled offline-evaluation reliability experiments"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "Write a synthetic dataset bundle");
  SynthConfig synth;
  std::uint64_t gen_seed = 20240501;
  std::string gen_out;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--seed", gen_seed, "Generation seed");
  gen->add_option("--test-users", synth.n_test_users);
  gen->add_option("--train-users", synth.n_train_users);
  gen->add_option("--items", synth.n_items);
  gen->add_option("--latent-dim", synth.latent_dim);
  gen->add_option("--positive-rate", synth.positive_rate_target);
  gen->add_option("--train-density", synth.train_density_target);
  gen->add_option("--skew", synth.popularity_skew_exponent, "Popularity skew exponent of the train log");
  gen->add_option("--label-noise", synth.label_noise);
  gen->add_option("--holdout-fraction", synth.holdout_fraction);

  // ingest
  auto* ing = app.add_subcommand("ingest", "Convert a fully observed dataset into a bundle");
  IngestPaths paths;
  std::string ing_test, ing_train, ing_holdout, ing_kuairec, ing_out;
  ing->add_option("--test", ing_test, "Fully observed test CSV (user_id,item_id,label)");
  ing->add_option("--train", ing_train, "Train log CSV (user_id,item_id,label[,weight])");
  ing->add_option("--holdout", ing_holdout, "Optional holdout CSV (user_id,item_id)");
  ing->add_option("--kuairec", ing_kuairec, "KuaiRec data directory (small_matrix.csv, big_matrix.csv)");
  ing->add_option("--holdout-fraction", paths.holdout_fraction);
  ing->add_option("--seed", paths.holdout_seed, "Holdout seed");
  ing->add_option("--out", ing_out, "Output directory")->required();

  // run
  auto* run = app.add_subcommand("run", "Execute the scenario grid");
  std::string run_config;
  RunOptions run_opts;
  std::uint64_t run_seed = 0;
  std::size_t search_iterations = 0;
  std::size_t run_workers = 0;
  std::string run_out;
  run->add_option("--config", run_config, "Run configuration JSON")->required()->check(CLI::ExistingFile);
  auto* seed_opt = run->add_option("--seed", run_seed, "Master seed (overrides the config)");
  auto* workers_opt = run->add_option("--workers", run_workers, "Worker threads (overrides the config)");
  auto* out_opt = run->add_option("--out", run_out, "Output directory (overrides the config)");
  run->add_flag("--reuse-models", run_opts.reuse_models, "Load models saved by an earlier run in the same directory");
  auto* search_opt = run->add_option("--search-iterations", search_iterations, "Random-search draws per tuned model")
      ->check(CLI::PositiveNumber);
  bool quiet = false;
  run->add_flag("--quiet", quiet, "No progress output");

  // report
  auto* rep = app.add_subcommand("report", "Emit figure CSVs and SVG charts from a run directory");
  std::string rep_run, rep_out, rep_fig = "all";
  rep->add_option("--run", rep_run, "Run output directory")->required()->check(CLI::ExistingDirectory);
  rep->add_option("--figure", rep_fig, "fig2 | fig3 | fig4 | fig5 | all");
  rep->add_option("--out", rep_out, "Report directory (default <run>/report)");

  // verify
  auto* ver = app.add_subcommand("verify", "Run the property suites and print a JSON summary");
  VerifyOptions vopts;
  bool ver_quick = false;
  ver->add_option("--seed", vopts.seed);
  ver->add_flag("--quick", ver_quick, "Skip the grid determinism suite");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const auto b = generate_synthetic(synth, gen_seed);
      write_bundle(b, gen_out);
      print_bundle(b);
      std::cout << "wrote " << gen_out << "\n";
      return 0;
    }
    if (*ing) {
      DatasetBundle b;
      if (!ing_kuairec.empty()) {
        b = ingest_kuairec(ing_kuairec, paths.holdout_fraction, paths.holdout_seed);
      } else {
        if (ing_test.empty() || ing_train.empty()) throw Error("ingest: pass --test and --train, or --kuairec");
        paths.test = ing_test;
        paths.train = ing_train;
        if (!ing_holdout.empty()) paths.holdout = ing_holdout;
        b = ingest_fully_observed(paths);
      }
      write_bundle(b, ing_out);
      print_bundle(b);
      std::cout << "wrote " << ing_out << "\n";
      return 0;
    }
    if (*run) {
      const auto cfg = load_run_config(run_config);
      if (*seed_opt) run_opts.seed = run_seed;
      if (*workers_opt) run_opts.workers = run_workers;
      if (*out_opt) run_opts.out_dir = run_out;
      if (*search_opt) run_opts.search_iterations = search_iterations;
      if (!quiet) run_opts.progress = &std::cerr;
      const auto summary = run_grid(cfg, run_opts);
      std::cout << summary.scenarios << " scenarios, " << summary.failed << " failed, " << summary.seconds
                << " s -> " << summary.out_dir.string() << "\n";
      return summary.failed == 0 ? 0 : 1;
    }
    if (*rep) {
      const std::filesystem::path out = rep_out.empty() ? std::filesystem::path(rep_run) / "report" : std::filesystem::path(rep_out);
      std::vector<Figure> figs;
      if (rep_fig == "all") {
        figs = {Figure::fig2, Figure::fig3, Figure::fig4, Figure::fig5};
      } else if (auto f = parse_figure(rep_fig)) {
        figs = {*f};
      } else {
        throw Error("report: unknown figure '" + rep_fig + "'");
      }
      for (auto f : figs) {
        const auto files = emit_report(rep_run, f, out);
        std::cout << files.csv.string() << " + " << files.charts.size() << " charts\n";
      }
      return 0;
    }
    if (*ver) {
      vopts.include_determinism = !ver_quick;
      const auto suites = run_verify(vopts);
      const auto j = to_json(suites);
      std::cout << j.dump(2) << "\n";
      return j.at("ok").get<bool>() ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
