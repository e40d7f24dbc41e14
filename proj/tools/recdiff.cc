#include <CLI11.hpp>

#include <iostream>

#include "recdiff/commands.h"
#include "recdiff/errors.h"
#include "recdiff/synthetic.h"

namespace {

using namespace recdiff;

int run(int argc, char** argv) {
  CLI::App app{"Sequential recommender with semantic fusion and intent-conditioned diffusion"};
  app.require_subcommand(1);

  PrepareOptions prep;
  std::string raw, out, items, vectors;
  auto* prepare = app.add_subcommand("prepare", "Filter, split and stratify a raw interaction log");
  prepare->add_option("--raw", raw, "Raw interactions (csv, jsonl or dat)")->required();
  prepare->add_option("--kind", prep.kind, "Dataset kind: beauty, sports, toys, yelp, ml1m")->required();
  prepare->add_option("--out", out, "Output directory")->required();
  prepare->add_option("--format", prep.format, "Input format (default: from extension)");
  prepare->add_option("--items", items, "Item attributes, JSON-lines with an \"item\" key");
  prepare->add_option("--item-vectors", vectors, "Semantic vectors, JSON-lines {item, vector}");
  prepare->add_option("--min-count", prep.min_count, "Minimum interactions per user and item");
  prepare->add_option("--tail-fraction", prep.tail_fraction, "Share of least popular items labelled tail");
  prepare->add_option("--cold-threshold", prep.cold_threshold, "Max training length of a cold user");

  std::string prompts;
  int dim = 64;
  std::uint64_t seed = 0;
  auto* embed = app.add_subcommand("embed-pseudo", "Deterministic offline semantic embeddings from prompts");
  embed->add_option("--prompts", prompts, "prompts.jsonl")->required();
  embed->add_option("--dim", dim, "Embedding width")->required();
  embed->add_option("--seed", seed, "Seed");
  embed->add_option("--out", out, "Output (.json header + .f32 payload, or .csv)")->required();

  std::string config;
  std::vector<std::string> overrides;
  auto* train = app.add_subcommand("train", "Train a model");
  train->add_option("--config", config, "YAML config")->required();
  train->add_option("--override", overrides, "Dotted key=value override (repeatable)");

  EvaluateOptions ev;
  std::string checkpoint, data;
  bool mask = false;
  auto* evaluate = app.add_subcommand("evaluate", "Score the test split and write a report");
  evaluate->add_option("--checkpoint", checkpoint, "checkpoint.bin")->required();
  evaluate->add_option("--data", data, "Prepared directory or dataset.json")->required();
  evaluate->add_option("--out", out, "Report directory")->required();
  evaluate->add_flag("--projection", ev.projection, "Also write projection.csv (2-D PCA)");
  auto* mask_flag = evaluate->add_flag("--mask-history", mask, "Exclude seen items from the candidates");

  std::string grid;
  bool parallel = false;
  auto* ablate = app.add_subcommand("ablate", "Train and evaluate each ablation variant");
  ablate->add_option("--config", config, "YAML config")->required();
  ablate->add_option("--grid", grid, "YAML grid of variants (default: the standard six)");
  ablate->add_option("--override", overrides, "Dotted key=value override applied to every variant");
  ablate->add_flag("--parallel", parallel, "Run variants concurrently");

  SyntheticConfig syn;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic log with planted intents");
  synth->add_option("--out", out, "Output directory")->required();
  synth->add_option("--users", syn.users);
  synth->add_option("--items", syn.items);
  synth->add_option("--intents", syn.intents);
  synth->add_option("--semantic-dim", syn.semantic_dim);
  synth->add_option("--seed", syn.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (prepare->parsed()) {
    prep.raw = raw;
    prep.out_dir = out;
    prep.items = items;
    prep.item_vectors = vectors;
    const PrepareSummary s = cmd_prepare(prep);
    std::cout << "prepared " << s.users << " users, " << s.items << " items, " << s.interactions
              << " interactions (from " << s.raw_rows << " rows) in " << out << "\n";
  } else if (embed->parsed()) {
    cmd_embed_pseudo(prompts, dim, seed, out);
    std::cout << "wrote " << out << "\n";
  } else if (train->parsed()) {
    const TrainOutcome t = cmd_train(config, overrides);
    std::cout << "trained " << t.fit.log.size() << " epochs (" << t.fit.steps << " steps), best epoch "
              << t.fit.best_epoch << " val NDCG@10 " << t.fit.best_val_ndcg10 << "; outputs in "
              << t.out_dir.string() << "\n";
  } else if (evaluate->parsed()) {
    ev.checkpoint = checkpoint;
    ev.data = data;
    ev.out_dir = out;
    if (*mask_flag) ev.mask_history = mask;
    std::cout << report_to_text(cmd_evaluate(ev));
  } else if (ablate->parsed()) {
    const auto variants = grid.empty() ? default_ablation_grid() : load_ablation_grid(grid);
    const auto rows = cmd_ablate(config, variants, overrides, parallel);
    std::cout << ablation_table_text(rows);
  } else if (synth->parsed()) {
    write_synthetic(out, generate_synthetic(syn));
    std::cout << "wrote synthetic data to " << out << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const recdiff::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
