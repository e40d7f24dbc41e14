#include "recdiff/commands.h"

#include <json.hpp>
#include <yaml-cpp/yaml.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <future>
#include <map>
#include <sstream>

#include "recdiff/checkpoint.h"
#include "recdiff/errors.h"
#include "recdiff/synthetic.h"
#include "recdiff/util.h"

namespace recdiff {

namespace fs = std::filesystem;

PrepareSummary cmd_prepare(const PrepareOptions& o) {
  const PromptTemplate tpl = parse_prompt_template(o.kind);
  if (!fs::exists(o.raw)) throw DataError("raw file not found: " + o.raw.string());
  if (o.min_count < 1) throw ConfigError("--min-count must be >= 1");
  const InputFormat format = o.format.empty() ? infer_input_format(o.raw) : parse_input_format(o.format);

  std::vector<Interaction> rows;
  try {
    rows = load_interactions(o.raw, format);
  } catch (const DataError& e) {
    throw DataError(o.raw.string() + ": " + e.what());
  }
  const InteractionDataset ds = build_dataset(rows, o.min_count);
  const StrataLabels strata = compute_strata(ds, o.tail_fraction, o.cold_threshold);

  std::unordered_map<std::string, AttributeMap> attributes;
  if (!o.items.empty()) attributes = load_item_attributes(o.items);
  std::vector<PromptRecord> prompts;
  for (int i = 0; i < ds.num_items(); ++i) {
    auto it = attributes.find(ds.item_ids[i]);
    prompts.push_back(render_prompt(i, it == attributes.end() ? AttributeMap{} : it->second, tpl));
  }

  std::vector<std::string> written = {"dataset.json", "strata.json", "prompts.jsonl"};
  save_dataset(o.out_dir / "dataset.json", ds);
  write_file(o.out_dir / "strata.json", strata_to_json(ds, strata));
  save_prompts(o.out_dir / "prompts.jsonl", prompts);

  if (!o.item_vectors.empty()) {
    const auto vectors = load_item_vectors(o.item_vectors);
    Mat real;
    for (int i = 0; i < ds.num_items(); ++i) {
      auto it = vectors.find(ds.item_ids[i]);
      if (it == vectors.end()) throw DataError("no semantic vector for item " + ds.item_ids[i]);
      if (i == 0) real.resize(ds.num_items(), static_cast<Eigen::Index>(it->second.size()));
      real.row(i) = Eigen::Map<const Eigen::RowVectorXd>(it->second.data(), real.cols());
    }
    save_semantic_matrix(o.out_dir / "semantic.json",
                         make_semantic_matrix(real, "file:" + o.item_vectors.filename().string()));
    written.push_back("semantic.json");
    written.push_back("semantic.f32");
  }

  PrepareSummary summary{rows.size(), ds.num_users(), ds.num_items(), ds.num_interactions()};
  nlohmann::ordered_json manifest;
  manifest["kind"] = o.kind;
  manifest["source"] = o.raw.filename().string();
  manifest["source_sha256"] = sha256_hex(read_file(o.raw));
  manifest["min_count"] = o.min_count;
  manifest["raw_rows"] = summary.raw_rows;
  manifest["users"] = summary.users;
  manifest["items"] = summary.items;
  manifest["interactions"] = summary.interactions;
  manifest["tail_items"] = strata.tail_count();
  manifest["cold_users"] = strata.cold_count();
  manifest["tail_fraction"] = o.tail_fraction;
  manifest["cold_threshold"] = o.cold_threshold;
  nlohmann::ordered_json files;
  for (const auto& name : written) files[name] = sha256_hex(read_file(o.out_dir / name));
  manifest["files"] = files;
  write_file(o.out_dir / "manifest.json", manifest.dump(2) + "\n");
  return summary;
}

void cmd_embed_pseudo(const fs::path& prompts, int dim, std::uint64_t seed, const fs::path& out) {
  if (dim < 1) throw ConfigError("--dim must be >= 1");
  if (!fs::exists(prompts)) throw DataError("prompt file not found: " + prompts.string());
  save_semantic_matrix(out, pseudo_semantic_matrix(load_prompts(prompts), dim, seed));
}

fs::path dataset_file(const fs::path& p) { return fs::is_directory(p) ? p / "dataset.json" : p; }

SemanticMatrix resolve_semantic(const ExperimentConfig& config, const InteractionDataset& ds) {
  if (!config.data.semantic.empty()) return load_semantic_matrix(config.data.semantic, ds.num_items());
  const fs::path dir = dataset_file(config.data.dataset).parent_path();
  fs::path prompts = config.data.prompts;
  if (prompts.empty()) {
    if (fs::exists(dir / "semantic.json")) return load_semantic_matrix(dir / "semantic.json", ds.num_items());
    prompts = dir / "prompts.jsonl";
  }
  if (!fs::exists(prompts)) throw ConfigError("data.semantic and data.prompts are unset and no prepared files exist");
  SemanticMatrix m = pseudo_semantic_matrix(load_prompts(prompts), config.data.pseudo_dim, config.data.pseudo_seed);
  if (m.num_items() != ds.num_items()) {
    throw DataError("prompt file covers " + std::to_string(m.num_items()) + " items, dataset has " +
                    std::to_string(ds.num_items()));
  }
  return m;
}

fs::path resolve_output_dir(const ExperimentConfig& config) {
  if (!config.output.dir.empty()) return config.output.dir;
  if (const char* env = std::getenv("RECDIFF_OUT"); env && *env) return env;
  return "runs";
}

TrainOutcome run_training(const ExperimentConfig& config, const fs::path& out_dir, const FitOptions& options) {
  validate_config(config);
  if (config.data.dataset.empty()) throw ConfigError("data.dataset is required");
  const InteractionDataset ds = load_dataset(dataset_file(config.data.dataset));
  write_file(out_dir / "config.resolved.yaml", to_yaml(config));

  Model model = make_model(config, resolve_semantic(config, ds));
  std::ofstream log;
  fs::create_directories(out_dir);
  log.open(out_dir / "train_log.jsonl", std::ios::binary | std::ios::trunc);
  FitOptions opts = options;
  opts.on_epoch = [&](const EpochRecord& r) {
    log << epoch_record_json(r) << "\n";
    log.flush();
    if (options.on_epoch) options.on_epoch(r);
  };
  TrainOutcome outcome{out_dir, fit(model, ds, opts)};
  save_checkpoint(out_dir / "checkpoint.bin", model, ds.vocab_digest());
  return outcome;
}

TrainOutcome cmd_train(const fs::path& config_path, const std::vector<std::string>& overrides) {
  ExperimentConfig config = load_config(config_path);
  for (const auto& o : overrides) apply_override(config, o);
  return run_training(config, resolve_output_dir(config));
}

EvalReport cmd_evaluate(const EvaluateOptions& o) {
  Checkpoint ck = load_checkpoint(o.checkpoint);
  const InteractionDataset ds = load_dataset(dataset_file(o.data));
  if (ds.num_items() != ck.model.num_items || ds.vocab_digest() != ck.vocab_digest) {
    throw DataError("vocabulary mismatch between checkpoint and dataset");
  }
  const auto& cfg = ck.model.config;
  const StrataLabels strata = compute_strata(ds, cfg.data.tail_fraction, cfg.data.cold_threshold);
  EvalOptions opts;
  opts.split = EvalSplit::test;
  opts.mask_history = o.mask_history.value_or(cfg.eval.mask_history);
  opts.silhouette_max_points = cfg.eval.silhouette_max_points;
  opts.sample_seed = cfg.seeds.clustering;
  const EvalReport report = evaluate(ck.model, ds, strata, opts);
  write_file(o.out_dir / "report.json", report_to_json(report));
  write_file(o.out_dir / "report.txt", report_to_text(report));
  if (o.projection) {
    ag::NoGradGuard no_grad;
    const Mat enc = encode_summaries(ck.model, item_representations(ck.model),
                                     split_inputs(ds, EvalSplit::test, cfg.data.max_len));
    std::vector<int> labels;
    if (ck.model.prototypes.fitted()) labels = assign_intents(enc, ck.model.prototypes);
    write_projection_csv(o.out_dir / "projection.csv", export_projection(enc, labels));
  }
  return report;
}

std::vector<AblationVariant> default_ablation_grid() {
  return {
      {"ca", {"fusion.strategy=cross_attention"}},
      {"ca_no_align", {"fusion.strategy=cross_attention", "loss.lambda_align=0"}},
      {"no_align", {"loss.lambda_align=0"}},
      {"concat", {"fusion.strategy=concat"}},
      {"weighted", {"fusion.strategy=weighted"}},
      {"full", {}},
  };
}

std::vector<AblationVariant> load_ablation_grid(const fs::path& path) {
  YAML::Node root;
  try {
    root = YAML::Load(read_file(path));
  } catch (const YAML::Exception& e) {
    throw ConfigError(path.string() + ": invalid YAML: " + e.what());
  }
  const YAML::Node variants = root["variants"];
  if (!variants || !variants.IsSequence()) throw ConfigError(path.string() + ": expected a 'variants' list");
  const auto known = config_keys();
  std::vector<AblationVariant> grid;
  for (const auto& v : variants) {
    AblationVariant var;
    if (!v["name"]) throw ConfigError(path.string() + ": every variant needs a name");
    var.name = v["name"].as<std::string>();
    if (const YAML::Node ov = v["overrides"]) {
      if (!ov.IsMap()) throw ConfigError(path.string() + ": overrides of '" + var.name + "' must be a mapping");
      for (const auto& kv : ov) {
        const std::string key = kv.first.as<std::string>();
        if (std::find(known.begin(), known.end(), key) == known.end()) {
          throw ConfigError(path.string() + ": variant '" + var.name + "' names unknown key '" + key + "'");
        }
        var.overrides.push_back(key + "=" + kv.second.Scalar());
      }
    }
    grid.push_back(std::move(var));
  }
  return grid;
}

std::vector<AblationRow> cmd_ablate(const fs::path& config_path, const std::vector<AblationVariant>& grid,
                                    const std::vector<std::string>& overrides, bool parallel) {
  ExperimentConfig base = load_config(config_path);
  for (const auto& o : overrides) apply_override(base, o);
  validate_config(base);
  const fs::path root = resolve_output_dir(base) / "ablation";

  std::vector<fs::path> dirs;
  std::map<std::string, int> uses;
  for (const auto& v : grid) {
    const int n = uses[v.name]++;
    dirs.push_back(root / (n == 0 ? v.name : v.name + "-" + std::to_string(n + 1)));
  }

  auto run = [&](std::size_t i) {
    const AblationVariant& v = grid[i];
    AblationRow row{v.name, std::nullopt, ""};
    try {
      ExperimentConfig cfg = base;
      for (const auto& o : v.overrides) apply_override(cfg, o);
      const fs::path& dir = dirs[i];
      run_training(cfg, dir);
      EvaluateOptions eo;
      eo.checkpoint = dir / "checkpoint.bin";
      eo.data = cfg.data.dataset;
      eo.out_dir = dir;
      row.report = cmd_evaluate(eo);
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    return row;
  };

  std::vector<AblationRow> rows;
  if (parallel) {
    std::vector<std::future<AblationRow>> jobs;
    for (std::size_t i = 0; i < grid.size(); ++i) jobs.push_back(std::async(std::launch::async, run, i));
    for (auto& j : jobs) rows.push_back(j.get());
  } else {
    for (std::size_t i = 0; i < grid.size(); ++i) rows.push_back(run(i));
  }
  write_file(root / "ablation.json", ablation_table_json(rows));
  write_file(root / "ablation.txt", ablation_table_text(rows));
  return rows;
}

std::string ablation_table_text(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-16s %8s %8s  %s\n", "variant", "HR@10", "NDCG@10", "status");
  out << line;
  for (const auto& r : rows) {
    if (r.report) {
      std::snprintf(line, sizeof(line), "%-16s %8.4f %8.4f  ok\n", r.name.c_str(), r.report->overall.hr10,
                    r.report->overall.ndcg10);
    } else {
      std::snprintf(line, sizeof(line), "%-16s %8s %8s  failed: %s\n", r.name.c_str(), "-", "-", r.error.c_str());
    }
    out << line;
  }
  return out.str();
}

std::string ablation_table_json(const std::vector<AblationRow>& rows) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json j;
    j["variant"] = r.name;
    if (r.report) {
      j["status"] = "ok";
      j["hr@10"] = r.report->overall.hr10;
      j["ndcg@10"] = r.report->overall.ndcg10;
      j["report"] = nlohmann::ordered_json::parse(report_to_json(*r.report));
    } else {
      j["status"] = "failed";
      j["error"] = r.error;
    }
    arr.push_back(j);
  }
  return arr.dump(2) + "\n";
}

}  // namespace recdiff
