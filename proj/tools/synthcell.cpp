// synthcell command-line front end.
//
//   synthcell [--config c.json] [--seed N] [--jobs N] --out DIR <command> args...
//
// Exit codes: 0 ok, 2 validation, 3 runtime / numerical, 4 external process.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "synthcell/synthcell.hpp"

namespace fs = std::filesystem;
using namespace synthcell;

namespace {

void print_rows(const std::vector<MetricRow>& rows) { std::cout << to_csv(rows); }

fs::path require_out(const std::string& out, const char* command) {
  if (out.empty()) fail(ErrorCode::InvalidConfig, std::string(command) + " needs --out <dir>");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic expansion of annotated cell-microscopy datasets"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, out;
  std::uint64_t seed = 0;
  int jobs = 1;
  app.add_option("--config", config_path, "Pipeline config JSON")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "Base seed (overrides the config)");
  app.add_option("--jobs", jobs, "Maximum worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out", out, "Output directory");

  std::string a, b, c;
  bool reentrant = false;

  auto* extract = app.add_subcommand("extract", "Extract the SCO/MCO object pool from a manifest's train split");
  extract->add_option("manifest", a)->required();

  auto* backgrounds = app.add_subcommand("backgrounds", "Inpaint one background per train image");
  backgrounds->add_option("manifest", a)->required();

  auto* search = app.add_subcommand("search", "Greedy augmentation-policy search over a pool");
  search->add_option("pool", a)->required();
  search->add_flag("--reentrant", reentrant, "External scorer tolerates one process per worker");

  auto* generate = app.add_subcommand("generate", "Compose synthetic images with exact annotations");
  generate->add_option("pool", a)->required();
  generate->add_option("backgrounds", b)->required();
  generate->add_option("policies", c)->required();

  auto* mix = app.add_subcommand("mix", "Union two manifests' train splits; val/test from the first");
  mix->add_option("manifest_a", a)->required();
  mix->add_option("manifest_b", b)->required();

  auto* eval_fid = app.add_subcommand("eval-fid", "FID between two image sets");
  eval_fid->add_option("real", a)->required();
  eval_fid->add_option("fake", b)->required();

  auto* eval_kid = app.add_subcommand("eval-kid", "KID between two image sets");
  eval_kid->add_option("real", a)->required();
  eval_kid->add_option("fake", b)->required();

  auto* eval_ap = app.add_subcommand("eval-ap", "COCO-style AP of detections against ground truth");
  eval_ap->add_option("detections", a)->required();
  eval_ap->add_option("ground_truth", b)->required();

  auto* stats = app.add_subcommand("stats", "Object-count statistics of a manifest's train split");
  stats->add_option("manifest", a)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    PipelineConfig cfg = config_path.empty() ? config_from_json(nlohmann::json::object()) : load_config(config_path);
    if (*seed_opt) apply_seed(cfg, seed);

    if (*extract) {
      const ObjectPool pool = cmd_extract(a, cfg, require_out(out, "extract"), jobs);
      std::cout << "sco " << pool.scos.size() << " mco " << pool.mcos.size() << '\n';
    } else if (*backgrounds) {
      const auto files = cmd_backgrounds(a, cfg, require_out(out, "backgrounds"), jobs);
      std::cout << files.size() << " backgrounds\n";
    } else if (*search) {
      const SearchResult r = cmd_search(a, cfg, require_out(out, "search"), jobs, reentrant);
      std::cout << r.evaluated.size() << " chains scored, " << r.policies.size() << " policies kept\n";
    } else if (*generate) {
      const GeneratedDataset d = cmd_generate(a, b, c, cfg, require_out(out, "generate"), jobs);
      std::cout << d.manifest.items.size() << " images, " << d.annotations.size() << " annotations\n";
    } else if (*mix) {
      const DatasetManifest m = cmd_mix(a, b, require_out(out, "mix") / "manifest.json");
      std::cout << m.split(Split::Train).size() << " train, " << m.split(Split::Val).size() << " val, "
                << m.split(Split::Test).size() << " test\n";
    } else if (*eval_fid || *eval_kid) {
      const SetMetric metric = *eval_fid ? SetMetric::Fid : SetMetric::Kid;
      const fs::path csv = out.empty() ? fs::path() : fs::path(out) / (*eval_fid ? "fid.csv" : "kid.csv");
      print_rows(cmd_eval_set(metric, a, b, cfg, csv, jobs));
    } else if (*eval_ap) {
      const fs::path csv = out.empty() ? fs::path() : fs::path(out) / "ap.csv";
      print_rows(cmd_eval_ap(a, b, csv, cfg.seed));
    } else if (*stats) {
      const nlohmann::json s = cmd_stats(a, cfg, jobs);
      if (!out.empty()) write_json_file(fs::path(out) / "stats.json", s);
      std::cout << s.dump(2) << '\n';
    }
  } catch (const Error& e) {
    std::cerr << "synthcell: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "synthcell: InvalidConfig: " << e.what() << '\n';
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "synthcell: IoFailure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "synthcell: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
