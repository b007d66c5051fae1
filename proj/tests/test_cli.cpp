#include <gtest/gtest.h>

#include <sys/wait.h>

#include <fstream>
#include <sstream>

#include "fixtures.hpp"

using namespace synthcell;
namespace fs = std::filesystem;

namespace {

int run(const std::string& args, const fs::path& log = {}, const std::string& env = "") {
  std::string cmd = env + " " + std::string(SYNTHCELL_CLI) + " " + args;
  cmd += log.empty() ? " >/dev/null 2>&1" : " >" + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

std::string tree_bytes(const fs::path& root) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::string out;
  for (const auto& f : files) out += fs::relative(f, root).string() + "\n" + slurp(f);
  return out;
}

// Small end-to-end run shared by the tests below.
struct Pipeline {
  fixtures::TempDir dir;
  fs::path manifest, config;

  Pipeline() {
    manifest = fixtures::write_dataset(dir / "data", 6, 2, 2, 17, 64, 64, 5);
    config = dir / "config.json";
    write_json_file(config, nlohmann::json::parse(R"({
      "search": {"n_o": 3, "n_p": 2, "n_m": 2, "l_max": 2, "beam_k": 2, "top_b": 3, "eval_cells": 4,
                 "scorer": {"components": 4, "input_size": 8}},
      "composer": {"r": 4},
      "metrics": {"subsets": 2}
    })"));
  }

  std::string base(int jobs = 1) const {
    return "--config " + config.string() + " --seed 5 --jobs " + std::to_string(jobs);
  }
};

}  // namespace

TEST(Cli, EndToEnd) {
  Pipeline p;
  const fs::path pool = p.dir / "pool", bgs = p.dir / "bgs", pol = p.dir / "policies", gen = p.dir / "gen",
                 mixed = p.dir / "mixed", eval = p.dir / "eval";
  ASSERT_EQ(run(p.base() + " --out " + pool.string() + " extract " + p.manifest.string()), 0);
  ASSERT_TRUE(fs::exists(pool / "pool.json"));
  const auto pj = read_json_file(pool / "pool.json");

  // The archive's counts equal a direct pool_statistics run.
  const DatasetManifest m = load_manifest(p.manifest);
  std::vector<AnnotatedImage> train;
  for (const auto& it : m.split(Split::Train))
    train.push_back({it.image, load_raster(m.resolve(it.image)), load_label_map(m.resolve(it.label_map))});
  const ObjectPool direct = pool_statistics(train);
  EXPECT_EQ(pj["n_sco"], direct.scos.size());
  EXPECT_EQ(pj["n_mco"], direct.mcos.size());

  ASSERT_EQ(run(p.base() + " --out " + bgs.string() + " backgrounds " + p.manifest.string()), 0);
  EXPECT_EQ(read_json_file(bgs / "backgrounds.json")["backgrounds"].size(), 6u);

  ASSERT_EQ(run(p.base() + " --out " + pol.string() + " search " + pool.string()), 0);
  const auto policies = read_json_file(pol / "policies.json");
  EXPECT_EQ(policies.size(), 3u);
  std::istringstream csv(slurp(pol / "scores.csv"));
  std::string line;
  int rows = -1;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 12 + 1 * 2 * 12);

  ASSERT_EQ(run(p.base() + " --out " + gen.string() + " generate " + pool.string() + " " + bgs.string() + " " +
                (pol / "policies.json").string()),
            0);
  const DatasetManifest g = load_manifest(gen / "manifest.json");
  EXPECT_EQ(g.items.size(), 4u);
  EXPECT_EQ(g.config_hash, config_hash(to_json([&] {
              PipelineConfig c = load_config(p.config);
              apply_seed(c, 5);
              return c;
            }())));

  ASSERT_EQ(run(p.base() + " --out " + mixed.string() + " mix " + p.manifest.string() + " " + (gen / "manifest.json").string()), 0);
  const DatasetManifest mix = load_manifest(mixed / "manifest.json");
  EXPECT_EQ(mix.split(Split::Train).size(), 10u);
  EXPECT_EQ(mix.split(Split::Val).size(), 2u);

  ASSERT_EQ(run(p.base() + " --out " + eval.string() + " eval-fid " + p.manifest.string() + " " + p.manifest.string()), 0);
  const std::string fid_csv = slurp(eval / "fid.csv");
  EXPECT_EQ(fid_csv.rfind("metric,value,subset,seed\n", 0), 0u);
  std::istringstream fin(fid_csv);
  std::getline(fin, line);
  while (std::getline(fin, line)) {
    const auto a = line.find(','), b = line.find(',', a + 1);
    EXPECT_EQ(line.substr(0, a), "fid");
    EXPECT_NEAR(std::stod(line.substr(a + 1, b - a - 1)), 0.0, 1e-6);
  }
  ASSERT_EQ(run(p.base() + " --out " + eval.string() + " eval-kid " + p.manifest.string() + " " + (gen / "images").string()), 0);
  EXPECT_NE(slurp(eval / "kid.csv").find("kid,"), std::string::npos);

  ASSERT_EQ(run(p.base() + " --out " + eval.string() + " stats " + p.manifest.string()), 0);
  EXPECT_EQ(read_json_file(eval / "stats.json")["splits"]["train"], 6);
}

TEST(Cli, EvalApOnPerfectDetections) {
  fixtures::TempDir dir;
  write_json_file(dir / "gt.json", nlohmann::json::parse(R"({"images":[{"id":1}],"annotations":[
      {"id":1,"image_id":1,"bbox":[0,0,10,10],"area":100},{"id":2,"image_id":1,"bbox":[30,30,40,40],"area":1600}]})"));
  write_json_file(dir / "det.json", nlohmann::json::parse(
      R"([{"image_id":1,"bbox":[0,0,10,10],"score":0.9},{"image_id":1,"bbox":[30,30,40,40],"score":0.8}])"));
  ASSERT_EQ(run("--out " + dir.path().string() + " eval-ap " + (dir / "det.json").string() + " " + (dir / "gt.json").string()), 0);
  const std::string csv = slurp(dir / "ap.csv");
  EXPECT_NE(csv.find("AP,1,all,0"), std::string::npos) << csv;
  EXPECT_NE(csv.find("AP50,1,"), std::string::npos);
  EXPECT_NE(csv.find("APs,1,small"), std::string::npos);
}

TEST(Cli, GenerateIsIdempotentAndJobIndependent) {
  Pipeline p;
  const fs::path pool = p.dir / "pool", bgs = p.dir / "bgs";
  ASSERT_EQ(run(p.base() + " --out " + pool.string() + " extract " + p.manifest.string()), 0);
  ASSERT_EQ(run(p.base() + " --out " + bgs.string() + " backgrounds " + p.manifest.string()), 0);
  write_json_file(p.dir / "pol.json", nlohmann::json::parse(R"([{"subs":[{"op":"Rotate","p":2,"m":1}],"score":0}])"));
  const std::string tail = " generate " + pool.string() + " " + bgs.string() + " " + (p.dir / "pol.json").string();
  ASSERT_EQ(run(p.base(1) + " --out " + (p.dir / "g1").string() + tail), 0);
  ASSERT_EQ(run(p.base(1) + " --out " + (p.dir / "g2").string() + tail), 0);
  ASSERT_EQ(run(p.base(8) + " --out " + (p.dir / "g8").string() + tail), 0);
  EXPECT_EQ(tree_bytes(p.dir / "g1"), tree_bytes(p.dir / "g2"));
  EXPECT_EQ(tree_bytes(p.dir / "g1"), tree_bytes(p.dir / "g8"));
}

TEST(Cli, ExitCodes) {
  Pipeline p;
  const fs::path out = p.dir / "o";
  EXPECT_EQ(run("--out " + out.string() + " frobnicate"), 2);
  EXPECT_EQ(run("--out " + out.string() + " extract " + (p.dir / "nope.json").string()), 2);
  write_json_file(p.dir / "bad.json", nlohmann::json::parse(R"({"search": {"bogus": 1}})"));
  EXPECT_EQ(run("--config " + (p.dir / "bad.json").string() + " --out " + out.string() + " stats " + p.manifest.string()), 2);

  // Empty train split.
  DatasetManifest empty;
  save_manifest(p.dir / "empty.json", empty);
  EXPECT_EQ(run("--out " + out.string() + " extract " + (p.dir / "empty.json").string()), 2);

  ASSERT_EQ(run(p.base() + " --out " + (p.dir / "pool").string() + " extract " + p.manifest.string()), 0);
  const std::string search = p.base() + " --out " + out.string() + " search " + (p.dir / "pool").string();
  EXPECT_EQ(run(search, {}, "SYNTHCELL_SCORER='exit 9'"), 4);
  EXPECT_EQ(run(search, {}, "SYNTHCELL_SCORER='while read l; do echo ok; done'"), 4);

  const auto drift = fixtures::write_script(p.dir / "drift.py", fixtures::embedder_script(3, true));
  EXPECT_EQ(run(p.base() + " eval-kid " + p.manifest.string() + " " + p.manifest.string(), {},
                "SYNTHCELL_EMBEDDER='python3 " + drift.string() + "'"),
            4);

  // A label map covering the whole image leaves nothing to inpaint from.
  const fs::path full = p.dir / "full";
  save_raster(full / "i.png", RasterImage(16, 16, 3, 90));
  save_label_map(full / "l.png", LabelMap(16, 16, 1));
  DatasetManifest covered;
  covered.items.push_back({"i.png", "l.png", Split::Train});
  save_manifest(full / "manifest.json", covered);
  EXPECT_EQ(run("--out " + out.string() + " backgrounds " + (full / "manifest.json").string()), 3);
}
