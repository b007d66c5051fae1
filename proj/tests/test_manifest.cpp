#include <gtest/gtest.h>

#include "fixtures.hpp"

using namespace synthcell;
namespace fs = std::filesystem;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::NotFound;
}

DatasetManifest fake_manifest(const fs::path& dir, const std::string& prefix, int train, int val, int test) {
  DatasetManifest m;
  m.name = prefix;
  m.base_dir = dir;
  int k = 0;
  for (auto [count, split] : {std::pair{train, Split::Train}, std::pair{val, Split::Val}, std::pair{test, Split::Test}})
    for (int i = 0; i < count; ++i, ++k)
      m.items.push_back({prefix + "/img" + std::to_string(k) + ".png", prefix + "/lab" + std::to_string(k) + ".png", split});
  return m;
}

}  // namespace

TEST(Manifest, JsonRoundTrip) {
  fixtures::TempDir dir;
  const fs::path path = fixtures::write_dataset(dir.path(), 3, 1, 1, 12, 32, 32, 3);
  DatasetManifest m = load_manifest(path);
  EXPECT_EQ(m.items.size(), 5u);
  EXPECT_EQ(m.split(Split::Train).size(), 3u);
  EXPECT_EQ(m.seed, 12u);
  m.counters["placed"] = 7;
  m.config_hash = "abc";
  save_manifest(dir / "copy.json", m);
  const DatasetManifest back = load_manifest(dir / "copy.json");
  EXPECT_EQ(back.items, m.items);
  EXPECT_EQ(back.counters, m.counters);
  EXPECT_EQ(back.config_hash, "abc");
  EXPECT_EQ(back.generator_version, kGeneratorVersion);
}

TEST(Manifest, ValidationErrors) {
  fixtures::TempDir dir;
  const fs::path path = fixtures::write_dataset(dir.path(), 2, 0, 0, 1, 32, 32, 2);
  nlohmann::json j = read_json_file(path);
  j["items"].push_back(j["items"][0]);
  j["items"].back()["split"] = "test";
  write_json_file(dir / "overlap.json", j);
  EXPECT_EQ(code_of([&] { load_manifest(dir / "overlap.json"); }), ErrorCode::InvalidManifest);

  j = read_json_file(path);
  j["items"][0]["image"] = "images/missing.png";
  write_json_file(dir / "missing.json", j);
  EXPECT_EQ(code_of([&] { load_manifest(dir / "missing.json"); }), ErrorCode::InvalidManifest);

  j = read_json_file(path);
  j["items"][0]["split"] = "holdout";
  write_json_file(dir / "split.json", j);
  EXPECT_EQ(code_of([&] { load_manifest(dir / "split.json"); }), ErrorCode::InvalidManifest);

  EXPECT_EQ(code_of([&] { load_manifest(dir / "absent.json"); }), ErrorCode::NotFound);
}

TEST(Mix, TrainUnionValTestFromFirst) {
  fixtures::TempDir dir;
  const DatasetManifest a = fake_manifest(dir.path(), "a", 93, 31, 32);
  const DatasetManifest b = fake_manifest(dir.path(), "b", 107, 0, 0);
  const DatasetManifest m = mix_manifests(a, b, dir.path());
  EXPECT_EQ(m.split(Split::Train).size(), 200u);
  EXPECT_EQ(m.split(Split::Val), a.split(Split::Val));
  EXPECT_EQ(m.split(Split::Test), a.split(Split::Test));
}

TEST(Mix, WithEmptySecondIsFirst) {
  fixtures::TempDir dir;
  const DatasetManifest a = fake_manifest(dir.path(), "a", 4, 2, 2);
  DatasetManifest empty;
  empty.base_dir = dir.path();
  EXPECT_EQ(mix_manifests(a, empty, dir.path()).items, a.items);
}

TEST(Mix, RebasesPathsToOutputDirectory) {
  fixtures::TempDir dir;
  const DatasetManifest a = fake_manifest(dir / "one", "a", 1, 0, 0);
  const DatasetManifest m = mix_manifests(a, DatasetManifest{}, dir / "out");
  EXPECT_EQ(m.items[0].image, "../one/a/img0.png");
  EXPECT_EQ(fs::weakly_canonical(m.resolve(m.items[0].image)), fs::weakly_canonical(a.resolve(a.items[0].image)));
}

TEST(Config, DefaultsAndCanonicalHash) {
  const PipelineConfig c = config_from_json(nlohmann::json::object());
  EXPECT_EQ(c.space.n_o, 11);
  EXPECT_EQ(c.space.f, c.greedy.l_max);
  EXPECT_EQ(c.composer.r, 10);
  const nlohmann::json canon = to_json(c);
  const PipelineConfig again = config_from_json(canon);
  EXPECT_EQ(to_json(again), canon);
  EXPECT_EQ(config_hash(to_json(again)), config_hash(canon));
  EXPECT_EQ(config_hash(canon).size(), 16u);
}

TEST(Config, ParsesSectionsAndPropagatesSeed) {
  const auto j = nlohmann::json::parse(R"({
    "seed": 9,
    "inpaint": {"sigma": 1.5, "rect_inset": 2},
    "search": {"n_o": 4, "n_p": 3, "n_m": 5, "l_max": 3, "scorer": {"kind": "external", "command": "x"}},
    "composer": {"r": 107, "count_mode": "mode"},
    "metrics": {"subsets": 2, "subset_size": 10}
  })");
  const PipelineConfig c = config_from_json(j);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.inpaint.seed, 9u);
  EXPECT_EQ(c.composer.seed, 9u);
  EXPECT_EQ(c.greedy.seed, 9u);
  EXPECT_EQ(c.space.f, 3);
  EXPECT_EQ(c.augment.n_p, 3);
  EXPECT_EQ(c.augment.n_m, 5);
  EXPECT_EQ(*c.inpaint.sigma, 1.5);
  EXPECT_EQ(c.composer.count_mode, CountMode::Mode);
  EXPECT_EQ(c.scorer.kind, "external");
  PipelineConfig s = c;
  apply_seed(s, 44);
  EXPECT_EQ(s.composer.seed, 44u);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  for (const char* text : {R"({"colour": 1})", R"({"search": {"beam": 3}})", R"({"composer": {"count_mode": "max"}})",
                           R"({"search": {"n_o": 12}})", R"({"inpaint": {"sigma": 0}})", R"({"seed": "x"})",
                           R"({"augment": {"rotate_degrees": [1]}})", R"([])"}) {
    EXPECT_EQ(code_of([&] { config_from_json(nlohmann::json::parse(text)); }), ErrorCode::InvalidConfig) << text;
  }
}

TEST(Pool, ArchiveRoundTrips) {
  fixtures::TempDir dir;
  const ObjectPool pool = fixtures::synthetic_pool(3, 3);
  save_pool(dir.path(), pool);
  const ObjectPool back = load_pool(dir.path());
  ASSERT_EQ(back.scos.size(), pool.scos.size());
  ASSERT_EQ(back.mcos.size(), pool.mcos.size());
  EXPECT_EQ(back.count_histogram, pool.count_histogram);
  EXPECT_DOUBLE_EQ(back.sco_mco_ratio, pool.sco_mco_ratio);
  for (std::size_t i = 0; i < pool.mcos.size(); ++i) {
    EXPECT_EQ(back.mcos[i].patch, pool.mcos[i].patch);
    EXPECT_EQ(back.mcos[i].mask, pool.mcos[i].mask);
    EXPECT_EQ(back.mcos[i].members, pool.mcos[i].members);
    EXPECT_EQ(back.mcos[i].source_box, pool.mcos[i].source_box);
    EXPECT_EQ(back.mcos[i].source_labels, pool.mcos[i].source_labels);
  }
}
