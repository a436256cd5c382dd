#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "test_support.hpp"
#include "trance/pipeline.hpp"
#include "trance/synthetic.hpp"

using namespace trance;
using trance::testing::slurp;
using trance::testing::TempDir;

namespace {

SyntheticSpec small_spec(std::uint64_t seed = 0) {
  SyntheticSpec spec;
  spec.images_per_class = 40;
  spec.c = 16;
  spec.seed = seed;
  return spec;
}

PipelineConfig small_config(const std::filesystem::path& archive, const std::filesystem::path& out) {
  PipelineConfig cfg;
  cfg.archive_path = archive.string();
  cfg.c_prime = 4;
  cfg.reducer_cfg.train.epochs_max = 10;
  cfg.heatmap_size = 32;
  cfg.out_dir = out;
  return cfg;
}

std::size_t count_files(const std::filesystem::path& dir, const std::string& prefix) {
  std::size_t n = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.path().filename().string().rfind(prefix, 0) == 0) ++n;
  return n;
}

}  // namespace

TEST(Explain, StructuralContract) {
  TempDir dir;
  write_archive(make_synthetic_archive(small_spec()), dir / "a.taf");
  const auto cfg = small_config(dir / "a.taf", dir / "out");
  const auto r = run_explain(cfg);

  ASSERT_EQ(r.concepts.size(), 4u);
  const auto cls = dir / "out" / "class_0";
  ASSERT_TRUE(std::filesystem::is_directory(cls));
  EXPECT_EQ(count_files(cls, "concept_"), 4u);
  EXPECT_TRUE(std::filesystem::exists(cls / "report.json"));
  EXPECT_TRUE(std::filesystem::exists(cls / "faith.csv"));
  EXPECT_TRUE(std::filesystem::exists(cls / "prototypes.csv"));

  double sum = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& c = r.concepts[i];
    EXPECT_EQ(c.index, i);
    EXPECT_EQ(c.heatmap_path, "concept_" + std::to_string(i) + ".png");
    EXPECT_TRUE(std::filesystem::exists(cls / c.heatmap_path));
    EXPECT_EQ(c.prototypes.size(), cfg.m_star);
    EXPECT_EQ(c.prototype_ids.size(), cfg.m_star);
    EXPECT_EQ(std::set<std::size_t>(c.prototypes.begin(), c.prototypes.end()).size(), cfg.m_star);
    EXPECT_GE(c.weight, 0.0);
    EXPECT_LE(c.weight, 1.0);
    EXPECT_NEAR(c.contribution, c.similarity * c.weight, 1e-15);
    sum += c.contribution;
  }
  EXPECT_NEAR(r.total_contribution, sum, 1e-9);
  ASSERT_TRUE(r.faith.has_value());
  EXPECT_GE(r.faith->faith, 0.0);
  EXPECT_LE(r.faith->faith, 1.0);

  const auto j = nlohmann::json::parse(slurp(cls / "report.json"));
  EXPECT_EQ(j.at("concepts").size(), 4u);
  EXPECT_EQ(j.at("reducer"), "vae");
  EXPECT_EQ(j.at("faith").at("reducer"), "vae");
  EXPECT_EQ(j.at("faith").at("class"), 0);
  EXPECT_DOUBLE_EQ(j.at("total_contribution").get<double>(), r.total_contribution);

  const auto png = read_png(cls / "concept_0.png");
  EXPECT_EQ(png.width, 32u);
  EXPECT_EQ(png.height, 32u);

  // header plus m_star rows per concept
  const std::string listing = slurp(cls / "prototypes.csv");
  EXPECT_EQ(static_cast<std::size_t>(std::count(listing.begin(), listing.end(), '\n')), 1 + 4 * cfg.m_star);
}

TEST(Explain, ByteIdenticalAcrossRuns) {
  TempDir dir;
  write_archive(make_synthetic_archive(small_spec(3)), dir / "a.taf");
  auto cfg = small_config(dir / "a.taf", dir / "one");
  cfg.seed = 11;
  run_explain(cfg);
  cfg.out_dir = dir / "two";
  run_explain(cfg);
  for (const std::string f : {"report.json", "faith.csv", "prototypes.csv", "concept_0.png", "concept_3.png"}) {
    const auto a = slurp(dir / "one" / "class_0" / f);
    ASSERT_FALSE(a.empty()) << f;
    EXPECT_EQ(a, slurp(dir / "two" / "class_0" / f)) << f;
  }
}

TEST(Explain, OtherReducersAndWeightMode) {
  TempDir dir;
  write_archive(make_synthetic_archive(small_spec(1)), dir / "a.taf");
  for (auto kind : {ReducerKind::Nmf, ReducerKind::Pca}) {
    auto cfg = small_config(dir / "a.taf", dir / "out");
    cfg.reducer = kind;
    cfg.reducer_cfg.nmf_iters = 50;
    cfg.target_class = 1;
    const auto r = run_explain(cfg);
    EXPECT_EQ(r.reducer, to_string(kind));
    EXPECT_EQ(r.concepts.size(), 4u);
    EXPECT_EQ(r.target_class, 1u);
  }
  auto cfg = small_config(dir / "a.taf", dir / "w");
  cfg.contribution_mode = ContributionMode::Weight;
  cfg.render = false;
  cfg.evaluate_faith = false;
  const auto r = run_explain(cfg);
  EXPECT_FALSE(r.faith.has_value());
  EXPECT_FALSE(std::filesystem::exists(dir / "w"));
  double sum = 0.0;
  for (const auto& c : r.concepts) sum += c.contribution;
  EXPECT_NEAR(r.total_contribution, sum, 1e-9);
  EXPECT_EQ(parse_contribution_mode("weight"), ContributionMode::Weight);
  EXPECT_EQ(parse_contribution_mode(to_string(ContributionMode::Similarity)), ContributionMode::Similarity);
  EXPECT_TRANCE_ERROR(parse_contribution_mode("sum"), ErrorCode::InvalidArgument);
}

TEST(Explain, Errors) {
  TempDir dir;
  write_archive(make_synthetic_archive(small_spec()), dir / "a.taf");
  auto cfg = small_config(dir / "a.taf", dir / "out");
  cfg.target_class = 7;
  EXPECT_TRANCE_ERROR(run_explain(cfg), ErrorCode::ClassNotFound);

  cfg = small_config(dir / "a.taf", dir / "out");
  cfg.m_star = 41;
  EXPECT_TRANCE_ERROR(run_explain(cfg), ErrorCode::BadM);

  cfg = small_config(dir / "a.taf", dir / "out");
  cfg.c_prime = 16;
  EXPECT_TRANCE_ERROR(run_explain(cfg), ErrorCode::InvalidArgument);

  cfg = small_config(dir / "missing.taf", dir / "out");
  try {
    run_explain(cfg);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IoFailure);
    EXPECT_NE(std::string(e.what()).find("read archive"), std::string::npos) << e.what();
  }
}

TEST(Explain, LayerPlaceholder) {
  TempDir dir;
  write_archive(make_synthetic_archive(small_spec()), dir / "layer4.taf");
  auto cfg = small_config(dir / "{layer}.taf", dir / "out");
  cfg.layer = "layer4";
  cfg.render = false;
  EXPECT_EQ(run_explain(cfg).layer_name, "layer4");
  cfg.layer = "layer2";
  EXPECT_TRANCE_ERROR(run_explain(cfg), ErrorCode::LayerMissing);
  cfg.layer.clear();
  EXPECT_TRANCE_ERROR(run_explain(cfg), ErrorCode::InvalidArgument);

  // a file that exists but holds another layer
  std::filesystem::copy_file(dir / "layer4.taf", dir / "layer3.taf");
  cfg.layer = "layer3";
  EXPECT_TRANCE_ERROR(run_explain(cfg), ErrorCode::LayerMissing);
}

TEST(Explain, CheckpointReuse) {
  TempDir dir;
  write_archive(make_synthetic_archive(small_spec(2)), dir / "a.taf");
  auto cfg = small_config(dir / "a.taf", dir / "out");
  cfg.cache_dir = dir / "cache";
  cfg.render = false;
  const auto first = run_explain(cfg);
  ASSERT_EQ(count_files(dir / "cache", "vae_"), 1u);
  const auto cached = *std::filesystem::directory_iterator(dir / "cache");
  const auto stamp = std::filesystem::last_write_time(cached.path());
  const auto second = run_explain(cfg);
  EXPECT_EQ(std::filesystem::last_write_time(cached.path()), stamp);
  EXPECT_EQ(to_json(first).dump(), to_json(second).dump());

  // a different seed is a different key
  cfg.seed = 1;
  run_explain(cfg);
  EXPECT_EQ(count_files(dir / "cache", "vae_"), 2u);

  // an explicit checkpoint is used as-is and must match the layout
  cfg.cache_dir.reset();
  cfg.seed = 0;
  cfg.checkpoint = cached.path();
  EXPECT_EQ(to_json(run_explain(cfg)).dump(), to_json(first).dump());
  cfg.c_prime = 3;
  EXPECT_TRANCE_ERROR(run_explain(cfg), ErrorCode::ShapeMismatch);
}

TEST(Sweep, GridShapeAndConsistency) {
  TempDir dir;
  auto deep = small_spec(4);
  deep.layer_name = "deep";
  auto shallow = deep;
  shallow.layer_name = "shallow";
  shallow.noise = 0.03;
  write_archive(make_synthetic_archive(deep), dir / "deep.taf");
  write_archive(make_synthetic_archive(shallow), dir / "shallow.taf");

  auto cfg = small_config(dir / "{layer}.taf", dir / "out");
  const auto g = run_layer_sweep(cfg, {"deep", "shallow"}, {2, 4});
  ASSERT_EQ(g.cells.size(), 2u);
  for (std::size_t l = 0; l < 2; ++l) {
    ASSERT_EQ(g.cells[l].size(), 2u);
    for (std::size_t c = 0; c < 2; ++c) {
      EXPECT_GE(g.faith(l, c), 0.0);
      EXPECT_LE(g.faith(l, c), 1.0);
    }
  }
  const std::string csv = slurp(dir / "out" / "sweep.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  EXPECT_EQ(csv.rfind("layer,c_prime,", 0), 0u);

  cfg.layer = "shallow";
  cfg.c_prime = 4;
  cfg.render = false;
  EXPECT_EQ(run_explain(cfg).faith->faith, g.faith(1, 1));
}

TEST(Sweep, MissingLayer) {
  TempDir dir;
  write_archive(make_synthetic_archive(small_spec()), dir / "layer4.taf");
  auto cfg = small_config(dir / "{layer}.taf", dir / "out");
  EXPECT_TRANCE_ERROR(run_layer_sweep(cfg, {"layer4", "layer1"}, {4}), ErrorCode::LayerMissing);
  EXPECT_TRANCE_ERROR(run_layer_sweep(cfg, {}, {4}), ErrorCode::InvalidArgument);
}

TEST(PipelineHelpers, Naming) {
  EXPECT_EQ(class_directory("golden retriever/2", 3), "golden_retriever_2");
  EXPECT_EQ(class_directory("", 3), "class_3");
  EXPECT_EQ(class_directory("..", 0), "_..");
  EXPECT_EQ(resolve_archive_path("a/b.taf", "x"), std::filesystem::path("a/b.taf"));
  EXPECT_EQ(resolve_archive_path("a/{layer}.taf", "x"), std::filesystem::path("a/x.taf"));
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(PipelineHelpers, PooledLatentsAndMaps) {
  MatrixF z(4, 2);  // two images of 1x2 positions
  z << 1, 0, 3, 2, 0, 4, 0, 6;
  const MatrixD pooled = pooled_latents(z, 2, 2);
  EXPECT_EQ(pooled(0, 0), 2.0);
  EXPECT_EQ(pooled(0, 1), 1.0);
  EXPECT_EQ(pooled(1, 1), 5.0);
  const auto hm = concept_map(z, 1, 1, 1, 2);
  EXPECT_EQ(hm.values, (std::vector<double>{4, 6}));
  EXPECT_EQ(hm.concept_index, 1u);
}
