#include <gtest/gtest.h>

#include <chrono>
#include <cstdlib>
#include <sstream>

#include "json.hpp"

#include "test_util.hpp"
#include "urbanvae/digest.hpp"
#include "urbanvae/latent.hpp"
#include "urbanvae/rng.hpp"
#include "urbanvae_cli/cli.hpp"

namespace fs = std::filesystem;
using urbanvae::testing::TempDir;
using urbanvae::testing::read_file;

namespace {

struct Outcome {
  int code;
  std::string err;
};

Outcome run(const std::vector<std::string>& args) {
  std::ostringstream err;
  const int code = urbanvae::cli::run(args, err);
  return {code, err.str()};
}

std::string p(const fs::path& path) { return path.string(); }

// Digests of every regular file below `root`, keyed by relative path.
std::map<std::string, std::string> tree_digest(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = urbanvae::file_sha256_hex(e.path());
  return out;
}

class Pipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("cli");
    const auto& d = dir_->path();
    ASSERT_EQ(run({"synth", "--count", "16", "--seed", "3", "--out", p(d / "geo")}).code, 0);
    ASSERT_EQ(run({"rasterize", "--input", p(d / "geo"), "--out", p(d / "corpus")}).code, 0);
    ASSERT_EQ(run({"split", "--corpus", p(d / "corpus" / "corpus.json"), "--seed", "4", "--out", p(d / "split.json")}).code, 0);
    ASSERT_EQ(run({"train", "--corpus", p(d / "split.json"), "--epochs", "2", "--batch-size", "8", "--seed", "5", "--out",
                   p(d / "ck")}).code, 0);
    ASSERT_EQ(run({"encode", "--checkpoint", p(d / "ck"), "--corpus", p(d / "split.json"), "--out", p(d / "vec.csv")}).code, 0);
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static const fs::path& d() { return dir_->path(); }
  static TempDir* dir_;
};

TempDir* Pipeline::dir_ = nullptr;

}  // namespace

TEST(Cli, UnknownSubcommandAndFlag) {
  auto r = run({"frobnicate"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("Usage"), std::string::npos) << r.err;
  r = run({"similar", "--bogus", "1"});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(run({}).code, 1);
}

TEST(Cli, HelpAndVersionSucceed) {
  EXPECT_EQ(run({"--help"}).code, 0);
  EXPECT_EQ(run({"train", "--help"}).code, 0);
  const auto v = run({"--version"});
  EXPECT_EQ(v.code, 0);
  EXPECT_FALSE(v.err.empty());
}

TEST(Cli, SimilarOnSixCities) {
  TempDir dir;
  urbanvae::Rng rng(1);
  std::vector<urbanvae::UrbanNetworkVector> vecs;
  for (int i = 0; i < 6; ++i) {
    urbanvae::UrbanNetworkVector v{"city" + std::to_string(i), std::vector<double>(32)};
    for (auto& x : v.values) x = rng.normal();
    vecs.push_back(v);
  }
  urbanvae::write_vectors_csv(vecs, dir / "v.csv");
  const auto r = run({"similar", "--vectors", p(dir / "v.csv"), "--query", "city2", "--k", "5", "--out", p(dir / "nn.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream in(read_file(dir / "nn.csv"));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "rank,city_id,distance");
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_EQ(line.substr(0, line.find(',')), std::to_string(rows));
  }
  EXPECT_EQ(rows, 5);
  EXPECT_TRUE(fs::exists(dir / "nn.csv.run.json"));
  EXPECT_EQ(run({"similar", "--vectors", p(dir / "v.csv"), "--query", "nope", "--out", p(dir / "x.csv")}).code, 1);
  EXPECT_EQ(run({"similar", "--vectors", p(dir / "missing.csv"), "--query", "a", "--out", p(dir / "x.csv")}).code, 2);
}

TEST(Cli, TrainWithZeroEpochsIsValidationError) {
  TempDir dir;
  const auto r = run({"train", "--corpus", p(dir / "nothing.json"), "--epochs", "0", "--out", p(dir / "ck")});
  EXPECT_EQ(r.code, 1) << r.err;
  EXPECT_FALSE(fs::exists(dir / "ck"));
}

TEST(Cli, SeedFallsBackToEnvironment) {
  TempDir dir;
  ::setenv("URBANVAE_SEED", "1234", 1);
  const auto r = run({"synth", "--count", "2", "--out", p(dir / "g")});
  ::unsetenv("URBANVAE_SEED");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto manifest = nlohmann::json::parse(read_file(dir / "g" / "run.json"));
  EXPECT_EQ(manifest["config"]["seed"].get<std::uint64_t>(), 1234u);
  ::setenv("URBANVAE_SEED", "abc", 1);
  EXPECT_EQ(run({"synth", "--count", "2", "--out", p(dir / "h")}).code, 1);
  ::unsetenv("URBANVAE_SEED");
}

TEST(Cli, SmokePipelineUnderOneMinute) {
  TempDir dir;
  const auto& d = dir.path();
  const auto start = std::chrono::steady_clock::now();
  const std::vector<std::vector<std::string>> steps{
      {"synth", "--count", "16", "--out", p(d / "geo")},
      {"rasterize", "--input", p(d / "geo"), "--out", p(d / "corpus")},
      {"split", "--corpus", p(d / "corpus" / "corpus.json"), "--out", p(d / "split.json")},
      {"train", "--corpus", p(d / "split.json"), "--epochs", "2", "--out", p(d / "ck")},
      {"encode", "--checkpoint", p(d / "ck"), "--corpus", p(d / "split.json"), "--out", p(d / "vec.csv")},
      {"cluster", "--vectors", p(d / "vec.csv"), "--k", "2", "--out", p(d / "clusters.csv")},
  };
  for (const auto& step : steps) {
    const auto r = run(step);
    ASSERT_EQ(r.code, 0) << step[0] << ": " << r.err;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_LT(secs, 60.0);
  const auto summary = nlohmann::json::parse(read_file(d / "clusters.json"));
  EXPECT_EQ(summary["K"].get<int>(), 2);
}

TEST_F(Pipeline, ArtifactsAreWellFormed) {
  EXPECT_EQ(std::distance(fs::directory_iterator(d() / "corpus" / "images"), fs::directory_iterator{}), 16);
  const auto split = nlohmann::json::parse(read_file(d() / "split.json"));
  int train = 0, test = 0;
  for (const auto& e : split["entries"]) {
    train += e["split"] == "train";
    test += e["split"] == "test";
  }
  EXPECT_EQ(train, 12);
  EXPECT_EQ(test, 4);
  EXPECT_TRUE(fs::exists(d() / "ck" / "params.bin"));
  EXPECT_TRUE(fs::exists(d() / "ck" / "history.csv"));
  EXPECT_EQ(urbanvae::read_vectors_csv(d() / "vec.csv").size(), 16u);
}

TEST_F(Pipeline, AnalysisSubcommands) {
  const auto vec = p(d() / "vec.csv");
  EXPECT_EQ(run({"cluster", "--vectors", vec, "--k", "3", "--out", p(d() / "cl.csv"), "--map-out", p(d() / "map.csv"),
                 "--corpus", p(d() / "split.json")}).code, 0);
  EXPECT_EQ(read_file(d() / "map.csv").substr(0, 24), "city_id,lon,lat,cluster\n");
  EXPECT_EQ(run({"cluster", "--vectors", vec, "--k", "17", "--out", p(d() / "bad.csv")}).code, 1);
  EXPECT_EQ(run({"elbow", "--vectors", vec, "--k-max", "6", "--out", p(d() / "elbow.csv")}).code, 0);
  const auto elbow = nlohmann::json::parse(read_file(d() / "elbow.json"));
  EXPECT_TRUE(elbow.contains("suggested_K"));
  EXPECT_EQ(run({"tsne", "--vectors", vec, "--perplexity", "4", "--iterations", "300", "--out", p(d() / "tsne.csv")}).code, 0);
  EXPECT_EQ(run({"tsne", "--vectors", vec, "--perplexity", "30", "--out", p(d() / "tsne2.csv")}).code, 1);
  EXPECT_EQ(run({"generate", "--checkpoint", p(d() / "ck"), "--count", "4", "--seed", "2", "--out", p(d() / "gen")}).code, 0);
  EXPECT_TRUE(fs::exists(d() / "gen" / "samples.json"));
  EXPECT_EQ(run({"reconstruct", "--checkpoint", p(d() / "ck"), "--corpus", p(d() / "split.json"), "--count", "3", "--out",
                 p(d() / "recon.pgm")}).code, 0);
  EXPECT_EQ(run({"reconstruct", "--checkpoint", p(d() / "ck"), "--corpus", p(d() / "split.json"), "--count", "17", "--out",
                 p(d() / "recon2.pgm")}).code, 1);
}

TEST_F(Pipeline, CorruptCheckpointExitsWithTwo) {
  TempDir tmp;
  fs::copy(d() / "ck", tmp / "ck", fs::copy_options::recursive);
  std::string blob = read_file(tmp / "ck" / "params.bin");
  blob[0] ^= 0x40;
  urbanvae::testing::write_file(tmp / "ck" / "params.bin", blob);
  const auto r = run({"generate", "--checkpoint", p(tmp / "ck"), "--count", "2", "--out", p(tmp / "gen")});
  EXPECT_EQ(r.code, 2) << r.err;
  EXPECT_NE(r.err.find("digest"), std::string::npos) << r.err;
}

TEST_F(Pipeline, SubcommandsDoNotMutateInputs) {
  const auto before = tree_digest(d());
  TempDir out;
  ASSERT_EQ(run({"encode", "--checkpoint", p(d() / "ck"), "--corpus", p(d() / "split.json"), "--split", "test", "--out",
                 p(out / "v.csv")}).code, 0);
  ASSERT_EQ(run({"split", "--corpus", p(d() / "split.json"), "--ratio", "0.5", "--out", p(out / "s.json")}).code, 0);
  ASSERT_EQ(run({"similar", "--vectors", p(d() / "vec.csv"), "--query", "city_0000_grid", "--out", p(out / "n.csv")}).code, 0);
  ASSERT_EQ(run({"rasterize", "--input", p(d() / "geo"), "--out", p(out / "c")}).code, 0);
  EXPECT_EQ(tree_digest(d()), before);
}

TEST_F(Pipeline, ReplayReproducesEveryOutput) {
  TempDir out;
  const auto vec = p(d() / "vec.csv");
  ASSERT_EQ(run({"cluster", "--vectors", vec, "--k", "2", "--out", p(out / "c.csv")}).code, 0);
  ASSERT_EQ(run({"elbow", "--vectors", vec, "--k-max", "5", "--out", p(out / "e.csv")}).code, 0);
  ASSERT_EQ(run({"tsne", "--vectors", vec, "--perplexity", "4", "--iterations", "250", "--out", p(out / "t.csv")}).code, 0);
  ASSERT_EQ(run({"similar", "--vectors", vec, "--query", "city_0001_radial", "--out", p(out / "n.csv")}).code, 0);
  ASSERT_EQ(run({"generate", "--checkpoint", p(d() / "ck"), "--count", "3", "--out", p(out / "g")}).code, 0);
  const std::vector<fs::path> manifests{
      d() / "geo" / "run.json",    d() / "corpus" / "run.json", d() / "split.json.run.json", d() / "ck" / "run.json",
      d() / "vec.csv.run.json",    out / "c.csv.run.json",      out / "e.csv.run.json",      out / "t.csv.run.json",
      out / "n.csv.run.json",      out / "g" / "run.json"};
  for (const auto& m : manifests) {
    ASSERT_TRUE(fs::exists(m)) << m;
    const auto r = run({"replay", p(m), "--verify"});
    EXPECT_EQ(r.code, 0) << m << ": " << r.err;
  }
}

TEST_F(Pipeline, ReplayDetectsChangedInputs) {
  TempDir out;
  fs::copy_file(d() / "vec.csv", out / "vec.csv");
  ASSERT_EQ(run({"cluster", "--vectors", p(out / "vec.csv"), "--k", "2", "--out", p(out / "c.csv")}).code, 0);
  std::string text = read_file(out / "vec.csv");
  text[text.size() - 2] = text[text.size() - 2] == '1' ? '2' : '1';
  urbanvae::testing::write_file(out / "vec.csv", text);
  EXPECT_EQ(run({"replay", p(out / "c.csv.run.json"), "--verify"}).code, 2);
}
