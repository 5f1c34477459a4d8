#include "urbanvae_cli/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include "json.hpp"

#include "run_manifest.hpp"
#include "urbanvae/checkpoint.hpp"
#include "urbanvae/dataset.hpp"
#include "urbanvae/digest.hpp"
#include "urbanvae/error.hpp"
#include "urbanvae/generation.hpp"
#include "urbanvae/geometry.hpp"
#include "urbanvae/kmeans.hpp"
#include "urbanvae/latent.hpp"
#include "urbanvae/nn/gradcheck.hpp"
#include "urbanvae/pgm.hpp"
#include "urbanvae/raster.hpp"
#include "urbanvae/synth.hpp"
#include "urbanvae/train.hpp"
#include "urbanvae/tsne.hpp"
#include "urbanvae/version.hpp"

namespace urbanvae::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kSeedEnv = "URBANVAE_SEED";

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string join(const std::vector<std::string>& items, char sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

/// Effective configuration, kept both as a replayable argv and as JSON.
class Effective {
 public:
  explicit Effective(std::string subcommand) : argv_{std::move(subcommand)} {}

  void add(const std::string& flag, const std::string& value) {
    push(flag, value);
    config_[flag] = value;
  }
  void add(const std::string& flag, const char* value) { add(flag, std::string(value)); }
  void add(const std::string& flag, const fs::path& value) { add(flag, value.generic_string()); }
  void add(const std::string& flag, double value) {
    push(flag, format_number(value));
    config_[flag] = value;
  }
  void add(const std::string& flag, std::uint64_t value) {
    push(flag, std::to_string(value));
    config_[flag] = value;
  }
  void add(const std::string& flag, int value) {
    push(flag, std::to_string(value));
    config_[flag] = value;
  }
  void add(const std::string& flag, bool value) {
    push(flag, value ? "true" : "false");
    config_[flag] = value;
  }

  const std::vector<std::string>& argv() const { return argv_; }
  const json& config() const { return config_; }

 private:
  void push(const std::string& flag, std::string value) {
    argv_.push_back("--" + flag);
    argv_.push_back(std::move(value));
  }

  std::vector<std::string> argv_;
  json config_ = json::object();
};

struct Context {
  std::ostream& err;
  int threads = 1;
  std::vector<fs::path> inputs;
  std::vector<fs::path> outputs;
};

fs::path normalized(const fs::path& p) { return fs::absolute(p).lexically_normal(); }

void ensure_distinct(const fs::path& input, const fs::path& output) {
  if (normalized(input) == normalized(output))
    throw ValidationError("output " + output.string() + " would overwrite input");
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

void ensure_parent(const fs::path& file) {
  if (file.has_parent_path()) ensure_dir(file.parent_path());
}

std::ofstream open_output(const fs::path& path) {
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void close_output(std::ofstream& out, const fs::path& path) {
  out.close();
  if (!out) throw IoError("write failed: " + path.string());
}

void write_json_file(const json& doc, const fs::path& path) {
  auto out = open_output(path);
  out << doc.dump(2) << '\n';
  close_output(out, path);
}

bool safe_id(const std::string& id) {
  return !id.empty() && id != "." && id != ".." && id.find_first_of("/\\,\n\r\"") == std::string::npos;
}

// Manifests written next to outputs (run.json, <file>.run.json) are not inputs.
bool is_run_manifest(const fs::path& p) {
  const std::string name = p.filename().string();
  return name == "run.json" || name.ends_with(".run.json");
}

std::vector<fs::path> checkpoint_files(const fs::path& dir) { return {dir / "manifest.json", dir / "params.bin"}; }

SplitRole parse_role_or_all(const std::string& text, std::optional<SplitRole>& role) {
  if (text == "all") {
    role.reset();
    return SplitRole::unassigned;
  }
  const SplitRole r = parse_split_role(text);
  role = r;
  return r;
}

struct LoadedCorpus {
  CorpusManifest manifest;
  std::vector<RasterImage> images;
};

LoadedCorpus load_corpus(const fs::path& corpus, std::optional<SplitRole> role, Context& ctx) {
  LoadedCorpus out{load_manifest(corpus), {}};
  ctx.inputs.push_back(corpus);
  const fs::path dir = corpus.parent_path();
  for (const auto& e : out.manifest.entries)
    if (!role || e.split == *role) ctx.inputs.push_back(dir / e.file);
  out.images = load_corpus_images(out.manifest, dir, role);
  return out;
}

PointSet to_points(const std::vector<UrbanNetworkVector>& vectors) {
  PointSet pts;
  pts.reserve(vectors.size());
  for (const auto& v : vectors) pts.push_back(v.values);
  return pts;
}

std::vector<UrbanNetworkVector> load_vectors(const fs::path& path, Context& ctx) {
  ctx.inputs.push_back(path);
  auto vectors = read_vectors_csv(path);
  if (vectors.empty()) throw ValidationError(path.string() + " holds no vectors");
  return vectors;
}

// ---------------------------------------------------------------------------

class Command {
 public:
  virtual ~Command() = default;

  void attach(CLI::App& parent, const std::string& name, const std::string& description) {
    app_ = parent.add_subcommand(name, description);
    app_->add_option("--run-manifest", run_manifest_,
                     "Where to write the run manifest (default: next to the primary output)");
    setup(*app_);
  }

  CLI::App* app() const { return app_; }
  const std::string& name() const { return app_->get_name(); }

  /// Resolves --seed, then the environment fallback, then 0.
  void resolve_seed() {
    if (!uses_seed_) return;
    if (seed_flag_) {
      seed_ = *seed_flag_;
      return;
    }
    if (const char* env = std::getenv(kSeedEnv); env && *env) {
      std::uint64_t v = 0;
      const std::string_view text(env);
      const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
      if (res.ec != std::errc() || res.ptr != text.data() + text.size())
        throw ValidationError(std::string(kSeedEnv) + " must be a non-negative integer, got '" + env + "'");
      seed_ = v;
      return;
    }
    seed_ = 0;
  }

  fs::path manifest_path() const {
    if (!run_manifest_.empty()) return run_manifest_;
    const fs::path primary = primary_output();
    if (output_is_directory()) return primary / "run.json";
    return fs::path(primary.string() + ".run.json");
  }

  Effective effective() const {
    Effective e(name());
    if (uses_seed_) e.add("seed", seed_);
    describe(e);
    if (!run_manifest_.empty()) e.add("run-manifest", run_manifest_);
    return e;
  }

  /// Returns the exit status; failures that leave no usable output throw.
  virtual int execute(Context& ctx) = 0;
  virtual bool writes_manifest() const { return true; }

 protected:
  virtual void setup(CLI::App& app) = 0;
  virtual void describe(Effective& e) const = 0;
  virtual fs::path primary_output() const = 0;
  virtual bool output_is_directory() const { return false; }

  void add_seed(CLI::App& app) {
    uses_seed_ = true;
    app.add_option("--seed", seed_flag_, std::string("Random seed (falls back to $") + kSeedEnv + ", then 0)");
  }

  std::uint64_t seed_ = 0;

 private:
  CLI::App* app_ = nullptr;
  bool uses_seed_ = false;
  std::optional<std::uint64_t> seed_flag_;
  fs::path run_manifest_;
};

class SynthCommand final : public Command {
  std::size_t count_ = 16;
  std::string classes_ = "grid,radial,random";
  fs::path out_;

  void setup(CLI::App& app) override {
    add_seed(app);
    app.add_option("--count", count_, "Number of cities")->capture_default_str();
    app.add_option("--classes", classes_, "Comma-separated pattern classes, cycled in order")
        ->capture_default_str();
    app.add_option("--out", out_, "Directory for the geometry files")->required();
  }
  void describe(Effective& e) const override {
    e.add("count", count_);
    e.add("classes", classes_);
    e.add("out", out_);
  }
  fs::path primary_output() const override { return out_; }
  bool output_is_directory() const override { return true; }

 public:
  int execute(Context& ctx) override {
    if (count_ < 1) throw ValidationError("--count must be >= 1");
    std::vector<SynthClass> classes;
    for (const auto& c : split_list(classes_)) classes.push_back(parse_synth_class(c));
    if (classes.empty()) throw ValidationError("--classes is empty");
    const auto nets = synth_corpus(count_, seed_, classes);
    ensure_dir(out_);
    for (const auto& net : nets) {
      const fs::path path = out_ / (net.city_id + ".json");
      save_street_geometry(net, path);
      ctx.outputs.push_back(path);
    }
    ctx.err << "synth: wrote " << nets.size() << " cities to " << out_.string() << '\n';
    return 0;
  }
};

class RasterizeCommand final : public Command {
  fs::path input_;
  fs::path out_;
  double window_ = 3000.0;
  int resolution_ = kImageSize;

  void setup(CLI::App& app) override {
    app.add_option("--input", input_, "Geometry file or directory of *.json geometry files")->required();
    app.add_option("--out", out_, "Output corpus directory")->required();
    app.add_option("--window", window_, "Window side length in meters")->capture_default_str();
    app.add_option("--resolution", resolution_, "Raster size in pixels (only 64 is supported)")
        ->capture_default_str();
  }
  void describe(Effective& e) const override {
    e.add("input", input_);
    e.add("out", out_);
    e.add("window", window_);
    e.add("resolution", resolution_);
  }
  fs::path primary_output() const override { return out_; }
  bool output_is_directory() const override { return true; }

 public:
  int execute(Context& ctx) override {
    if (!(window_ > 0.0) || !std::isfinite(window_)) throw ValidationError("--window must be positive");
    if (resolution_ != kImageSize) throw ValidationError("--resolution must be 64");
    std::vector<fs::path> files;
    if (fs::is_directory(input_)) {
      for (const auto& entry : fs::directory_iterator(input_))
        if (entry.is_regular_file() && entry.path().extension() == ".json" && !is_run_manifest(entry.path()))
          files.push_back(entry.path());
      std::sort(files.begin(), files.end());
    } else if (fs::exists(input_)) {
      files.push_back(input_);
    } else {
      throw IoError("input not found: " + input_.string());
    }
    if (files.empty()) throw ValidationError("no *.json geometry files in " + input_.string());

    CorpusManifest manifest;
    manifest.window_m = window_;
    manifest.resolution = resolution_;
    ensure_dir(out_ / "images");
    std::map<std::string, fs::path> seen;
    for (const auto& file : files) {
      ctx.inputs.push_back(file);
      std::vector<std::string> warnings;
      const StreetNetwork net = load_street_geometry(file, &warnings);
      for (const auto& w : warnings) ctx.err << "warning: " << w << '\n';
      if (!safe_id(net.city_id)) throw ValidationError(file.string() + ": unusable city_id '" + net.city_id + "'");
      if (auto [it, fresh] = seen.emplace(net.city_id, file); !fresh)
        throw ValidationError("city_id '" + net.city_id + "' appears in both " + it->second.string() + " and " +
                              file.string());
      const RasterImage img = render_city(net, window_, resolution_);
      const std::string rel = "images/" + net.city_id + ".pgm";
      write_pgm(out_ / rel, to_gray(img, true));
      ctx.outputs.push_back(out_ / rel);
      manifest.entries.push_back({net.city_id, rel, net.origin_lonlat, SplitRole::unassigned, net.label});
    }
    const fs::path corpus = out_ / "corpus.json";
    save_manifest(manifest, corpus);
    ctx.outputs.push_back(corpus);
    ctx.err << "rasterize: " << manifest.entries.size() << " images, window " << window_ << " m\n";
    return 0;
  }
};

class SplitCommand final : public Command {
  fs::path corpus_;
  double ratio_ = 0.8;
  fs::path out_;

  void setup(CLI::App& app) override {
    add_seed(app);
    app.add_option("--corpus", corpus_, "Corpus manifest (corpus.json)")->required();
    app.add_option("--ratio", ratio_, "Training fraction")->capture_default_str();
    app.add_option("--out", out_, "Where to write the split corpus manifest")->required();
  }
  void describe(Effective& e) const override {
    e.add("corpus", corpus_);
    e.add("ratio", ratio_);
    e.add("out", out_);
  }
  fs::path primary_output() const override { return out_; }

 public:
  int execute(Context& ctx) override {
    ensure_distinct(corpus_, out_);
    CorpusManifest m = load_manifest(corpus_);
    ctx.inputs.push_back(corpus_);
    const DatasetSplit split = split_dataset(m.ids(), ratio_, seed_);
    m.apply(split, ratio_);
    // Image paths stay valid when the new manifest lives elsewhere.
    const fs::path from = normalized(corpus_).parent_path();
    const fs::path to = normalized(out_).parent_path();
    for (auto& e : m.entries) e.file = (from / e.file).lexically_normal().lexically_relative(to).generic_string();
    ensure_parent(out_);
    save_manifest(m, out_);
    ctx.outputs.push_back(out_);
    ctx.err << "split: " << split.train_ids.size() << " train / " << split.test_ids.size() << " test\n";
    return 0;
  }
};

class TrainCommand final : public Command {
  fs::path corpus_;
  fs::path out_;
  fs::path history_;
  TrainConfig cfg_;

  void setup(CLI::App& app) override {
    add_seed(app);
    app.add_option("--corpus", corpus_, "Split corpus manifest")->required();
    app.add_option("--out", out_, "Checkpoint directory")->required();
    app.add_option("--epochs", cfg_.epochs, "Training epochs")->capture_default_str();
    app.add_option("--batch-size", cfg_.batch_size, "Mini-batch size")->capture_default_str();
    app.add_option("--lr", cfg_.learning_rate, "Adam learning rate")->capture_default_str();
    app.add_option("--augment", cfg_.augment, "Random crop and flip augmentation (true/false)")
        ->capture_default_str();
    app.add_option("--history", history_, "Loss history CSV (default: <out>/history.csv)");
  }
  void describe(Effective& e) const override {
    e.add("corpus", corpus_);
    e.add("out", out_);
    e.add("epochs", cfg_.epochs);
    e.add("batch-size", cfg_.batch_size);
    e.add("lr", cfg_.learning_rate);
    e.add("augment", cfg_.augment);
    e.add("history", history_path());
  }
  fs::path primary_output() const override { return out_; }
  bool output_is_directory() const override { return true; }
  fs::path history_path() const { return history_.empty() ? out_ / "history.csv" : history_; }

 public:
  int execute(Context& ctx) override {
    cfg_.seed = seed_;
    cfg_.threads = ctx.threads;
    cfg_.checkpoint_path = out_;
    cfg_.validate();
    const auto train_set = load_corpus(corpus_, SplitRole::train, ctx);
    if (train_set.images.empty())
      throw ValidationError(corpus_.string() + " has no training split; run `split` first");
    const auto test_set = load_corpus(corpus_, SplitRole::test, ctx);
    ctx.inputs.erase(std::find(ctx.inputs.begin() + 1, ctx.inputs.end(), corpus_));

    ctx.err << "train: " << train_set.images.size() << " train / " << test_set.images.size() << " test images, "
            << cfg_.epochs << " epochs\n";
    const auto result = train(train_set.images, test_set.images, cfg_, [&](const EpochStats& s) {
      ctx.err << "epoch " << s.epoch << ": train " << s.train_total << " (recon " << s.train_recon << ", kl "
              << s.train_kl << "), test " << s.test_total << '\n';
    });
    ensure_parent(history_path());
    write_history_csv(result.history, history_path());
    for (const auto& f : checkpoint_files(out_)) ctx.outputs.push_back(f);
    ctx.outputs.push_back(history_path());
    return 0;
  }
};

class EncodeCommand final : public Command {
  fs::path checkpoint_;
  fs::path corpus_;
  std::string split_ = "all";
  fs::path out_;

  void setup(CLI::App& app) override {
    app.add_option("--checkpoint", checkpoint_, "Checkpoint directory")->required();
    app.add_option("--corpus", corpus_, "Corpus manifest")->required();
    app.add_option("--split", split_, "Which entries to encode: all, train, test")->capture_default_str();
    app.add_option("--out", out_, "Vector CSV")->required();
  }
  void describe(Effective& e) const override {
    e.add("checkpoint", checkpoint_);
    e.add("corpus", corpus_);
    e.add("split", split_);
    e.add("out", out_);
  }
  fs::path primary_output() const override { return out_; }

 public:
  int execute(Context& ctx) override {
    std::optional<SplitRole> role;
    parse_role_or_all(split_, role);
    const Vae<float> model = load_checkpoint(checkpoint_);
    for (const auto& f : checkpoint_files(checkpoint_)) ctx.inputs.push_back(f);
    const auto corpus = load_corpus(corpus_, role, ctx);
    if (corpus.images.empty()) throw ValidationError("no images selected for encoding");
    const auto vectors = encode_corpus(model, corpus.images, ctx.threads);
    ensure_parent(out_);
    write_vectors_csv(vectors, out_);
    ctx.outputs.push_back(out_);
    ctx.err << "encode: " << vectors.size() << " vectors\n";
    return 0;
  }
};

class SimilarCommand final : public Command {
  fs::path vectors_;
  std::string query_;
  std::size_t k_ = 5;
  fs::path out_;

  void setup(CLI::App& app) override {
    app.add_option("--vectors", vectors_, "Vector CSV")->required();
    app.add_option("--query", query_, "City id to query")->required();
    app.add_option("--k", k_, "Number of neighbors")->capture_default_str();
    app.add_option("--out", out_, "Ranked neighbor CSV")->required();
  }
  void describe(Effective& e) const override {
    e.add("vectors", vectors_);
    e.add("query", query_);
    e.add("k", k_);
    e.add("out", out_);
  }
  fs::path primary_output() const override { return out_; }

 public:
  int execute(Context& ctx) override {
    ensure_distinct(vectors_, out_);
    const auto vectors = load_vectors(vectors_, ctx);
    const auto ranked = nearest_neighbors(vectors, query_, k_);
    auto out = open_output(out_);
    out << "rank,city_id,distance\n";
    for (std::size_t i = 0; i < ranked.size(); ++i)
      out << i + 1 << ',' << ranked[i].city_id << ',' << format_number(ranked[i].distance) << '\n';
    close_output(out, out_);
    ctx.outputs.push_back(out_);
    return 0;
  }
};

class ClusterCommand final : public Command {
  fs::path vectors_;
  int k_ = 3;
  int restarts_ = 10;
  fs::path out_;
  fs::path summary_;
  fs::path map_out_;
  fs::path corpus_;

  void setup(CLI::App& app) override {
    add_seed(app);
    app.add_option("--vectors", vectors_, "Vector CSV")->required();
    app.add_option("--k", k_, "Number of clusters")->capture_default_str();
    app.add_option("--restarts", restarts_, "k-means++ restarts")->capture_default_str();
    app.add_option("--out", out_, "Assignment CSV (city_id,cluster)")->required();
    app.add_option("--summary", summary_, "Summary JSON (default: <out>.json)");
    app.add_option("--map-out", map_out_, "Optional CSV city_id,lon,lat,cluster; needs --corpus");
    app.add_option("--corpus", corpus_, "Corpus manifest providing city locations");
  }
  void describe(Effective& e) const override {
    e.add("vectors", vectors_);
    e.add("k", k_);
    e.add("restarts", restarts_);
    e.add("out", out_);
    e.add("summary", summary_path());
    if (!map_out_.empty()) e.add("map-out", map_out_);
    if (!corpus_.empty()) e.add("corpus", corpus_);
  }
  fs::path primary_output() const override { return out_; }
  fs::path summary_path() const {
    return summary_.empty() ? fs::path(out_).replace_extension(".json") : summary_;
  }

 public:
  int execute(Context& ctx) override {
    if (!map_out_.empty() && corpus_.empty()) throw ValidationError("--map-out needs --corpus for city locations");
    ensure_distinct(vectors_, out_);
    ensure_distinct(vectors_, summary_path());
    const auto vectors = load_vectors(vectors_, ctx);
    const ClusterModel model = kmeans(to_points(vectors), k_, seed_, {restarts_, 300, ctx.threads});

    auto out = open_output(out_);
    out << "city_id,cluster\n";
    for (std::size_t i = 0; i < vectors.size(); ++i) out << vectors[i].city_id << ',' << model.assignments[i] << '\n';
    close_output(out, out_);
    ctx.outputs.push_back(out_);

    std::vector<std::size_t> sizes(static_cast<std::size_t>(model.k), 0);
    for (int a : model.assignments) ++sizes[static_cast<std::size_t>(a)];
    json summary;
    summary["K"] = model.k;
    summary["wcss"] = model.wcss;
    summary["centroids"] = model.centroids;
    summary["sizes"] = sizes;
    summary["seed"] = model.seed;
    summary["restarts"] = model.restarts;
    summary["iterations"] = model.iterations;
    summary["converged"] = model.converged;
    write_json_file(summary, summary_path());
    ctx.outputs.push_back(summary_path());

    if (!map_out_.empty()) {
      const CorpusManifest corpus = load_manifest(corpus_);
      ctx.inputs.push_back(corpus_);
      auto map = open_output(map_out_);
      map << "city_id,lon,lat,cluster\n";
      for (std::size_t i = 0; i < vectors.size(); ++i) {
        const CorpusEntry* e = corpus.find(vectors[i].city_id);
        map << vectors[i].city_id << ',';
        if (e && e->origin_lonlat)
          map << format_number(e->origin_lonlat->lon) << ',' << format_number(e->origin_lonlat->lat);
        else
          map << ',';
        map << ',' << model.assignments[i] << '\n';
      }
      close_output(map, map_out_);
      ctx.outputs.push_back(map_out_);
    }
    ctx.err << "cluster: K=" << model.k << " wcss " << model.wcss << '\n';
    return 0;
  }
};

class ElbowCommand final : public Command {
  fs::path vectors_;
  int k_max_ = 10;
  int restarts_ = 10;
  fs::path out_;
  fs::path summary_;

  void setup(CLI::App& app) override {
    add_seed(app);
    app.add_option("--vectors", vectors_, "Vector CSV")->required();
    app.add_option("--k-max", k_max_, "Largest K on the curve")->capture_default_str();
    app.add_option("--restarts", restarts_, "k-means++ restarts per K")->capture_default_str();
    app.add_option("--out", out_, "Curve CSV (K,wcss)")->required();
    app.add_option("--summary", summary_, "Suggestion JSON (default: <out>.json)");
  }
  void describe(Effective& e) const override {
    e.add("vectors", vectors_);
    e.add("k-max", k_max_);
    e.add("restarts", restarts_);
    e.add("out", out_);
    e.add("summary", summary_path());
  }
  fs::path primary_output() const override { return out_; }
  fs::path summary_path() const {
    return summary_.empty() ? fs::path(out_).replace_extension(".json") : summary_;
  }

 public:
  int execute(Context& ctx) override {
    ensure_distinct(vectors_, out_);
    const auto vectors = load_vectors(vectors_, ctx);
    const ElbowResult r = elbow_curve(to_points(vectors), k_max_, seed_, {restarts_, 300, ctx.threads});
    auto out = open_output(out_);
    out << "K,wcss\n";
    for (std::size_t i = 0; i < r.ks.size(); ++i) out << r.ks[i] << ',' << format_number(r.wcss[i]) << '\n';
    close_output(out, out_);
    ctx.outputs.push_back(out_);
    json summary;
    summary["suggested_K"] = r.suggested_k;
    summary["chord_distance"] = r.chord_distance;
    summary["low_confidence"] = r.low_confidence;
    write_json_file(summary, summary_path());
    ctx.outputs.push_back(summary_path());
    ctx.err << "elbow: suggested K=" << r.suggested_k << (r.low_confidence ? " (low confidence)" : "") << '\n';
    return 0;
  }
};

class TsneCommand final : public Command {
  fs::path vectors_;
  TsneOptions opts_;
  fs::path out_;

  void setup(CLI::App& app) override {
    add_seed(app);
    app.add_option("--vectors", vectors_, "Vector CSV")->required();
    app.add_option("--perplexity", opts_.perplexity, "Effective neighbor count")->capture_default_str();
    app.add_option("--iterations", opts_.iterations, "Gradient steps")->capture_default_str();
    app.add_option("--out", out_, "Embedding CSV (city_id,x,y)")->required();
  }
  void describe(Effective& e) const override {
    e.add("vectors", vectors_);
    e.add("perplexity", opts_.perplexity);
    e.add("iterations", opts_.iterations);
    e.add("out", out_);
  }
  fs::path primary_output() const override { return out_; }

 public:
  int execute(Context& ctx) override {
    ensure_distinct(vectors_, out_);
    const auto vectors = load_vectors(vectors_, ctx);
    TsneOptions opts = opts_;
    opts.threads = ctx.threads;
    const Embedding2D emb = tsne(to_points(vectors), seed_, opts);
    auto out = open_output(out_);
    out << "city_id,x,y\n";
    for (std::size_t i = 0; i < vectors.size(); ++i)
      out << vectors[i].city_id << ',' << format_number(emb.points[i][0]) << ',' << format_number(emb.points[i][1])
          << '\n';
    close_output(out, out_);
    ctx.outputs.push_back(out_);
    ctx.err << "tsne: final KL " << emb.kl << '\n';
    return 0;
  }
};

class GenerateCommand final : public Command {
  fs::path checkpoint_;
  std::size_t count_ = 64;
  std::optional<double> threshold_;
  std::size_t columns_ = 8;
  fs::path out_;

  void setup(CLI::App& app) override {
    add_seed(app);
    app.add_option("--checkpoint", checkpoint_, "Checkpoint directory")->required();
    app.add_option("--count", count_, "Number of prior samples")->capture_default_str();
    app.add_option("--threshold", threshold_, "Binarize exports at this probability");
    app.add_option("--columns", columns_, "Columns in the sample grid")->capture_default_str();
    app.add_option("--out", out_, "Output directory")->required();
  }
  void describe(Effective& e) const override {
    e.add("checkpoint", checkpoint_);
    e.add("count", count_);
    if (threshold_) e.add("threshold", *threshold_);
    e.add("columns", columns_);
    e.add("out", out_);
  }
  fs::path primary_output() const override { return out_; }
  bool output_is_directory() const override { return true; }

 public:
  int execute(Context& ctx) override {
    const Vae<float> model = load_checkpoint(checkpoint_);
    for (const auto& f : checkpoint_files(checkpoint_)) ctx.inputs.push_back(f);
    auto codes = sample_prior(count_, seed_, model.architecture().latent_dim);
    const SampleBatch batch = generate(model, std::move(codes), seed_, threshold_, ctx.threads);
    for (const auto& f : write_samples(batch, out_, columns_)) ctx.outputs.push_back(f);
    ctx.err << "generate: " << batch.images.size() << " samples in " << out_.string() << '\n';
    return 0;
  }
};

class ReconstructCommand final : public Command {
  fs::path checkpoint_;
  fs::path corpus_;
  std::string split_ = "test";
  std::size_t count_ = 8;
  std::vector<std::string> ids_;
  fs::path out_;

  void setup(CLI::App& app) override {
    app.add_option("--checkpoint", checkpoint_, "Checkpoint directory")->required();
    app.add_option("--corpus", corpus_, "Corpus manifest")->required();
    app.add_option("--split", split_, "Entries to draw from: all, train, test")->capture_default_str();
    app.add_option("--count", count_, "Number of columns (at most 16)")->capture_default_str();
    app.add_option("--ids", ids_, "Explicit city ids (overrides --split and --count)")->delimiter(',');
    app.add_option("--out", out_, "Output PGM")->required();
  }
  void describe(Effective& e) const override {
    e.add("checkpoint", checkpoint_);
    e.add("corpus", corpus_);
    if (ids_.empty()) {
      e.add("split", split_);
      e.add("count", count_);
    } else {
      e.add("ids", join(ids_, ','));
    }
    e.add("out", out_);
  }
  fs::path primary_output() const override { return out_; }

 public:
  int execute(Context& ctx) override {
    const Vae<float> model = load_checkpoint(checkpoint_);
    for (const auto& f : checkpoint_files(checkpoint_)) ctx.inputs.push_back(f);
    std::vector<RasterImage> chosen;
    if (!ids_.empty()) {
      if (ids_.size() > kMaxGridColumns) throw ValidationError("at most 16 ids fit in a reconstruction grid");
      const CorpusManifest m = load_manifest(corpus_);
      ctx.inputs.push_back(corpus_);
      for (const auto& id : ids_) {
        const CorpusEntry* e = m.find(id);
        if (!e) throw ValidationError("unknown city id '" + id + "'");
        const fs::path file = corpus_.parent_path() / e->file;
        ctx.inputs.push_back(file);
        RasterImage img = load_raster_pgm(file, true);
        img.city_id = id;
        chosen.push_back(std::move(img));
      }
    } else {
      if (count_ < 1 || count_ > kMaxGridColumns) throw ValidationError("--count must be in [1, 16]");
      std::optional<SplitRole> role;
      parse_role_or_all(split_, role);
      const CorpusManifest m = load_manifest(corpus_);
      ctx.inputs.push_back(corpus_);
      for (const auto& e : m.entries) {
        if (role && e.split != *role) continue;
        if (chosen.size() == count_) break;
        const fs::path file = corpus_.parent_path() / e.file;
        ctx.inputs.push_back(file);
        RasterImage img = load_raster_pgm(file, true);
        img.city_id = e.city_id;
        chosen.push_back(std::move(img));
      }
      if (chosen.empty()) throw ValidationError("no images in split '" + split_ + "'");
    }
    ensure_parent(out_);
    write_pgm(out_, reconstruction_grid(model, chosen, ctx.threads));
    ctx.outputs.push_back(out_);
    ctx.err << "reconstruct: " << chosen.size() << " columns -> " << out_.string() << '\n';
    return 0;
  }
};

json report_json(const nn::GradCheckReport& r) {
  json worst = json::array();
  for (const auto& e : r.worst)
    worst.push_back({{"tensor", e.tensor},
                     {"index", e.index},
                     {"analytic", e.analytic},
                     {"numeric", e.numeric},
                     {"abs_error", e.abs_error},
                     {"rel_error", e.rel_error},
                     {"ok", e.ok}});
  return {{"fragment", r.fragment},   {"passed", r.passed},
          {"checked", r.checked},     {"failed", r.failed},
          {"kinks_skipped", r.kinks_skipped},
          {"max_rel_error", r.max_rel_error}, {"failing_layers", r.failing_layers()},
          {"worst", worst}};
}

class GradcheckCommand final : public Command {
  int shapes_ = 20;
  std::string channels_ = "32,64,128,256";
  std::size_t samples_ = 32;
  fs::path out_;

  void setup(CLI::App& app) override {
    add_seed(app);
    app.add_option("--shapes", shapes_, "Random shapes per layer type")->capture_default_str();
    app.add_option("--channels", channels_, "Encoder channel widths for the full-loss check")
        ->capture_default_str();
    app.add_option("--samples", samples_, "Elements checked per tensor")->capture_default_str();
    app.add_option("--out", out_, "Report JSON")->required();
  }
  void describe(Effective& e) const override {
    e.add("shapes", shapes_);
    e.add("channels", channels_);
    e.add("samples", samples_);
    e.add("out", out_);
  }
  fs::path primary_output() const override { return out_; }

 public:
  int execute(Context& ctx) override {
    if (shapes_ < 1) throw ValidationError("--shapes must be >= 1");
    Architecture arch;
    const auto widths = split_list(channels_);
    if (widths.size() != arch.channels.size()) throw ValidationError("--channels needs four widths");
    for (std::size_t i = 0; i < widths.size(); ++i) {
      int w = 0;
      const auto res = std::from_chars(widths[i].data(), widths[i].data() + widths[i].size(), w);
      if (res.ec != std::errc() || res.ptr != widths[i].data() + widths[i].size())
        throw ValidationError("bad channel width '" + widths[i] + "'");
      arch.channels[i] = w;
    }
    arch.validate();
    nn::GradCheckOptions opts;
    opts.seed = seed_;
    opts.samples_per_tensor = samples_;
    auto reports = nn::layer_gradcheck_suite(shapes_, seed_, opts);
    reports.push_back(vae_gradcheck(arch, seed_, opts));

    json doc;
    doc["reports"] = json::array();
    bool passed = true;
    for (const auto& r : reports) {
      doc["reports"].push_back(report_json(r));
      passed = passed && r.passed;
      ctx.err << r.summary() << '\n';
    }
    doc["passed"] = passed;
    write_json_file(doc, out_);
    ctx.outputs.push_back(out_);
    if (!passed) {
      std::vector<std::string> layers;
      for (const auto& r : reports)
        for (const auto& l : r.failing_layers()) layers.push_back(r.fragment + ":" + l);
      ctx.err << "gradcheck: FAILED for " << join(layers, ' ') << '\n';
      return 1;
    }
    ctx.err << "gradcheck: all fragments passed\n";
    return 0;
  }
};

// ---------------------------------------------------------------------------

struct Registry {
  std::vector<std::unique_ptr<Command>> commands;

  template <typename C>
  void add(CLI::App& app, const std::string& name, const std::string& description) {
    commands.push_back(std::make_unique<C>());
    commands.back()->attach(app, name, description);
  }

  void attach_all(CLI::App& app) {
    add<SynthCommand>(app, "synth", "Generate procedural street networks (grid, radial, random)");
    add<RasterizeCommand>(app, "rasterize", "Crop and rasterize street geometry into a 64x64 corpus");
    add<SplitCommand>(app, "split", "Assign corpus entries to train and test");
    add<TrainCommand>(app, "train", "Train the VAE and write a checkpoint");
    add<EncodeCommand>(app, "encode", "Write urban network vectors for a corpus");
    add<SimilarCommand>(app, "similar", "Rank the nearest cities to a query");
    add<ClusterCommand>(app, "cluster", "k-means clustering of urban network vectors");
    add<ElbowCommand>(app, "elbow", "WCSS curve over K with a suggested K");
    add<TsneCommand>(app, "tsne", "2-D t-SNE embedding of urban network vectors");
    add<GenerateCommand>(app, "generate", "Decode samples from the prior");
    add<ReconstructCommand>(app, "reconstruct", "Originals over reconstructions as one PGM");
    add<GradcheckCommand>(app, "gradcheck", "Finite-difference check of every layer and the full loss");
  }

  Command* selected() const {
    for (const auto& c : commands)
      if (c->app()->parsed()) return c.get();
    return nullptr;
  }
};

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const IoError*>(&e)) return 2;  // includes parse and corrupt-artifact errors
  return 1;
}

int run_parsed(Command& cmd, int threads, std::ostream& err) {
  cmd.resolve_seed();
  Context ctx{err, threads, {}, {}};
  const int status = cmd.execute(ctx);
  if (cmd.writes_manifest()) {
    const Effective eff = cmd.effective();
    RunManifest m;
    m.tool_version = kVersion;
    m.subcommand = cmd.name();
    m.argv = eff.argv();
    m.config = eff.config();
    m.threads = threads;
    m.inputs = digest_files(ctx.inputs);
    m.outputs = digest_files(ctx.outputs);
    write_run_manifest(m, cmd.manifest_path());
  }
  return status;
}

int run_impl(const std::vector<std::string>& args, std::ostream& err, bool allow_replay);

int replay(const fs::path& manifest_path, bool verify, std::optional<int> threads, std::ostream& err) {
  const RunManifest m = read_run_manifest(manifest_path);
  for (const auto& in : m.inputs) {
    if (!fs::exists(in.path)) throw IoError("replay: input " + in.path + " is missing");
    if (file_sha256_hex(in.path) != in.sha256)
      throw CorruptArtifactError("replay: input " + in.path + " changed since the recorded run");
  }
  std::vector<std::string> args = m.argv;
  args.push_back("--threads");
  args.push_back(std::to_string(threads.value_or(1)));
  err << "replay: " << join(m.argv, ' ') << '\n';
  const int status = run_impl(args, err, false);
  if (status != 0) return status;
  if (!verify) return 0;
  std::size_t mismatched = 0;
  for (const auto& out : m.outputs) {
    if (!fs::exists(out.path) || file_sha256_hex(out.path) != out.sha256) {
      err << "replay: output differs: " << out.path << '\n';
      ++mismatched;
    }
  }
  if (mismatched) {
    err << "replay: " << mismatched << " of " << m.outputs.size() << " outputs differ\n";
    return 1;
  }
  err << "replay: all " << m.outputs.size() << " outputs identical\n";
  return 0;
}

int run_impl(const std::vector<std::string>& args, std::ostream& err, bool allow_replay) {
  CLI::App app("Street-network rasterization, VAE training and latent-space analysis", "urbanvae");
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  app.fallthrough();
  int threads = 1;
  app.add_option("--threads", threads, "Worker threads (results are identical for any value)")
      ->capture_default_str();

  Registry registry;
  registry.attach_all(app);

  fs::path replay_manifest;
  bool verify = false;
  CLI::App* replay_app = nullptr;
  if (allow_replay) {
    replay_app = app.add_subcommand("replay", "Rerun a subcommand from its run manifest");
    replay_app->add_option("manifest", replay_manifest, "Run manifest JSON")->required();
    replay_app->add_flag("--verify", verify, "Compare the new outputs with the recorded digests");
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return 0;
  } catch (const CLI::CallForVersion&) {
    err << kVersion << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    const auto subs = app.get_subcommands();
    err << "error: " << e.what() << "\n\n" << (subs.empty() ? app.help() : subs.front()->help());
    return 1;
  }

  try {
    if (threads < 1) throw ValidationError("--threads must be >= 1");
    if (replay_app && replay_app->parsed()) {
      const bool explicit_threads = app.count("--threads") > 0;
      return replay(replay_manifest, verify, explicit_threads ? std::optional<int>(threads) : std::nullopt, err);
    }
    Command* cmd = registry.selected();
    if (!cmd) throw ValidationError("no subcommand given");
    return run_parsed(*cmd, threads, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& err) { return run_impl(args, err, true); }

}  // namespace urbanvae::cli
