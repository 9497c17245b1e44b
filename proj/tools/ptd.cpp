#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ptd/dataset_store.hpp"
#include "ptd/embedding.hpp"
#include "ptd/errors.hpp"
#include "ptd/eval_server.hpp"
#include "ptd/eval_service.hpp"
#include "ptd/generation.hpp"
#include "ptd/http_backend.hpp"
#include "ptd/metrics.hpp"
#include "ptd/mock_backend.hpp"
#include "ptd/prompt_grammar.hpp"
#include "ptd/refinement.hpp"
#include "ptd/tav.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ptd;

namespace {

// Where a command reads and writes, derived from --manifest / --features.
struct DatasetPaths {
  fs::path manifest;
  fs::path features;  // empty: <manifest dir>/features

  fs::path root() const { return manifest.has_parent_path() ? manifest.parent_path() : fs::path("."); }
  fs::path features_dir() const { return features.empty() ? root() / "features" : features; }
  fs::path feature(FeatureKind k) const {
    return features_dir() / (std::string(feature_kind_name(k)) + ".ptdf");
  }
};

void add_dataset_options(CLI::App* cmd, DatasetPaths& p, bool with_features = true) {
  cmd->add_option("--manifest", p.manifest, "manifest.jsonl of the dataset")->required();
  if (with_features) cmd->add_option("--features", p.features, "feature directory (default: <root>/features)");
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

/// Writes to `path`, or to stdout when the path is "-".
void emit(const std::string& path, const std::string& text) {
  if (path.empty()) return;
  if (path == "-") {
    std::cout << text;
  } else {
    write_text(path, text);
  }
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

std::unique_ptr<GeneratorBackend> make_generator(const std::string& spec, const RetryPolicy& policy) {
  if (spec == "mock") return std::make_unique<MockBackend>();
  if (spec.starts_with("mock:")) return std::make_unique<MockBackend>(parse_flag_schedule(spec.substr(5)));
  return std::make_unique<HttpGenerator>(spec, policy);
}

std::unique_ptr<EmbeddingBackend> make_embedder(const std::string& spec, const RetryPolicy& policy,
                                                const fs::path& shared_dir) {
  if (spec == "mock") return std::make_unique<MockEmbedder>();
  return std::make_unique<HttpEmbedder>(spec, policy, shared_dir);
}

/// Rows of `m` whose ids pass `keep`, in the original order.
FeatureMatrix select_rows(const FeatureMatrix& m, const std::set<std::uint64_t>& ids) {
  FeatureMatrix out(m.kind(), m.dim());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    if (ids.contains(m.ids()[r])) out.append(m.ids()[r], m.row(r));
  }
  return out;
}

enum class Subset { All, Refined };

/// Image ids per texture class ("" holds every class).
std::map<std::string, std::set<std::uint64_t>> group_ids(const std::vector<ImageRecord>& manifest, Subset subset,
                                                        bool per_class) {
  std::map<std::string, std::set<std::uint64_t>> out;
  for (const auto& r : manifest) {
    if (r.flagged) continue;
    if (subset == Subset::Refined && !r.survived_through(Stage::Clip)) continue;
    out[""].insert(r.image_id);
    if (per_class) out[r.texture_class].insert(r.image_id);
  }
  return out;
}

std::vector<PromptRecord> load_prompts_for(const DatasetPaths& p, const fs::path& prompts_file) {
  const fs::path file = prompts_file.empty() ? DatasetLayout{p.root()}.prompts() : prompts_file;
  if (fs::exists(file)) return read_prompts(file);
  throw IoError("no prompt records at " + file.string() + " (pass --prompts)");
}

// ---------------------------------------------------------------------------
// prompts

void setup_prompts(CLI::App& app) {
  auto* prompts = app.add_subcommand("prompts", "Prompt grammar");
  prompts->require_subcommand(1);
  auto* emit_cmd = prompts->add_subcommand("emit", "Enumerate every prompt of a descriptor table");
  auto table = std::make_shared<fs::path>();
  auto out = std::make_shared<fs::path>();
  auto extra_templates = std::make_shared<std::vector<std::string>>();
  emit_cmd->add_option("--table", *table, "descriptor table JSON (default: built-in table)");
  emit_cmd->add_option("--template", *extra_templates, "additional template, repeatable");
  emit_cmd->add_option("--out", *out, "prompts.jsonl to write")->required();
  emit_cmd->callback([=] {
    DescriptorTable t = table->empty() ? DescriptorTable::defaults() : load_descriptor_table(*table);
    for (const auto& s : *extra_templates) t.templates.push_back(s);
    t.validate();
    const auto prompts = enumerate_prompts(t);
    write_prompts(*out, prompts);
    std::printf("%zu prompts (%zu templates) -> %s\n", prompts.size(), t.templates.size(), out->c_str());
    for (const auto& d : find_duplicate_texts(prompts)) {
      std::fprintf(stderr, "warning: %zu prompts render as \"%s\"\n", d.prompt_ids.size(), d.text.c_str());
    }
  });
}

// ---------------------------------------------------------------------------
// generate

void setup_generate(CLI::App& app) {
  auto* cmd = app.add_subcommand("generate", "Generate images for a prompt file");
  struct Args {
    fs::path prompts, out;
    std::string backend = "mock";
    GenerationOptions gen;
    int retries = 3;
    std::uint64_t first = 0, count = 0;
  };
  auto a = std::make_shared<Args>();
  cmd->add_option("--prompts,--manifest", a->prompts, "prompts.jsonl from `ptd prompts emit`")->required();
  cmd->add_option("--backend", a->backend, "generation service URL, or mock[:never|odd|rate:p|word:w[@p]]")
      ->capture_default_str();
  cmd->add_option("--n", a->gen.n_keep, "unflagged images to keep per prompt")->capture_default_str();
  cmd->add_option("--max-attempts", a->gen.max_attempts, "attempts per kept image")->capture_default_str();
  cmd->add_option("--width", a->gen.width)->capture_default_str();
  cmd->add_option("--height", a->gen.height)->capture_default_str();
  cmd->add_option("--workers", a->gen.workers, "prompts in flight")->capture_default_str();
  cmd->add_option("--retries", a->retries, "HTTP attempts per request")->capture_default_str();
  cmd->add_option("--first", a->first, "skip prompts before this index");
  cmd->add_option("--count", a->count, "only this many prompts (0 = all)");
  cmd->add_option("--out", a->out, "dataset root")->required();
  cmd->callback([a] {
    auto prompts = read_prompts(a->prompts);
    const auto begin = std::min<std::size_t>(a->first, prompts.size());
    const auto end = a->count == 0 ? prompts.size() : std::min<std::size_t>(prompts.size(), begin + a->count);
    prompts = {prompts.begin() + static_cast<std::ptrdiff_t>(begin), prompts.begin() + static_cast<std::ptrdiff_t>(end)};
    RetryPolicy policy;
    policy.max_attempts = a->retries;
    auto backend = make_generator(a->backend, policy);
    a->gen.out_dir = a->out;
    const DatasetLayout layout{a->out};
    fs::create_directories(a->out);
    write_prompts(layout.prompts(), prompts);
    const auto run = run_generation(prompts, *backend, a->gen);
    write_generation_outputs(layout, run);
    std::printf("%zu prompts, %zu attempts: %zu kept, %zu flagged, %zu prompts incomplete\n", prompts.size(),
                run.total_attempts, run.manifest.size(), run.ledger.size(), run.incomplete.size());
  });
}

// ---------------------------------------------------------------------------
// dataset import / embed / verify

void setup_dataset(CLI::App& app) {
  auto* ds = app.add_subcommand("dataset", "Dataset utilities");
  ds->require_subcommand(1);
  auto* imp = ds->add_subcommand("import", "Build a manifest for a directory of <class>/<image>.png files");
  auto src = std::make_shared<fs::path>();
  imp->add_option("--images", *src, "root whose subdirectories are texture classes")->required()->check(
      CLI::ExistingDirectory);
  imp->callback([src] {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(*src)) {
      if (!e.is_regular_file()) continue;
      const auto top = fs::relative(e.path(), *src).begin()->string();
      if (top == "quarantine" || top.starts_with(".")) continue;
      auto ext = e.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
      if (ext == ".png") files.push_back(fs::relative(e.path(), *src));
    }
    std::sort(files.begin(), files.end());
    std::vector<ImageRecord> records;
    for (const auto& rel : files) {
      ImageRecord r;
      r.image_id = records.size();
      r.prompt_id = r.image_id;
      r.texture_class = rel.has_parent_path() ? rel.begin()->string() : std::string("unlabelled");
      r.prompt_text = r.texture_class;
      r.file_path = rel.generic_string();
      const auto bytes = read_file(*src / rel);
      std::tie(r.width, r.height) = png_dimensions(bytes);
      records.push_back(std::move(r));
    }
    write_manifest(DatasetLayout{*src}.manifest(), records);
    std::printf("%zu images -> %s\n", records.size(), DatasetLayout{*src}.manifest().c_str());
  });

  auto* embed = app.add_subcommand("embed", "Compute a feature file through the embedding service");
  struct Args {
    fs::path root, shared;
    std::string kind, backend = "mock";
    EmbedOptions opts;
    int retries = 3;
  };
  auto a = std::make_shared<Args>();
  embed->add_option("--root", a->root, "dataset root")->required();
  embed->add_option("--kind", a->kind, "clip_image | clip_text | inception_pool | inception_logits | classifier_probs")
      ->required();
  embed->add_option("--backend", a->backend, "embedding service URL or `mock`")->capture_default_str();
  embed->add_option("--batch", a->opts.batch_size)->capture_default_str();
  embed->add_option("--workers", a->opts.workers)->capture_default_str();
  embed->add_option("--retries", a->retries)->capture_default_str();
  embed->add_option("--shared-dir", a->shared, "directory the service can write PTDF replies into");
  embed->callback([a] {
    RetryPolicy policy;
    policy.max_attempts = a->retries;
    auto backend = make_embedder(a->backend, policy, a->shared);
    const auto kind = parse_feature_kind(a->kind);
    const auto m = embed_dataset(a->root, kind, *backend, a->opts);
    std::printf("%zu x %zu -> %s\n", m.rows(), m.dim(), feature_file(a->root, kind).c_str());
  });

  auto* verify = app.add_subcommand("verify", "Check manifest, images, ledger and feature files agree");
  auto root = std::make_shared<fs::path>();
  verify->add_option("--root", *root, "dataset root")->required();
  verify->callback([root] {
    const auto rep = verify_dataset(*root);
    for (const auto& p : rep.problems) std::printf("problem: %s\n", p.c_str());
    std::printf("%zu images, %zu feature files checked: %s\n", rep.images_checked, rep.feature_files_checked,
                rep.ok() ? "ok" : "FAILED");
    if (!rep.ok()) throw CLI::RuntimeError(1);
  });
}

// ---------------------------------------------------------------------------
// refine

void setup_refine(CLI::App& app) {
  auto* cmd = app.add_subcommand("refine", "Score images and apply the per-class quantile filters");
  struct Args {
    std::string stage;
    DatasetPaths paths;
    double keep = 0.8;
    std::optional<double> keep_freq, keep_patchvar, keep_clip;
    ScoringOptions scoring;
    bool rescore = false, balance = false;
    std::string json_out, out;
  };
  auto a = std::make_shared<Args>();
  cmd->add_option("stage", a->stage, "freq | patchvar | clip | all")
      ->required()
      ->check(CLI::IsMember({"freq", "patchvar", "clip", "all"}));
  add_dataset_options(cmd, a->paths);
  cmd->add_option("--keep", a->keep, "fraction kept per class at each stage")->capture_default_str();
  cmd->add_option("--keep-freq", a->keep_freq);
  cmd->add_option("--keep-patchvar", a->keep_patchvar);
  cmd->add_option("--keep-clip", a->keep_clip);
  cmd->add_option("--patch-size", a->scoring.patch_size)->capture_default_str();
  cmd->add_option("--clip-scale", a->scoring.clip_scale)->capture_default_str();
  cmd->add_option("--workers", a->scoring.workers)->capture_default_str();
  cmd->add_flag("--rescore", a->rescore, "recompute f_c and patch variance even when present");
  cmd->add_flag("--balance", a->balance, "truncate every class to the smallest after the clip stage");
  cmd->add_option("--json", a->json_out, "write stage reports as JSON (- for stdout)");
  cmd->add_option("--out", a->out, "manifest to write (default: overwrite --manifest)");
  cmd->callback([a] {
    auto manifest = read_manifest(a->paths.manifest);
    const bool all = a->stage == "all";
    const Stage first = all ? Stage::Freq : parse_stage(a->stage);

    const bool needs_pixels = all || first != Stage::Clip;
    const bool missing = std::any_of(manifest.begin(), manifest.end(), [](const ImageRecord& r) {
      return !r.flagged && !r.excluded && (!r.stage_scores.f_c || !r.stage_scores.patch_var);
    });
    if (needs_pixels && (a->rescore || missing)) {
      score_images(manifest, png_loader(a->paths.root()), a->scoring);
    }
    if (all || first == Stage::Clip) {
      const auto img = load_features(a->paths.feature(FeatureKind::ClipImage));
      const auto txt = load_features(a->paths.feature(FeatureKind::ClipText));
      score_clip(manifest, img, txt, a->scoring.clip_scale);
    }

    KeepFractions f{a->keep_freq.value_or(a->keep), a->keep_patchvar.value_or(a->keep),
                    a->keep_clip.value_or(a->keep)};
    std::vector<StageReport> reports;
    if (all) {
      reports = refine_all(manifest, f);
    } else {
      for (auto& r : manifest) {
        for (Stage s : kStages) {
          if (s >= first) r.survives[s].reset();
        }
      }
      reports.push_back(quantile_cut(manifest, first, f[first]));
    }
    for (const auto& rep : reports) std::cout << format_stage_report(rep) << '\n';
    if (a->balance && (all || first == Stage::Clip)) {
      std::printf("balanced to %zu images per class\n", balance_classes(manifest));
    }
    write_manifest(a->out.empty() ? a->paths.manifest : fs::path(a->out), manifest);
    if (!a->json_out.empty()) {
      json arr = json::array();
      for (const auto& rep : reports) arr.push_back(json::parse(stage_report_json(rep)));
      emit(a->json_out, arr.dump(2) + "\n");
    }
  });
}

// ---------------------------------------------------------------------------
// metrics

struct MetricArgs {
  DatasetPaths paths;
  fs::path reference;
  bool per_class = false;
  std::string subset = "all";
  std::string json_out, csv_out;
};

void add_metric_options(CLI::App* cmd, MetricArgs& a) {
  add_dataset_options(cmd, a.paths);
  cmd->add_flag("--per-class", a.per_class, "also report each texture class");
  cmd->add_option("--subset", a.subset, "all | refined (survivors of every stage)")
      ->check(CLI::IsMember({"all", "refined"}))
      ->capture_default_str();
  cmd->add_option("--json", a.json_out, "write JSON report (- for stdout)");
  cmd->add_option("--csv", a.csv_out, "write CSV report (- for stdout)");
}

Subset subset_of(const MetricArgs& a) { return a.subset == "refined" ? Subset::Refined : Subset::All; }

std::string group_label(const std::string& g) { return g.empty() ? "(all)" : g; }

void setup_metrics(CLI::App& app) {
  auto* metrics = app.add_subcommand("metrics", "Dataset-level metrics");
  metrics->require_subcommand(1);

  // Inception Score
  {
    auto* cmd = metrics->add_subcommand("is", "Inception Score from inception_logits features");
    auto a = std::make_shared<MetricArgs>();
    auto splits = std::make_shared<int>(10);
    add_metric_options(cmd, *a);
    cmd->add_option("--splits", *splits)->capture_default_str();
    cmd->callback([a, splits] {
      const auto manifest = read_manifest(a->paths.manifest);
      const auto logits = load_features(a->paths.feature(FeatureKind::InceptionLogits));
      json out = json::array();
      std::string csv = "group,n,splits,mean,stddev\n";
      for (const auto& [group, ids] : group_ids(manifest, subset_of(*a), a->per_class)) {
        const auto m = select_rows(logits, ids);
        const auto r = inception_score(m, *splits);
        std::printf("%-20s n=%-7zu IS %.4f +- %.4f\n", group_label(group).c_str(), m.rows(), r.mean, r.stddev);
        out.push_back({{"group", group_label(group)}, {"n", m.rows()}, {"splits", r.split_scores},
                       {"mean", r.mean}, {"stddev", r.stddev}});
        char line[160];
        std::snprintf(line, sizeof line, "%s,%zu,%d,%.10g,%.10g\n", csv_field(group_label(group)).c_str(), m.rows(),
                      r.n_splits, r.mean, r.stddev);
        csv += line;
      }
      emit(a->json_out, out.dump(2) + "\n");
      emit(a->csv_out, csv);
    });
  }

  // FID
  {
    auto* cmd = metrics->add_subcommand("fid", "Frechet distance of inception_pool features to a reference set");
    auto a = std::make_shared<MetricArgs>();
    add_metric_options(cmd, *a);
    cmd->add_option("--reference", a->reference, "reference dataset root with features/inception_pool.ptdf")
        ->required();
    cmd->callback([a] {
      const auto manifest = read_manifest(a->paths.manifest);
      const auto pool = load_features(a->paths.feature(FeatureKind::InceptionPool));
      const DatasetPaths ref{DatasetLayout{a->reference}.manifest(), {}};
      const auto ref_manifest = read_manifest(ref.manifest);
      const auto ref_pool = load_features(ref.feature(FeatureKind::InceptionPool));
      const auto ref_groups = group_ids(ref_manifest, Subset::All, a->per_class);
      json out = json::array();
      std::string csv = "group,n,n_reference,fid\n";
      for (const auto& [group, ids] : group_ids(manifest, subset_of(*a), a->per_class)) {
        auto rit = ref_groups.find(group);
        if (rit == ref_groups.end()) {
          std::fprintf(stderr, "warning: reference has no class '%s'; skipped\n", group.c_str());
          continue;
        }
        const auto mine = select_rows(pool, ids);
        const auto theirs = select_rows(ref_pool, rit->second);
        const double d = fid(feature_stats(mine), feature_stats(theirs));
        std::printf("%-20s n=%-7zu ref=%-7zu FID %.4f\n", group_label(group).c_str(), mine.rows(), theirs.rows(), d);
        out.push_back({{"group", group_label(group)}, {"n", mine.rows()}, {"n_reference", theirs.rows()}, {"fid", d}});
        char line[160];
        std::snprintf(line, sizeof line, "%s,%zu,%zu,%.10g\n", csv_field(group_label(group)).c_str(), mine.rows(),
                      theirs.rows(), d);
        csv += line;
      }
      emit(a->json_out, out.dump(2) + "\n");
      emit(a->csv_out, csv);
    });
  }

  // Mean power spectrum
  {
    auto* cmd = metrics->add_subcommand("spectrum", "Dataset mean power spectrum (map PNG + radial profile)");
    auto a = std::make_shared<MetricArgs>();
    auto resize = std::make_shared<int>(kSpectrumSide);
    auto png_prefix = std::make_shared<std::string>();
    add_metric_options(cmd, *a);
    cmd->add_option("--reference", a->reference, "reference dataset root to compare against");
    cmd->add_option("--resize", *resize, "resample side before the FFT (0: require equal sizes)")
        ->capture_default_str();
    cmd->add_option("--png", *png_prefix, "write <prefix>.png (and <prefix>_reference.png)");
    cmd->callback([a, resize, png_prefix] {
      const std::optional<int> side = *resize > 0 ? std::optional<int>(*resize) : std::nullopt;
      auto spectrum_of = [&](const std::vector<ImageRecord>& records, const fs::path& root, Subset subset) {
        SpectrumAccumulator acc(side);
        const auto load = png_loader(root);
        for (const auto& r : records) {
          if (r.flagged || !r.file_path) continue;
          if (subset == Subset::Refined && !r.survived_through(Stage::Clip)) continue;
          acc.add(load(r));
        }
        return acc.result();
      };
      const auto mine = spectrum_of(read_manifest(a->paths.manifest), a->paths.root(), subset_of(*a));
      json out = {{"images", mine.images}, {"radial", mine.radial.bins}};
      std::string csv = "k,power\n";
      for (std::size_t k = 0; k < mine.radial.bins.size(); ++k) {
        csv += std::to_string(k) + "," + std::to_string(mine.radial.bins[k]) + "\n";
      }
      if (!png_prefix->empty()) write_file(*png_prefix + ".png", encode_png(spectrum_display(mine.log_map)));
      std::printf("%zu images, %zu radial bins\n", mine.images, mine.radial.bins.size());
      if (!a->reference.empty()) {
        const auto ref = spectrum_of(read_manifest(DatasetLayout{a->reference}.manifest()), a->reference, Subset::All);
        const double d = spectral_distance(mine.radial, ref.radial);
        out["reference"] = {{"images", ref.images}, {"radial", ref.radial.bins}};
        out["spectral_distance"] = d;
        if (!png_prefix->empty()) {
          write_file(*png_prefix + "_reference.png", encode_png(spectrum_display(ref.log_map)));
        }
        std::printf("reference: %zu images, spectral distance %.6g\n", ref.images, d);
      }
      emit(a->json_out, out.dump() + "\n");
      emit(a->csv_out, csv);
    });
  }

  // CLIP statistics by descriptor pair
  {
    auto* cmd = metrics->add_subcommand("clipstats", "CLIP score mean/median per descriptor pair");
    auto a = std::make_shared<MetricArgs>();
    auto prompts_file = std::make_shared<fs::path>();
    auto top = std::make_shared<std::size_t>(20);
    add_metric_options(cmd, *a);
    cmd->add_option("--prompts", *prompts_file, "prompts.jsonl (default: <root>/prompts.jsonl)");
    cmd->add_option("--top", *top, "rows printed to the terminal")->capture_default_str();
    cmd->callback([a, prompts_file, top] {
      const auto manifest = read_manifest(a->paths.manifest);
      std::vector<ImageRecord> scored;
      for (const auto& r : manifest) {
        if (r.flagged || !r.stage_scores.clip) continue;
        if (subset_of(*a) == Subset::Refined && !r.survived_through(Stage::Clip)) continue;
        scored.push_back(r);
      }
      const auto stats = clip_stats_by_pair(scored, load_prompts_for(a->paths, *prompts_file));
      json out = json::array();
      std::string csv = "family,first,second,n,mean,median\n";
      for (std::size_t i = 0; i < stats.size(); ++i) {
        const auto& s = stats[i];
        if (i < *top) std::printf("%-18s %-40s n=%-7zu mean %.3f median %.3f\n", s.family.c_str(), s.label().c_str(),
                                  s.n, s.mean, s.median);
        out.push_back({{"family", s.family}, {"first", s.first}, {"second", s.second}, {"n", s.n},
                       {"mean", s.mean}, {"median", s.median}});
        char line[64];
        std::snprintf(line, sizeof line, ",%zu,%.10g,%.10g\n", s.n, s.mean, s.median);
        csv += csv_field(s.family) + "," + csv_field(s.first) + "," + csv_field(s.second) + line;
      }
      emit(a->json_out, out.dump(2) + "\n");
      emit(a->csv_out, csv);
    });
  }

  // Human representativeness vs CLIP quantile
  {
    auto* cmd = metrics->add_subcommand("curve", "Mean representativeness below each CLIP-score quantile");
    auto a = std::make_shared<MetricArgs>();
    auto ratings = std::make_shared<fs::path>();
    auto grid = std::make_shared<std::vector<double>>();
    add_metric_options(cmd, *a);
    cmd->add_option("--ratings", *ratings, "rating log (jsonl)")->required();
    cmd->add_option("--q", *grid, "quantiles (default 0.1 .. 1.0)")->delimiter(',');
    cmd->callback([a, ratings, grid] {
      const auto manifest = read_manifest(a->paths.manifest);
      std::unordered_map<ImageId, double> clip;
      for (const auto& r : manifest) {
        if (r.stage_scores.clip) clip.emplace(r.image_id, *r.stage_scores.clip);
      }
      std::vector<RatingRecord> scored;
      for (auto& r : resolve_ratings(read_rating_log(*ratings))) {
        if (clip.contains(r.image_id)) scored.push_back(std::move(r));
      }
      if (grid->empty()) {
        for (int i = 1; i <= 10; ++i) grid->push_back(i / 10.0);
      }
      const auto curve = human_vs_clip_curve(scored, clip, *grid);
      json out = {{"points", json::array()}, {"empty_quantiles", curve.empty_quantiles}};
      std::string csv = "q,threshold,n,mean_representativeness\n";
      for (const auto& p : curve.points) {
        std::printf("q=%.3f  clip<=%.4f  n=%-6zu repr %.4f\n", p.q, p.threshold, p.n, p.mean_representativeness);
        out["points"].push_back({{"q", p.q}, {"threshold", p.threshold}, {"n", p.n},
                                 {"mean_representativeness", p.mean_representativeness}});
        char line[128];
        std::snprintf(line, sizeof line, "%.6g,%.10g,%zu,%.10g\n", p.q, p.threshold, p.n, p.mean_representativeness);
        csv += line;
      }
      for (double q : curve.empty_quantiles) std::printf("q=%.3f  (empty)\n", q);
      emit(a->json_out, out.dump(2) + "\n");
      emit(a->csv_out, csv);
    });
  }
}

// ---------------------------------------------------------------------------
// tav

void setup_tav(CLI::App& app) {
  auto* cmd = app.add_subcommand("tav", "Texture-object association values from classifier probabilities");
  struct Args {
    fs::path manifest, probs, labels;
    std::size_t top = 3;
    std::string subset = "refined";
    std::string json_out, csv_out;
  };
  auto a = std::make_shared<Args>();
  cmd->add_option("--manifest", a->manifest)->required();
  cmd->add_option("--probs", a->probs, "classifier_probs feature file")->required();
  cmd->add_option("--labels", a->labels, "object class names, one per line")->required();
  cmd->add_option("--top", a->top)->capture_default_str();
  cmd->add_option("--subset", a->subset, "all | refined")
      ->check(CLI::IsMember({"all", "refined"}))
      ->capture_default_str();
  cmd->add_option("--json", a->json_out, "full table as JSON (- for stdout)");
  cmd->add_option("--csv", a->csv_out, "top-k rows as CSV (- for stdout)");
  cmd->callback([a] {
    auto manifest = read_manifest(a->manifest);
    std::set<std::string> classes;
    for (const auto& r : manifest) classes.insert(r.texture_class);
    if (a->subset == "refined") {
      std::erase_if(manifest, [](const ImageRecord& r) { return !r.survived_through(Stage::Clip); });
    }
    const std::vector<std::string> class_list(classes.begin(), classes.end());
    const auto table = compute_tav(manifest, load_features(a->probs), load_labels(a->labels), class_list);
    for (const auto& w : table.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    const auto top = top_k_associations(table, a->top);
    std::string csv = "texture,rank,object,value\n";
    json tops = json::object();
    for (std::size_t t = 0; t < table.textures.size(); ++t) {
      std::printf("%-16s", table.textures[t].c_str());
      for (std::size_t k = 0; k < top[t].size(); ++k) {
        std::printf("  %s %.4f", top[t][k].object.c_str(), top[t][k].value);
        char line[64];
        std::snprintf(line, sizeof line, ",%zu,", k + 1);
        csv += csv_field(table.textures[t]) + line + csv_field(top[t][k].object) + "," +
               std::to_string(top[t][k].value) + "\n";
        tops[table.textures[t]].push_back({{"object", top[t][k].object}, {"value", top[t][k].value}});
      }
      std::printf("\n");
    }
    json out = {{"textures", table.textures}, {"objects", table.objects}, {"values", table.values},
                {"image_counts", table.image_counts}, {"top", tops}, {"warnings", table.warnings}};
    emit(a->json_out, out.dump() + "\n");
    emit(a->csv_out, csv);
  });
}

// ---------------------------------------------------------------------------
// eval

void setup_eval(CLI::App& app) {
  auto* eval = app.add_subcommand("eval", "Human evaluation service");
  eval->require_subcommand(1);
  struct Common {
    fs::path manifest, sessions, ratings;
  };
  auto common = std::make_shared<Common>();
  auto add_common = [common](CLI::App* cmd) {
    cmd->add_option("--manifest", common->manifest)->required();
    cmd->add_option("--sessions", common->sessions, "sessions file (default: <root>/eval/sessions.json)");
    cmd->add_option("--ratings", common->ratings, "rating log (default: <root>/eval/ratings.jsonl)");
  };
  auto resolve = [common] {
    const fs::path root = common->manifest.has_parent_path() ? common->manifest.parent_path() : fs::path(".");
    if (common->sessions.empty()) common->sessions = root / "eval" / "sessions.json";
    if (common->ratings.empty()) common->ratings = root / "eval" / "ratings.jsonl";
    return root;
  };

  {
    auto* cmd = eval->add_subcommand("assign", "Draw disjoint rating sessions from the pre-refinement pool");
    add_common(cmd);
    auto n = std::make_shared<std::size_t>(9), per = std::make_shared<std::size_t>(100);
    auto seed = std::make_shared<std::uint64_t>(0);
    cmd->add_option("--n", *n, "participants")->capture_default_str();
    cmd->add_option("--per", *per, "images per participant")->capture_default_str();
    cmd->add_option("--seed", *seed)->capture_default_str();
    cmd->callback([=] {
      resolve();
      EvalService svc(read_manifest(common->manifest), common->sessions, common->ratings);
      const auto sessions = svc.create(*n, *per, *seed);
      for (const auto& s : sessions) {
        std::printf("%s  %-4s %zu images\n", s.session_id.c_str(), s.participant.c_str(), s.image_ids.size());
      }
      std::printf("-> %s\n", common->sessions.c_str());
    });
  }
  {
    auto* cmd = eval->add_subcommand("serve", "Serve the rating API, images and web client");
    add_common(cmd);
    auto host = std::make_shared<std::string>("127.0.0.1");
    auto port = std::make_shared<int>(8080);
    auto token = std::make_shared<std::string>();
    auto static_dir = std::make_shared<fs::path>();
    auto descriptor = std::make_shared<std::string>("full");
    cmd->add_option("--host", *host)->capture_default_str();
    cmd->add_option("--port", *port)->capture_default_str();
    cmd->add_option("--admin-token", *token, "required by POST /api/sessions when set")->envname("PTD_ADMIN_TOKEN");
    cmd->add_option("--static", *static_dir, "rater web client directory, served at /");
    cmd->add_option("--descriptor", *descriptor, "full | texture")
        ->check(CLI::IsMember({"full", "texture"}))
        ->capture_default_str();
    cmd->callback([=] {
      const fs::path root = resolve();
      EvalOptions opts;
      opts.full_prompt_descriptor = *descriptor == "full";
      EvalService svc(read_manifest(common->manifest), common->sessions, common->ratings, opts);
      EvalServer server(svc, {root, *token, *static_dir});
      const int bound = server.bind(*host, *port);
      std::printf("serving %zu sessions on http://%s:%d\n", svc.sessions().size(), host->c_str(), bound);
      std::fflush(stdout);
      server.serve();
    });
  }
  {
    auto* cmd = eval->add_subcommand("report", "Mean ratings per cumulative refinement stage");
    add_common(cmd);
    auto json_out = std::make_shared<std::string>();
    cmd->add_option("--json", *json_out, "write JSON (- for stdout)");
    cmd->callback([=] {
      resolve();
      std::vector<RatingRecord> ratings;
      if (fs::exists(common->ratings)) ratings = resolve_ratings(read_rating_log(common->ratings));
      std::printf("%zu resolved ratings\n", ratings.size());
      const auto table = aggregate_by_stage(ratings, read_manifest(common->manifest));
      std::cout << format_stage_table(table);
      emit(*json_out, stage_table_json(table) + "\n");
    });
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prompted texture dataset toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "ptd 0.1.0");
  setup_prompts(app);
  setup_generate(app);
  setup_dataset(app);
  setup_refine(app);
  setup_metrics(app);
  setup_tav(app);
  setup_eval(app);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const ptd::Error& e) {
    std::fprintf(stderr, "ptd: error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "ptd: unexpected error: %s\n", e.what());
    return 3;
  }
  return 0;
}
