// One PASS/FAIL line per acceptance criterion. Exit status is the number of
// failed criteria (capped at 255).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "ptd/dataset_store.hpp"
#include "ptd/embedding.hpp"
#include "ptd/errors.hpp"
#include "ptd/eval_service.hpp"
#include "ptd/generation.hpp"
#include "ptd/metrics.hpp"
#include "ptd/mock_backend.hpp"
#include "ptd/prompt_grammar.hpp"
#include "ptd/refinement.hpp"
#include "ptd/spectrum.hpp"
#include "ptd/tav.hpp"
#include "scratch.hpp"

using namespace ptd;

namespace {

using Clock = std::chrono::steady_clock;

/// Collects failures inside one criterion; the first few are printed.
struct Check {
  std::vector<std::string> failures;
  std::string summary;

  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string fixed_clock() { return "2024-01-01T00:00:00.000Z"; }

// ---------------------------------------------------------------------------

void prompt_enumeration(Check& c) {
  const auto t0 = Clock::now();
  auto table = DescriptorTable::defaults();
  const auto one = enumerate_prompts(table);
  table.templates.push_back("a {texture} texture, {artistic} {spatial} {enhancer} {color}");
  const auto two = enumerate_prompts(table);
  const double dt = seconds_since(t0);
  c.expect(one.size() == 48'384, "one template gave " + std::to_string(one.size()));
  c.expect(two.size() == 96'768, "two templates gave " + std::to_string(two.size()));
  c.expect(dt < 1.0, "took " + fmt("%.3f s", dt));
  c.summary = std::to_string(one.size()) + " / " + std::to_string(two.size()) + " prompts in " + fmt("%.3f s", dt);
}

void cascade_retention(Check& c) {
  // 56 classes x 20 prompts x 5 kept images, 5% of attempts flagged.
  const PromptGrammar grammar(DescriptorTable::defaults());
  std::vector<PromptRecord> prompts;
  const std::uint64_t per_texture = grammar.size() / grammar.table().textures.size();
  for (std::uint64_t t = 0; t < grammar.table().textures.size(); ++t) {
    for (std::uint64_t j = 0; j < 20; ++j) prompts.push_back(grammar.at(t * per_texture + j * 43));
  }
  GenerationOptions gen;
  gen.n_keep = 5;
  gen.width = gen.height = 128;
  gen.workers = 4;
  gen.clock = fixed_clock;
  MockBackend backend(flag_rate(0.05));
  auto run = run_generation(prompts, backend, gen);
  c.expect(run.incomplete.empty(), std::to_string(run.incomplete.size()) + " incomplete prompts");

  auto load = [](const ImageRecord& r) { return to_gray(mock_texture(r.prompt_text, r.seed, r.width, r.height)); };
  score_images(run.manifest, load, {32, kDefaultClipScale, 4});

  MockEmbedder embedder;
  FeatureMatrix img(FeatureKind::ClipImage, embedder.dim(FeatureKind::ClipImage));
  FeatureMatrix txt(FeatureKind::ClipText, embedder.dim(FeatureKind::ClipText));
  for (const auto& r : run.manifest) {
    const EmbedItem item{r.image_id, {}, encode_png(mock_texture(r.prompt_text, r.seed, r.width, r.height))};
    img.append(r.image_id, embedder.embed(FeatureKind::ClipImage, std::span(&item, 1)).front());
  }
  for (const auto& p : prompts) {
    const EmbedItem item{p.prompt_id, p.text, {}};
    txt.append(p.prompt_id, embedder.embed(FeatureKind::ClipText, std::span(&item, 1)).front());
  }
  score_clip(run.manifest, img, txt);

  std::map<std::string, std::size_t> unflagged;
  for (const auto& r : run.manifest) ++unflagged[r.texture_class];
  c.expect(unflagged.size() == 56, std::to_string(unflagged.size()) + " classes");
  for (const auto& [cls, n] : unflagged) c.expect(n == 100, cls + " has " + std::to_string(n) + " images");

  const auto reports = refine_all(run.manifest, {0.8, 0.8, 0.8});
  const std::size_t want[3] = {80, 64, 52};
  for (std::size_t s = 0; s < 3; ++s) {
    for (const auto& [cls, cut] : reports[s].classes) {
      c.expect(cut.kept == want[s], std::string(stage_name(kStages[s])) + " kept " + std::to_string(cut.kept) +
                                        " of " + cls);
    }
  }
  std::size_t violations = 0;
  for (const auto& r : run.manifest) {
    const bool f = r.survives.freq.value_or(false);
    const bool p = r.survives.patchvar.value_or(false);
    const bool k = r.survives.clip.value_or(false);
    if ((p && !f) || (k && !p) || r.excluded) ++violations;
  }
  c.expect(violations == 0, std::to_string(violations) + " monotonicity violations");
  c.summary = std::to_string(run.manifest.size()) + " images, " + std::to_string(run.ledger.size()) +
              " flagged attempts; per class 100 -> 80 -> 64 -> 52";
}

GrayImage cosine_ring(int k) {
  GrayImage g(64, 64);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) g(x, y) = 100.0 * std::cos(2.0 * std::numbers::pi * k * x / 64);
  return g;
}

void frequency_cutoff_oracle(Check& c) {
  const auto t0 = Clock::now();
  std::vector<std::pair<std::string, GrayImage>> cases = {{"constant", GrayImage(64, 64, 120.0)}};
  std::vector<int> expected = {0};
  for (int k : {3, 8, 20}) {
    cases.emplace_back("ring " + std::to_string(k), cosine_ring(k));
    expected.push_back(k);
  }
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> u(0, 255);
  GrayImage noise(64, 64);
  for (double& v : noise.pixels) v = u(rng);
  cases.emplace_back("white noise", noise);
  expected.push_back(-1);  // taken from the oracle

  double worst = 0.0;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto& [name, img] = cases[i];
    const auto fast = radial_power_spectrum(img);
    const auto slow = oracle::radial_spectrum(img);
    if (fast.bins.size() != slow.size()) {
      c.expect(false, name + ": bin count differs");
      continue;
    }
    const double scale = *std::max_element(slow.begin(), slow.end());
    for (std::size_t k = 0; k < slow.size(); ++k) {
      const double denom = std::max(std::abs(slow[k]), 1e-6 * scale);
      const double rel = std::abs(fast.bins[k] - slow[k]) / denom;
      worst = std::max(worst, rel);
      c.expect(rel <= 1e-6, name + " bin " + std::to_string(k) + " rel err " + fmt("%.2e", rel));
    }
    const int want = expected[i] >= 0 ? expected[i] : oracle::first_crossing(slow);
    const int got = frequency_cutoff(fast);
    c.expect(got == want, name + ": f_c " + std::to_string(got) + " want " + std::to_string(want));
  }
  const double dt = seconds_since(t0);
  c.expect(dt < 10.0, "took " + fmt("%.2f s", dt));
  c.summary = "5 images, worst bin rel err " + fmt("%.1e", worst) + ", " + fmt("%.2f s", dt);
}

void patch_variance_checks(Check& c) {
  c.expect(patch_variance(GrayImage(512, 512, 42.0)) == 0.0, "constant image not 0");
  GrayImage alt(512, 512);
  for (int y = 0; y < 512; ++y)
    for (int x = 0; x < 512; ++x) alt(x, y) = ((x / 50 + y / 50) % 2 == 0) ? 255.0 : 0.0;
  const double v = patch_variance(alt);
  c.expect(v == 16256.25, "alternating patches gave " + fmt("%.10g", v));
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(0, 255);
  double worst = 0;
  for (int t = 0; t < 10; ++t) {
    GrayImage g(150 + 23 * t, 300 - 11 * t);
    for (double& p : g.pixels) p = u(rng);
    const double want = oracle::patch_variance(g, 50);
    const double err = std::abs(patch_variance(g) - want) / std::max(1.0, want);
    worst = std::max(worst, err);
    c.expect(err <= 1e-9, "random image " + std::to_string(t) + " err " + fmt("%.2e", err));
  }
  c.summary = "alternating = " + fmt("%.2f", v) + ", random worst rel err " + fmt("%.1e", worst);
}

FeatureStats random_stats(std::mt19937& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd a(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) a(i, j) = n(rng);
  FeatureStats s;
  s.cov = a * a.transpose() + 0.1 * Eigen::MatrixXd::Identity(3, 3);
  s.mean = Eigen::VectorXd(3);
  for (int i = 0; i < 3; ++i) s.mean(i) = n(rng);
  return s;
}

FeatureStats scalar(double mu, double var) {
  FeatureStats s;
  s.mean = Eigen::VectorXd::Constant(1, mu);
  s.cov = Eigen::MatrixXd::Constant(1, 1, var);
  return s;
}

void fid_closed_forms(Check& c) {
  std::mt19937 rng(17);
  const auto s = random_stats(rng);
  c.expect(std::abs(fid(s, s)) <= 1e-8, "identical stats gave " + fmt("%.3e", fid(s, s)));
  const double shift = fid(scalar(0, 1), scalar(1, 1));
  const double scale = fid(scalar(0, 1), scalar(0, 4));
  c.expect(std::abs(shift - 1.0) <= 1e-8, "mean shift case gave " + fmt("%.12g", shift));
  c.expect(std::abs(scale - 1.0) <= 1e-8, "variance case gave " + fmt("%.12g", scale));
  double worst = 0, worst_sym = 0;
  for (int t = 0; t < 20; ++t) {
    const auto a = random_stats(rng), b = random_stats(rng);
    double ma[3], mb[3];
    oracle::Mat3 sa, sb;
    for (int i = 0; i < 3; ++i) {
      ma[i] = a.mean(i);
      mb[i] = b.mean(i);
      for (int j = 0; j < 3; ++j) {
        sa[i][j] = a.cov(i, j);
        sb[i][j] = b.cov(i, j);
      }
    }
    const double want = oracle::fid3(ma, sa, mb, sb);
    const double got = fid(a, b);
    const double rel = std::abs(got - want) / std::abs(want);
    const double sym = std::abs(got - fid(b, a));
    worst = std::max(worst, rel);
    worst_sym = std::max(worst_sym, sym);
    c.expect(rel <= 1e-6, "pair " + std::to_string(t) + " rel err " + fmt("%.2e", rel));
    c.expect(sym <= 1e-8, "pair " + std::to_string(t) + " asymmetry " + fmt("%.2e", sym));
  }
  c.summary = "20 pairs, worst rel err " + fmt("%.1e", worst) + ", worst asymmetry " + fmt("%.1e", worst_sym);
}

void inception_limits(Check& c) {
  Eigen::MatrixXd same(50, 4);
  for (int i = 0; i < 50; ++i) same.row(i) << 0.1, 0.2, 0.3, 0.4;
  const double one = inception_score_from_probs(same, 5).mean;
  c.expect(std::abs(one - 1.0) <= 1e-9, "identical rows gave " + fmt("%.12g", one));

  FeatureMatrix logits(FeatureKind::InceptionLogits, 10);
  for (int i = 0; i < 100; ++i) {
    std::vector<float> row(10, 0.0f);
    row[static_cast<std::size_t>(i % 10)] = 100.0f;
    logits.append(static_cast<std::uint64_t>(i), row);
  }
  const double ten = inception_score(logits, 10).mean;
  c.expect(std::abs(ten - 10.0) <= 1e-6, "balanced one-hot gave " + fmt("%.12g", ten));

  std::mt19937 rng(23);
  std::gamma_distribution<double> g(0.5, 1.0);
  Eigen::MatrixXd p(80, 9);
  std::vector<std::vector<double>> rows(80, std::vector<double>(9));
  for (int i = 0; i < 80; ++i) {
    double s = 0;
    for (int j = 0; j < 9; ++j) s += (p(i, j) = g(rng) + 1e-12);
    for (int j = 0; j < 9; ++j) rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = (p(i, j) /= s);
  }
  const double got = inception_score_from_probs(p, 1).mean;
  const double want = oracle::inception_score(rows);
  c.expect(std::abs(got - want) <= 1e-9, "random case " + fmt("%.12g", got) + " vs " + fmt("%.12g", want));
  c.summary = "identical " + fmt("%.9f", one) + ", one-hot " + fmt("%.7f", ten) + ", random |d| " +
              fmt("%.1e", std::abs(got - want));
}

void flag_analytics(Check& c) {
  DescriptorTable t;
  t.textures = {"paisley", "woven"};
  t.artistic = {""};
  t.spatial = {""};
  t.enhancer = {""};
  t.color = {"", "red"};
  t.templates = {std::string(kDefaultTemplate)};
  const auto prompts = enumerate_prompts(t);
  // "red" prompts lose their first attempt: each makes 3 attempts, others 2.
  MockBackend scripted([](std::string_view text, Seed s) {
    return text.find("red") != std::string_view::npos && s % kSeedStride == 1;
  });
  GenerationOptions o;
  o.n_keep = 2;
  o.width = o.height = 16;
  o.clock = fixed_clock;
  const auto run = run_generation(prompts, scripted, o);
  const auto rep = flag_rates_by_word(run.manifest, run.ledger, prompts, run.incomplete);
  std::map<std::string, const WordFlagStats*> by;
  for (const auto& w : rep.words) by[w.word] = &w;
  c.expect(by.size() == 3, std::to_string(by.size()) + " words");
  if (by.size() == 3) {
    c.expect(by["red"]->image_flag_ratio == 2.0 / 6.0, "red image ratio " + fmt("%.6f", by["red"]->image_flag_ratio));
    c.expect(by["red"]->prompt_flag_ratio == 1.0, "red prompt ratio " + fmt("%.6f", by["red"]->prompt_flag_ratio));
    for (const char* w : {"paisley", "woven"}) {
      c.expect(by[w]->image_flag_ratio == 1.0 / 5.0, std::string(w) + " image ratio");
      c.expect(by[w]->prompt_flag_ratio == 0.5, std::string(w) + " prompt ratio");
    }
  }
  c.expect(rep.overall_image_flag_ratio == 0.2, "overall ratio " + fmt("%.6f", rep.overall_image_flag_ratio));

  auto full = DescriptorTable::defaults();
  full.textures = {"paisley", "woven"};
  const auto all = enumerate_prompts(full);
  MockBackend paisley(flag_word("paisley"));
  o.n_keep = 1;
  o.max_attempts = 2;
  const auto prun = run_generation(all, paisley, o);
  const auto prep = flag_rates_by_word(prun.manifest, prun.ledger, all, prun.incomplete);
  double paisley_ratio = -1;
  for (const auto& w : prep.words)
    if (w.word == "paisley") paisley_ratio = w.prompt_flag_ratio;
  c.expect(paisley_ratio == 1.0, "paisley prompt ratio " + fmt("%.6f", paisley_ratio));
  c.expect(!prep.words.empty() && prep.words.front().word == "paisley", "paisley not ranked first");
  c.summary = "red 2/6 images, 2/2 prompts; paisley prompt ratio " + fmt("%.1f", paisley_ratio);
}

void human_eval_aggregation(Check& c) {
  std::mt19937 rng(31);
  std::bernoulli_distribution keep(0.7);
  std::uniform_int_distribution<int> score(1, 5);
  std::vector<ImageRecord> manifest;
  for (ImageId i = 0; i < 900; ++i) {
    ImageRecord r;
    r.image_id = i;
    r.survives.freq = keep(rng);
    if (*r.survives.freq) {
      r.survives.patchvar = keep(rng);
      if (*r.survives.patchvar) r.survives.clip = keep(rng);
    }
    manifest.push_back(r);
  }
  std::vector<RatingRecord> log;
  for (const auto& r : manifest) {
    log.push_back({"s" + std::to_string(r.image_id % 9), r.image_id, score(rng), score(rng), std::nullopt, ""});
    if (r.image_id % 7 == 0) log.push_back({"s" + std::to_string(r.image_id % 9), r.image_id, score(rng), score(rng), std::nullopt, ""});
  }
  const auto resolved = resolve_ratings(log);
  const auto table = aggregate_by_stage(resolved, manifest);
  double worst = 0;
  for (int b = 0; b < 4; ++b) {
    long sq = 0, sr = 0, n = 0;
    for (const auto& rt : resolved) {
      const auto& m = manifest[rt.image_id];
      const bool f = m.survives.freq.value_or(false), p = m.survives.patchvar.value_or(false),
                 k = m.survives.clip.value_or(false);
      const bool in = b == 0 || (b == 1 && f) || (b == 2 && f && p) || (b == 3 && f && p && k);
      if (!in) continue;
      sq += rt.quality;
      sr += rt.representativeness;
      ++n;
    }
    const auto& row = table.rows[static_cast<std::size_t>(b)];
    const double dq = std::abs(*row.quality - double(sq) / double(n));
    const double dr = std::abs(*row.representativeness - double(sr) / double(n));
    worst = std::max({worst, dq, dr});
    c.expect(row.n == static_cast<std::size_t>(n) && dq <= 1e-12 && dr <= 1e-12,
             std::string(bucket_name(row.bucket)) + " mismatch");
  }
  const std::string q = format_percent(relative_delta(3.87, 4.00));
  const std::string r = format_percent(relative_delta(3.56, 3.72));
  c.expect(q == "+3.4%", "quality delta printed " + q);
  c.expect(r == "+4.5%", "representativeness delta printed " + r);
  c.summary = "worst |mean - oracle| " + fmt("%.1e", worst) + "; published means give quality " + q +
              ", representativeness " + r;
}

std::string read_text(const std::filesystem::path& p) {
  const auto bytes = read_file(p);
  return {bytes.begin(), bytes.end()};
}

std::string pipeline_fingerprint(const std::filesystem::path& root, unsigned workers) {
  auto table = DescriptorTable::defaults();
  table.textures = {"banded", "dotted", "paisley", "woven", "wavy", "zigzagged"};
  std::vector<PromptRecord> prompts;
  const PromptGrammar grammar(table);
  for (PromptId id = 0; id < grammar.size(); id += 71) prompts.push_back(grammar.at(id));

  GenerationOptions gen;
  gen.n_keep = 5;
  gen.width = gen.height = 64;
  gen.workers = workers;
  gen.out_dir = root;
  gen.clock = fixed_clock;
  MockBackend backend(flag_rate(0.2));
  const DatasetLayout layout{root};
  auto run = run_generation(prompts, backend, gen);
  write_generation_outputs(layout, run);

  score_images(run.manifest, png_loader(root), {32, kDefaultClipScale, workers});
  MockEmbedder embedder({64, 32, 16, 10});
  const EmbedOptions eo{7, workers};
  const auto img = embed_dataset(root, FeatureKind::ClipImage, embedder, eo);
  const auto txt = embed_dataset(root, FeatureKind::ClipText, embedder, eo);
  score_clip(run.manifest, img, txt);
  refine_all(run.manifest);
  write_manifest(layout.manifest(), run.manifest);
  return read_text(layout.manifest()) + read_text(layout.ledger()) + read_text(layout.incomplete()) +
         read_text(feature_file(root, FeatureKind::ClipImage));
}

void determinism(Check& c) {
  testing_support::ScratchDir a("ptd_det1"), b("ptd_det8");
  const auto one = pipeline_fingerprint(a.path(), 1);
  const auto eight = pipeline_fingerprint(b.path(), 8);
  c.expect(one == eight, "1-worker and 8-worker outputs differ");
  c.expect(!one.empty(), "empty outputs");
  const auto lines = std::count(one.begin(), one.end(), '\n');
  c.summary = std::to_string(one.size()) + " bytes identical (" + std::to_string(lines) + " lines incl. ledger)";
}

void tav_toy(Check& c) {
  const std::vector<std::string> classes = {"braided", "spiralled", "wavy", "woven", "dotted"};
  const std::vector<std::string> objects = {"coil", "knot", "net", "wig", "zebra"};
  std::mt19937 rng(41);
  std::gamma_distribution<double> g(0.8, 1.0);
  FeatureMatrix p(FeatureKind::ClassifierProbs, objects.size());
  std::vector<ImageRecord> rs;
  for (ImageId i = 0; i < 100; ++i) {
    std::vector<float> row;
    std::vector<double> v(objects.size());
    double s = 0;
    for (double& x : v) s += (x = g(rng));
    for (double x : v) row.push_back(static_cast<float>(x / s));
    p.append(i, row);
    ImageRecord r;
    r.image_id = i;
    r.texture_class = classes[i % classes.size()];
    rs.push_back(r);
  }
  const auto t = compute_tav(rs, p, objects);
  double worst = 0, worst_sum = 0;
  for (std::size_t ti = 0; ti < t.textures.size(); ++ti) {
    double row_sum = 0;
    for (std::size_t o = 0; o < objects.size(); ++o) {
      double sum = 0;
      int n = 0;
      for (const auto& r : rs)
        if (r.texture_class == t.textures[ti]) sum += p.row_for(r.image_id)[o], ++n;
      worst = std::max(worst, std::abs(t.at(ti, o) - sum / n));
      row_sum += t.at(ti, o);
    }
    worst_sum = std::max(worst_sum, std::abs(row_sum - 1.0));
  }
  c.expect(t.textures.size() == classes.size(), "row count");
  c.expect(worst <= 1e-12, "mean error " + fmt("%.2e", worst));
  c.expect(worst_sum <= 1e-5, "row sum error " + fmt("%.2e", worst_sum));

  AssociationTable ties;
  ties.textures = {"flat", "toy"};
  ties.objects = {"zebra", "coil", "wig", "knot", "net"};
  ties.values = {{0.2, 0.2, 0.2, 0.2, 0.2}, {0.1, 0.3, 0.3, 0.1, 0.2}};
  const auto top = top_k_associations(ties, 3);
  auto names = [](const std::vector<Association>& v) {
    std::string s;
    for (const auto& a : v) s += (s.empty() ? "" : ",") + a.object;
    return s;
  };
  c.expect(names(top[0]) == "coil,knot,net", "uniform row top-3 " + names(top[0]));
  c.expect(names(top[1]) == "coil,wig,net", "tied row top-3 " + names(top[1]));
  c.summary = "5 classes, mean err " + fmt("%.1e", worst) + ", row sums within " + fmt("%.1e", worst_sum) +
              "; tie order " + names(top[1]);
}

void format_robustness(Check& c) {
  testing_support::ScratchDir dir("ptd_fmt");
  std::mt19937 rng(53);
  std::uniform_real_distribution<float> u(-1e6f, 1e6f);
  std::size_t cases = 0;
  for (FeatureKind kind : {FeatureKind::ClipImage, FeatureKind::ClipText, FeatureKind::InceptionPool,
                           FeatureKind::InceptionLogits, FeatureKind::ClassifierProbs}) {
    FeatureMatrix m(kind, 13);
    for (std::uint64_t i = 0; i < 40; ++i) {
      std::vector<float> row(13);
      for (float& v : row) v = u(rng);
      row[0] = std::numeric_limits<float>::denorm_min() * static_cast<float>(i);
      row[1] = -0.0f;
      m.append(i * 977 + 3, row);
    }
    const auto path = dir / (std::string(feature_kind_name(kind)) + ".ptdf");
    write_features(path, m);
    const auto back = load_features(path);
    bool exact = back.kind() == m.kind() && back.ids() == m.ids() && back.values().size() == m.values().size() &&
                 std::memcmp(back.values().data(), m.values().data(), m.values().size() * sizeof(float)) == 0;
    c.expect(exact, std::string(feature_kind_name(kind)) + " round trip not bit-exact");
    ++cases;
  }

  FeatureMatrix small(FeatureKind::ClipImage, 3, {1, 2}, {1, 2, 3, 4, 5, 6});
  const auto good = encode_features(small);
  std::size_t rejected = 0;
  for (int t = 0; t < 100; ++t) {
    auto bytes = good;
    const int flips = 1 + static_cast<int>(rng() % 3);
    for (int f = 0; f < flips; ++f) bytes[rng() % kFeatureHeaderSize] ^= static_cast<std::uint8_t>(1 + rng() % 255);
    if (bytes == good) bytes[rng() % kFeatureHeaderSize] ^= 0x01;
    try {
      decode_features(bytes, {1, 2});
      c.expect(false, "fuzz case " + std::to_string(t) + " loaded silently");
    } catch (const StoreError&) {
      ++rejected;
    }
  }
  c.summary = std::to_string(cases) + " kinds round-trip bit-exact; " + std::to_string(rejected) +
              "/100 corrupted headers rejected";
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Check&)>>> criteria = {
      {"prompt enumeration", prompt_enumeration},
      {"cascade retention", cascade_retention},
      {"frequency cutoff oracle", frequency_cutoff_oracle},
      {"patch variance", patch_variance_checks},
      {"FID closed forms", fid_closed_forms},
      {"inception score limits", inception_limits},
      {"flag analytics", flag_analytics},
      {"human-eval aggregation", human_eval_aggregation},
      {"determinism 1 vs 8 workers", determinism},
      {"TAV toy", tav_toy},
      {"feature file robustness", format_robustness},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Check c;
    try {
      fn(c);
    } catch (const std::exception& e) {
      c.failures.push_back(std::string("threw: ") + e.what());
    }
    const bool ok = c.failures.empty();
    failed += ok ? 0 : 1;
    std::printf("%s  %-28s %s\n", ok ? "PASS" : "FAIL", name.c_str(), c.summary.c_str());
    for (std::size_t i = 0; i < std::min<std::size_t>(c.failures.size(), 5); ++i) {
      std::printf("      - %s\n", c.failures[i].c_str());
    }
    if (c.failures.size() > 5) std::printf("      ... %zu more\n", c.failures.size() - 5);
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failed, criteria.size());
  return std::min(failed, 255);
}
