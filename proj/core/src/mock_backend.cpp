#include "ptd/mock_backend.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>

#include "ptd/errors.hpp"

namespace ptd {

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a(std::string_view text, std::uint64_t basis) {
  return fnv1a({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()}, basis);
}

std::uint64_t SplitMix::next() {
  std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double SplitMix::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

double SplitMix::gaussian() {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

namespace {

double hash_unit(std::string_view text, Seed seed) {
  SplitMix r(fnv1a(text) ^ (seed * 0xd1b54a32d192ed03ULL));
  return r.uniform();
}

bool has_word(std::string_view text, std::string_view word) {
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find(' ', pos);
    if (end == std::string_view::npos) end = text.size();
    if (text.substr(pos, end - pos) == word) return true;
    pos = end + 1;
  }
  return false;
}

double parse_rate(std::string_view s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !(v >= 0.0 && v <= 1.0)) {
    throw ConfigError("flag rate must be a number in [0, 1], got '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace

FlagSchedule never_flag() {
  return [](std::string_view, Seed) { return false; };
}

FlagSchedule flag_odd_seeds() {
  return [](std::string_view, Seed seed) { return seed % 2 == 1; };
}

FlagSchedule flag_word(std::string word, double rate) {
  return [word = std::move(word), rate](std::string_view text, Seed seed) {
    if (!has_word(text, word)) return false;
    return rate >= 1.0 || hash_unit(text, seed) < rate;
  };
}

FlagSchedule flag_rate(double rate) {
  return [rate](std::string_view text, Seed seed) { return hash_unit(text, seed) < rate; };
}

FlagSchedule parse_flag_schedule(std::string_view spec) {
  if (spec.empty() || spec == "never") return never_flag();
  if (spec == "odd") return flag_odd_seeds();
  if (spec.starts_with("rate:")) return flag_rate(parse_rate(spec.substr(5)));
  if (spec.starts_with("word:")) {
    std::string_view rest = spec.substr(5);
    double rate = 1.0;
    if (auto at = rest.find('@'); at != std::string_view::npos) {
      rate = parse_rate(rest.substr(at + 1));
      rest = rest.substr(0, at);
    }
    if (rest.empty()) throw ConfigError("flag schedule 'word:' needs a word");
    return flag_word(std::string(rest), rate);
  }
  throw ConfigError("unknown flag schedule '" + std::string(spec) + "'");
}

RgbImage mock_texture(std::string_view prompt_text, Seed seed, int width, int height) {
  if (width < 1 || height < 1) throw ArgumentError("image size must be positive");
  const std::uint64_t ph = fnv1a(prompt_text);
  SplitMix rng(ph ^ (seed * 0x9e3779b97f4a7c15ULL));

  double base[3];
  for (double& b : base) b = 40.0 + static_cast<double>(rng.next() % 176);
  const double amplitude = 20.0 + static_cast<double>(rng.next() % 81);
  const bool near_flat = rng.next() % 16 == 0;
  const int family = static_cast<int>((ph >> 17) % 4);

  GrayImage field(width, height, 0.5);
  if (near_flat) {
    for (double& v : field.pixels) v = 0.5 + 0.01 * (rng.uniform() - 0.5);
  } else if (family == 0) {
    const double cycles = 1.0 + static_cast<double>(rng.next() % 24);
    const double theta = rng.uniform() * std::numbers::pi;
    const double phase = rng.uniform() * 2.0 * std::numbers::pi;
    const double cx = std::cos(theta) / width, cy = std::sin(theta) / height;
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        field(x, y) = 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * cycles * (x * cx + y * cy) + phase);
      }
    }
  } else if (family == 1) {
    const int cell = 4 << (rng.next() % 5);  // 4..64
    const int gw = width / cell + 2, gh = height / cell + 2;
    std::vector<double> lattice(static_cast<std::size_t>(gw) * gh);
    for (double& v : lattice) v = rng.uniform();
    for (int y = 0; y < height; ++y) {
      const int gy = y / cell;
      const double ty = static_cast<double>(y % cell) / cell;
      for (int x = 0; x < width; ++x) {
        const int gx = x / cell;
        const double tx = static_cast<double>(x % cell) / cell;
        auto L = [&](int i, int j) { return lattice[static_cast<std::size_t>(j) * gw + i]; };
        const double top = L(gx, gy) * (1 - tx) + L(gx + 1, gy) * tx;
        const double bottom = L(gx, gy + 1) * (1 - tx) + L(gx + 1, gy + 1) * tx;
        field(x, y) = top * (1 - ty) + bottom * ty;
      }
    }
  } else if (family == 2) {
    const int cell = 2 << (rng.next() % 6);  // 2..64
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) field(x, y) = ((x / cell + y / cell) % 2 == 0) ? 1.0 : 0.0;
    }
  } else {
    for (double& v : field.pixels) v = rng.uniform();
  }

  RgbImage img(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double d = amplitude * 2.0 * (field(x, y) - 0.5);
      std::uint8_t* px = img.at(x, y);
      for (int c = 0; c < 3; ++c) {
        px[c] = static_cast<std::uint8_t>(std::clamp(std::lround(base[c] + d), 1L, 255L));
      }
    }
  }
  return img;
}

std::vector<GeneratedImage> MockBackend::generate(const GenerateRequest& request) {
  std::vector<GeneratedImage> out;
  out.reserve(request.seeds.size());
  for (Seed seed : request.seeds) {
    GeneratedImage g;
    g.seed = seed;
    g.png = encode_png(mock_texture(request.prompt_text, seed, request.width, request.height));
    g.nsfw_flagged = schedule_ ? schedule_(request.prompt_text, seed) : false;
    out.push_back(std::move(g));
  }
  return out;
}

std::size_t MockEmbedder::dim(FeatureKind kind) const {
  switch (kind) {
    case FeatureKind::ClipImage:
    case FeatureKind::ClipText:
      return dims_.clip;
    case FeatureKind::InceptionPool:
      return dims_.inception_pool;
    case FeatureKind::InceptionLogits:
      return dims_.inception_logits;
    case FeatureKind::ClassifierProbs:
      return dims_.classifier;
  }
  throw ArgumentError("unknown feature kind");
}

std::vector<std::vector<float>> MockEmbedder::embed(FeatureKind kind, std::span<const EmbedItem> items) {
  const std::size_t d = dim(kind);
  std::vector<std::vector<float>> out;
  out.reserve(items.size());
  for (const auto& item : items) {
    const std::uint64_t h = kind == FeatureKind::ClipText ? fnv1a(item.text) : fnv1a(item.png);
    SplitMix rng(h ^ static_cast<std::uint64_t>(kind));
    std::vector<double> v(d);
    for (double& x : v) x = rng.gaussian();
    switch (kind) {
      case FeatureKind::ClipImage:
      case FeatureKind::ClipText: {
        const double s = 1.0 / std::sqrt(static_cast<double>(d));
        for (double& x : v) x *= s;
        v[0] += 0.6;
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        for (double& x : v) x /= norm;
        break;
      }
      case FeatureKind::InceptionPool:
        for (double& x : v) x = std::abs(x);
        break;
      case FeatureKind::InceptionLogits:
        for (double& x : v) x *= 3.0;
        break;
      case FeatureKind::ClassifierProbs: {
        double mx = -1e300;
        for (double& x : v) mx = std::max(mx, x *= 2.0);
        double sum = 0.0;
        for (double& x : v) sum += (x = std::exp(x - mx));
        for (double& x : v) x /= sum;
        break;
      }
    }
    out.emplace_back(v.begin(), v.end());
  }
  return out;
}

}  // namespace ptd
