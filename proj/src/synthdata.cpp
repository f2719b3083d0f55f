#include "maps/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "maps/error.hpp"

namespace maps {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Vec2 {
  double x, y;
};

Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }

Vec2 direction(double deg) {
  const double r = deg * std::numbers::pi / 180.0;
  return {std::cos(r), std::sin(r)};
}

double segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double wx = p.x - a.x, wy = p.y - a.y;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0 ? (wx * vx + wy * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = wx - t * vx, dy = wy - t * vy;
  return std::sqrt(dx * dx + dy * dy);
}

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t tag, std::uint64_t index, std::uint64_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32), static_cast<std::uint32_t>(purpose)};
  return std::mt19937_64(seq);
}

const char* background_name(BackgroundKind k) {
  switch (k) {
    case BackgroundKind::kFlat: return "flat";
    case BackgroundKind::kGradient: return "gradient";
    case BackgroundKind::kStripes: return "stripes";
    case BackgroundKind::kBlobs: return "blobs";
  }
  return "flat";
}

BackgroundKind background_from(const std::string& s) {
  if (s == "flat") return BackgroundKind::kFlat;
  if (s == "gradient") return BackgroundKind::kGradient;
  if (s == "stripes") return BackgroundKind::kStripes;
  if (s == "blobs") return BackgroundKind::kBlobs;
  throw InvalidArgument("unknown background kind '" + s + "'");
}

json spec_to_json(const DomainSpec& s) {
  return json{{"name", s.name},
              {"image_size", s.image_size},
              {"num_keypoints", s.num_keypoints},
              {"torso_length", s.torso_length},
              {"arm_segment", s.arm_segment},
              {"leg_segment", s.leg_segment},
              {"head_radius", s.head_radius},
              {"scale_min", s.scale_min},
              {"scale_max", s.scale_max},
              {"torso_tilt", s.torso_tilt},
              {"limb_bend", s.limb_bend},
              {"position_jitter", s.position_jitter},
              {"geometry_scale", s.geometry_scale},
              {"background", background_name(s.background)},
              {"background_level", s.background_level},
              {"texture_amplitude", s.texture_amplitude},
              {"texture_frequency", s.texture_frequency},
              {"foreground_level", s.foreground_level},
              {"foreground_jitter", s.foreground_jitter},
              {"limb_width", s.limb_width},
              {"contrast", s.contrast},
              {"noise_level", s.noise_level}};
}

DomainSpec spec_from_json(const json& j) {
  DomainSpec s;
  try {
    s.name = j.at("name").get<std::string>();
    s.image_size = j.at("image_size").get<int>();
    s.num_keypoints = j.at("num_keypoints").get<int>();
    s.torso_length = j.at("torso_length").get<double>();
    s.arm_segment = j.at("arm_segment").get<double>();
    s.leg_segment = j.at("leg_segment").get<double>();
    s.head_radius = j.at("head_radius").get<double>();
    s.scale_min = j.at("scale_min").get<double>();
    s.scale_max = j.at("scale_max").get<double>();
    s.torso_tilt = j.at("torso_tilt").get<double>();
    s.limb_bend = j.at("limb_bend").get<double>();
    s.position_jitter = j.at("position_jitter").get<double>();
    s.geometry_scale = j.at("geometry_scale").get<double>();
    s.background = background_from(j.at("background").get<std::string>());
    s.background_level = j.at("background_level").get<double>();
    s.texture_amplitude = j.at("texture_amplitude").get<double>();
    s.texture_frequency = j.at("texture_frequency").get<double>();
    s.foreground_level = j.at("foreground_level").get<double>();
    s.foreground_jitter = j.at("foreground_jitter").get<double>();
    s.limb_width = j.at("limb_width").get<double>();
    s.contrast = j.at("contrast").get<double>();
    s.noise_level = j.at("noise_level").get<double>();
  } catch (const json::exception& e) {
    throw CorruptDataset(std::string("domain spec: ") + e.what());
  }
  return s;
}

std::vector<unsigned char> encode_pgm(const Image& image) {
  std::ostringstream header;
  header << "P5\n" << image.width << " " << image.height << "\n255\n";
  const std::string h = header.str();
  std::vector<unsigned char> bytes(h.begin(), h.end());
  for (double v : image.pixels) {
    bytes.push_back(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
  }
  return bytes;
}

std::vector<unsigned char> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifact("cannot open file: " + path.string());
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

Image decode_pgm(const std::vector<unsigned char>& bytes, const fs::path& path, int expect_size) {
  // Header: "P5" width height maxval, whitespace separated, then one byte.
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) t.push_back(static_cast<char>(bytes[pos++]));
    return t;
  };
  const std::string magic = token();
  const std::string w = token(), h = token(), maxval = token();
  if (magic != "P5" || maxval != "255" || pos >= bytes.size()) {
    throw CorruptDataset("corrupt image header: " + path.string());
  }
  ++pos;
  int width = 0, height = 0;
  try {
    width = std::stoi(w);
    height = std::stoi(h);
  } catch (const std::exception&) {
    throw CorruptDataset("corrupt image header: " + path.string());
  }
  if (width != expect_size || height != expect_size) throw CorruptDataset("unexpected image size: " + path.string());
  const std::size_t need = static_cast<std::size_t>(width) * height;
  if (bytes.size() - pos != need) throw CorruptDataset("truncated image file: " + path.string());
  Image img(1, height, width);
  for (std::size_t i = 0; i < need; ++i) img.pixels[i] = bytes[pos + i] / 255.0;
  return img;
}

std::string sample_id(std::size_t i) {
  std::ostringstream s;
  s << std::setw(6) << std::setfill('0') << i;
  return s.str();
}

std::mutex& seal_mutex() {
  static std::mutex m;
  return m;
}

std::set<std::string>& sealed_paths() {
  static std::set<std::string> paths;
  return paths;
}

std::string canonical_string(const fs::path& p) {
  return fs::weakly_canonical(fs::absolute(p)).lexically_normal().string();
}

}  // namespace

void DomainSpec::validate() const {
  if (image_size < 16) throw InvalidArgument("domain spec: image_size must be at least 16");
  if (num_keypoints != 6) throw InvalidArgument("domain spec: the stick figure has exactly 6 keypoints");
  if (!(scale_min > 0 && scale_max >= scale_min)) throw InvalidArgument("domain spec: bad scale range");
  if (!(geometry_scale > 0)) throw InvalidArgument("domain spec: geometry_scale must be positive");
  if (limb_width <= 0 || head_radius <= 0) throw InvalidArgument("domain spec: figure sizes must be positive");
  if (noise_level < 0 || texture_amplitude < 0) throw InvalidArgument("domain spec: negative appearance parameter");
}

DomainSpec default_source_spec() {
  DomainSpec s;
  s.name = "source";
  return s;
}

DomainSpec appearance_shift(const DomainSpec& base, double gap) {
  if (!(gap >= 0.0 && gap <= 1.0)) throw InvalidArgument("appearance_shift: gap must lie in [0, 1]");
  DomainSpec s = base;
  s.name = "target";
  if (gap == 0.0) return s;
  s.background = BackgroundKind::kStripes;
  s.background_level = base.background_level + 0.35 * gap;
  s.texture_amplitude = base.texture_amplitude + 0.2 * gap;
  s.foreground_level = base.foreground_level - 0.1 * gap;
  s.contrast = base.contrast * (1.0 - 0.3 * gap);
  s.noise_level = base.noise_level + 0.06 * gap;
  return s;
}

KeypointGroups stick_figure_groups() {
  return {{"head", {0}}, {"hands", {1, 2}}, {"feet", {3, 4}}, {"pelvis", {5}}};
}

std::pair<Image, KeypointSet> render_sample(const DomainSpec& spec, std::uint64_t seed, std::uint64_t domain_tag,
                                            std::uint64_t index) {
  spec.validate();
  const int size = spec.image_size;
  const double centre = 0.5 * (size - 1);
  auto pose_rng = stream(seed, domain_tag, index, 0);
  auto look_rng = stream(seed, domain_tag, index, 1);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uni = [&](std::mt19937_64& r, double a, double b) { return a + (b - a) * u01(r); };

  Vec2 pelvis{}, neck{}, head{}, elbow_l{}, hand_l{}, elbow_r{}, hand_r{}, knee_l{}, foot_l{}, knee_r{}, foot_r{};
  double scale = 1.0;
  const double lo = 2.0, hi = size - 3.0;
  for (int attempt = 0;; ++attempt) {
    scale = uni(pose_rng, spec.scale_min, spec.scale_max) * spec.geometry_scale * size / 64.0;
    pelvis = {centre + uni(pose_rng, -spec.position_jitter, spec.position_jitter),
              centre + 3.0 * scale + uni(pose_rng, -spec.position_jitter, spec.position_jitter)};
    const double up = -90.0 + uni(pose_rng, -spec.torso_tilt, spec.torso_tilt);
    neck = pelvis + (spec.torso_length * scale) * direction(up);
    head = neck + ((spec.head_radius + 1.5) * scale) * direction(up);

    const double bend = spec.limb_bend;
    const double al = uni(pose_rng, 120.0, 240.0), bl = uni(pose_rng, -bend, bend);
    const double ar = uni(pose_rng, -60.0, 60.0), br = uni(pose_rng, -bend, bend);
    elbow_l = neck + (spec.arm_segment * scale) * direction(al);
    hand_l = elbow_l + (spec.arm_segment * scale) * direction(al + bl);
    elbow_r = neck + (spec.arm_segment * scale) * direction(ar);
    hand_r = elbow_r + (spec.arm_segment * scale) * direction(ar + br);

    const double ll = uni(pose_rng, 100.0, 145.0), kl = uni(pose_rng, -0.6 * bend, 0.6 * bend);
    const double lr = uni(pose_rng, 35.0, 80.0), kr = uni(pose_rng, -0.6 * bend, 0.6 * bend);
    knee_l = pelvis + (spec.leg_segment * scale) * direction(ll);
    foot_l = knee_l + (spec.leg_segment * scale) * direction(ll + kl);
    knee_r = pelvis + (spec.leg_segment * scale) * direction(lr);
    foot_r = knee_r + (spec.leg_segment * scale) * direction(lr + kr);

    bool inside = true;
    for (Vec2 p : {head, hand_l, hand_r, foot_l, foot_r, pelvis}) {
      inside = inside && p.x >= lo && p.x <= hi && p.y >= lo && p.y <= hi;
    }
    if (inside || attempt >= 200) break;
  }

  KeypointSet kps{{head.x, head.y, true},     {hand_l.x, hand_l.y, true}, {hand_r.x, hand_r.y, true},
                  {foot_l.x, foot_l.y, true}, {foot_r.x, foot_r.y, true}, {pelvis.x, pelvis.y, true}};
  for (auto& k : kps.points) k.visible = k.x >= 0 && k.x < size && k.y >= 0 && k.y < size;

  // Appearance.
  const double fg = spec.foreground_level + uni(look_rng, -spec.foreground_jitter, spec.foreground_jitter);
  const double phi = uni(look_rng, 0.0, 2.0 * std::numbers::pi);
  const double phase = uni(look_rng, 0.0, 2.0 * std::numbers::pi);
  const double freq = spec.texture_frequency * uni(look_rng, 0.7, 1.3);
  const double flat_jitter = uni(look_rng, -0.03, 0.03);
  struct Blob {
    Vec2 c;
    double r, sign;
  };
  std::vector<Blob> blobs;
  if (spec.background == BackgroundKind::kBlobs) {
    const int count = 3 + static_cast<int>(u01(look_rng) * 3);
    for (int i = 0; i < count; ++i) {
      blobs.push_back({{uni(look_rng, 0, size), uni(look_rng, 0, size)}, uni(look_rng, 4, 12),
                       u01(look_rng) < 0.5 ? -1.0 : 1.0});
    }
  }

  const double half_width = 0.5 * spec.limb_width * std::max(scale, 0.5);
  const double head_r = spec.head_radius * scale;
  const std::pair<Vec2, Vec2> segments[] = {{pelvis, neck},    {neck, elbow_l},  {elbow_l, hand_l},
                                            {neck, elbow_r},   {elbow_r, hand_r}, {pelvis, knee_l},
                                            {knee_l, foot_l},  {pelvis, knee_r}, {knee_r, foot_r}};

  std::normal_distribution<double> noise(0.0, spec.noise_level > 0 ? spec.noise_level : 1.0);
  Image img(1, size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const Vec2 p{static_cast<double>(x), static_cast<double>(y)};
      double bg = spec.background_level;
      const double along = (x - centre) * std::cos(phi) + (y - centre) * std::sin(phi);
      switch (spec.background) {
        case BackgroundKind::kFlat: bg += flat_jitter; break;
        case BackgroundKind::kGradient: bg += spec.texture_amplitude * along / size; break;
        case BackgroundKind::kStripes:
          bg += spec.texture_amplitude * std::sin(2.0 * std::numbers::pi * freq * along + phase);
          break;
        case BackgroundKind::kBlobs:
          for (const Blob& b : blobs) {
            const double dx = p.x - b.c.x, dy = p.y - b.c.y;
            bg += b.sign * spec.texture_amplitude * std::exp(-(dx * dx + dy * dy) / (2 * b.r * b.r));
          }
          break;
      }
      double cover = 0.0;
      for (const auto& [a, b] : segments) {
        cover = std::max(cover, std::clamp(half_width + 0.5 - segment_distance(p, a, b), 0.0, 1.0));
      }
      const double dh = std::hypot(p.x - head.x, p.y - head.y);
      cover = std::max(cover, std::clamp(head_r + 0.5 - dh, 0.0, 1.0));
      double v = bg * (1.0 - cover) + fg * cover;
      v = (v - 0.5) * spec.contrast + 0.5;
      if (spec.noise_level > 0) v += noise(look_rng);
      img.at(0, y, x) = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
    }
  }
  return {std::move(img), std::move(kps)};
}

Dataset generate_dataset(const DomainSpec& spec, std::size_t n, std::uint64_t seed, std::uint64_t domain_tag) {
  spec.validate();
  Dataset ds;
  ds.manifest.spec = spec;
  ds.manifest.spec_hash = fnv1a_hex(std::span<const unsigned char>(
      reinterpret_cast<const unsigned char*>(domain_spec_json(spec).data()), domain_spec_json(spec).size()));
  ds.manifest.seed = seed;
  for (std::size_t i = 0; i < n; ++i) {
    auto [img, kps] = render_sample(spec, seed, domain_tag, i);
    const std::string id = sample_id(i);
    const auto bytes = encode_pgm(img);
    ds.manifest.samples.push_back({id, "images/" + id + ".pgm", fnv1a_hex(bytes), kps});
    ds.ids.push_back(id);
    ds.images.push_back(std::move(img));
    ds.labels.push_back(std::move(kps));
  }
  return ds;
}

std::pair<Dataset, Dataset> generate_domain_pair(const DomainSpec& source_spec, const DomainSpec& target_spec,
                                                 std::size_t n_source, std::size_t n_target, std::uint64_t seed) {
  if (source_spec.num_keypoints != target_spec.num_keypoints) {
    throw InvalidArgument("generate_domain_pair: source and target keypoint counts differ");
  }
  if (source_spec.image_size != target_spec.image_size) {
    throw InvalidArgument("generate_domain_pair: source and target image sizes differ");
  }
  return {generate_dataset(source_spec, n_source, seed, 1), generate_dataset(target_spec, n_target, seed, 2)};
}

void write_dataset(const Dataset& dataset, const fs::path& dir) {
  fs::create_directories(dir / "images");
  json samples = json::array();
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const SampleRecord& rec = dataset.manifest.samples.at(i);
    const auto bytes = encode_pgm(dataset.images[i]);
    std::ofstream out(dir / rec.file, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + (dir / rec.file).string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    json kps = json::array();
    for (const Keypoint& k : rec.keypoints.points) kps.push_back({k.x, k.y, k.visible ? 1 : 0});
    samples.push_back({{"id", rec.id}, {"file", rec.file}, {"hash", fnv1a_hex(bytes)}, {"keypoints", kps}});
  }
  const json manifest{{"format_version", dataset.manifest.format_version},
                      {"generator_version", dataset.manifest.generator_version},
                      {"spec", spec_to_json(dataset.manifest.spec)},
                      {"spec_hash", dataset.manifest.spec_hash},
                      {"seed", dataset.manifest.seed},
                      {"count", dataset.size()},
                      {"keypoint_names", stick_figure_keypoint_names()},
                      {"samples", samples}};
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(1) << "\n";
}

Dataset load_dataset(const fs::path& path) {
  const fs::path manifest_path = fs::is_directory(path) ? path / "manifest.json" : path;
  const fs::path root = manifest_path.parent_path();
  {
    std::lock_guard lock(seal_mutex());
    const std::string canon = canonical_string(root);
    for (const std::string& sealed : sealed_paths()) {
      if (canon == sealed || canon.rfind(sealed + "/", 0) == 0) {
        throw SealedDatasetAccess("dataset is sealed: " + root.string());
      }
    }
  }
  if (!fs::exists(manifest_path)) throw MissingArtifact("dataset manifest not found: " + manifest_path.string());

  json j;
  try {
    std::ifstream in(manifest_path);
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw CorruptDataset("unreadable manifest " + manifest_path.string() + ": " + e.what());
  }

  Dataset ds;
  try {
    ds.manifest.format_version = j.at("format_version").get<int>();
    if (ds.manifest.format_version != DatasetManifest::kFormatVersion) {
      throw CorruptDataset("unsupported manifest format version " + std::to_string(ds.manifest.format_version) +
                           " in " + manifest_path.string());
    }
    ds.manifest.generator_version = j.at("generator_version").get<int>();
    ds.manifest.spec = spec_from_json(j.at("spec"));
    ds.manifest.spec_hash = j.at("spec_hash").get<std::string>();
    ds.manifest.seed = j.at("seed").get<std::uint64_t>();
    const std::string spec_text = domain_spec_json(ds.manifest.spec);
    if (fnv1a_hex(std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(spec_text.data()),
                                                 spec_text.size())) != ds.manifest.spec_hash) {
      throw CorruptDataset("spec hash mismatch in " + manifest_path.string());
    }
    const auto& samples = j.at("samples");
    if (samples.size() != j.at("count").get<std::size_t>()) {
      throw CorruptDataset("sample count mismatch in " + manifest_path.string());
    }
    for (const auto& s : samples) {
      SampleRecord rec;
      rec.id = s.at("id").get<std::string>();
      rec.file = s.at("file").get<std::string>();
      rec.hash = s.at("hash").get<std::string>();
      for (const auto& k : s.at("keypoints")) {
        rec.keypoints.points.push_back({k.at(0).get<double>(), k.at(1).get<double>(), k.at(2).get<int>() != 0});
      }
      ds.manifest.samples.push_back(std::move(rec));
    }
  } catch (const json::exception& e) {
    throw CorruptDataset("malformed manifest " + manifest_path.string() + ": " + e.what());
  }

  std::sort(ds.manifest.samples.begin(), ds.manifest.samples.end(),
            [](const SampleRecord& a, const SampleRecord& b) { return a.id < b.id; });
  for (const SampleRecord& rec : ds.manifest.samples) {
    const fs::path file = root / rec.file;
    if (!fs::exists(file)) throw MissingArtifact("dataset image missing: " + file.string());
    const auto bytes = read_file(file);
    if (fnv1a_hex(bytes) != rec.hash) {
      // Distinguish truncation for a clearer message.
      decode_pgm(bytes, file, ds.manifest.spec.image_size);
      throw CorruptDataset("image hash mismatch: " + file.string());
    }
    ds.ids.push_back(rec.id);
    ds.images.push_back(decode_pgm(bytes, file, ds.manifest.spec.image_size));
    ds.labels.push_back(rec.keypoints);
  }
  return ds;
}

void seal_dataset(const fs::path& path) {
  std::lock_guard lock(seal_mutex());
  sealed_paths().insert(canonical_string(path));
}

void unseal_all_datasets() {
  std::lock_guard lock(seal_mutex());
  sealed_paths().clear();
}

std::string fnv1a_hex(std::span<const unsigned char> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << h;
  return s.str();
}

std::string domain_spec_json(const DomainSpec& spec) { return spec_to_json(spec).dump(); }

DomainSpec domain_spec_from_json(const std::string& text) {
  try {
    return spec_from_json(json::parse(text));
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("domain spec: ") + e.what());
  }
}

}  // namespace maps
