#include "maps/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "maps/error.hpp"

namespace maps {
namespace {

using nlohmann::json;
constexpr char kMagic[8] = {'M', 'A', 'P', 'S', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

json arch_json(const ArchSpec& a) {
  return json{{"image_size", a.image_size},
              {"in_channels", a.in_channels},
              {"down_channels", a.down_channels},
              {"up_channels", a.up_channels},
              {"num_keypoints", a.num_keypoints}};
}

ArchSpec arch_parse(const json& j) {
  ArchSpec a;
  a.image_size = j.at("image_size").get<int>();
  a.in_channels = j.at("in_channels").get<int>();
  a.down_channels = j.at("down_channels").get<std::vector<int>>();
  a.up_channels = j.at("up_channels").get<std::vector<int>>();
  a.num_keypoints = j.at("num_keypoints").get<int>();
  return a;
}

json layout_json(const ParamSet& p) {
  json out = json::array();
  for (const ParamInfo& info : p.layout()) out.push_back({{"name", info.name}, {"shape", info.shape}});
  return out;
}

void write_doubles(std::ofstream& out, const std::vector<double>& v) {
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::vector<double> read_doubles(std::ifstream& in, std::size_t n, const std::filesystem::path& path) {
  std::vector<double> v(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (static_cast<std::size_t>(in.gcount()) != n * sizeof(double)) {
    throw CorruptDataset("truncated checkpoint: " + path.string());
  }
  return v;
}

}  // namespace

std::string arch_to_json(const ArchSpec& arch) { return arch_json(arch).dump(); }

ArchSpec arch_from_json(const std::string& text) {
  try {
    return arch_parse(json::parse(text));
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("architecture: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  if (ck.teacher && !ck.teacher->same_layout(ck.student)) throw InvalidArgument("checkpoint: teacher layout differs");
  const bool has_opt = ck.optimizer.first_moment().size() == ck.student.size();
  const json header{{"format_version", Checkpoint::kFormatVersion},
                    {"stage", ck.stage},
                    {"arch", arch_json(ck.arch)},
                    {"layout", layout_json(ck.student)},
                    {"has_teacher", ck.teacher.has_value()},
                    {"eta", ck.eta},
                    {"step", ck.step},
                    {"optimizer",
                     {{"present", has_opt},
                      {"t", ck.optimizer.steps()},
                      {"beta1", ck.optimizer.beta1()},
                      {"beta2", ck.optimizer.beta2()},
                      {"eps", ck.optimizer.eps()}}}};
  const std::string text = header.dump();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof kMagic);
  const auto len = static_cast<std::uint32_t>(text.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  write_doubles(out, ck.student.data());
  if (ck.teacher) write_doubles(out, ck.teacher->data());
  if (has_opt) {
    write_doubles(out, ck.optimizer.first_moment());
    write_doubles(out, ck.optimizer.second_moment());
  }
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const ArchSpec* expected) {
  if (!std::filesystem::exists(path)) throw MissingArtifact("checkpoint not found: " + path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifact("cannot open checkpoint: " + path.string());
  char magic[8] = {};
  in.read(magic, sizeof magic);
  if (in.gcount() != sizeof magic || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw CorruptDataset("not a checkpoint file: " + path.string());
  }
  std::uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  std::string text(len, '\0');
  in.read(text.data(), len);
  if (!in) throw CorruptDataset("truncated checkpoint header: " + path.string());

  Checkpoint ck;
  json header;
  bool has_teacher = false, has_opt = false;
  long opt_t = 0;
  double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  try {
    header = json::parse(text);
    const int version = header.at("format_version").get<int>();
    if (version != Checkpoint::kFormatVersion) {
      throw CorruptDataset("unsupported checkpoint version " + std::to_string(version) + ": " + path.string());
    }
    ck.stage = header.at("stage").get<std::string>();
    ck.arch = arch_parse(header.at("arch"));
    ck.eta = header.at("eta").get<double>();
    ck.step = header.at("step").get<long>();
    has_teacher = header.at("has_teacher").get<bool>();
    const auto& opt = header.at("optimizer");
    has_opt = opt.at("present").get<bool>();
    opt_t = opt.at("t").get<long>();
    b1 = opt.at("beta1").get<double>();
    b2 = opt.at("beta2").get<double>();
    eps = opt.at("eps").get<double>();
    for (const auto& t : header.at("layout")) {
      ck.student.add(t.at("name").get<std::string>(), t.at("shape").get<std::vector<int>>());
    }
  } catch (const json::exception& e) {
    throw CorruptDataset("malformed checkpoint header " + path.string() + ": " + e.what());
  }

  if (expected && !(*expected == ck.arch)) {
    throw InvalidArgument("checkpoint architecture does not match the configured architecture: " + path.string() +
                          " stores " + arch_to_json(ck.arch) + ", expected " + arch_to_json(*expected));
  }
  // The stored layout must be exactly what the architecture implies.
  const ParamSet reference = init_detector(ck.arch, 0).params;
  if (!reference.same_layout(ck.student)) {
    throw CorruptDataset("checkpoint parameter layout inconsistent with its architecture: " + path.string());
  }

  const std::size_t n = ck.student.size();
  ck.student.data() = read_doubles(in, n, path);
  if (has_teacher) {
    ParamSet teacher = ck.student.zeros_like();
    teacher.data() = read_doubles(in, n, path);
    ck.teacher = std::move(teacher);
  }
  ck.optimizer = AdamOptimizer(ck.student, b1, b2, eps);
  if (has_opt) {
    auto m = read_doubles(in, n, path);
    auto v = read_doubles(in, n, path);
    ck.optimizer.restore(opt_t, std::move(m), std::move(v));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw CorruptDataset("trailing bytes in checkpoint: " + path.string());
  return ck;
}

}  // namespace maps
