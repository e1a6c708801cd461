#include "voxpix/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <map>
#include <sstream>

#include "voxpix/io.hpp"

namespace voxpix {

static_assert(std::endian::native == std::endian::little, "checkpoints store little-endian float32");

namespace {

constexpr const char* kMagic = "voxpix-checkpoint";

struct Stored {
  std::string submodule;
  std::vector<float> values;
};

std::string read_line(std::istream& in, const std::filesystem::path& path) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::io, "truncated checkpoint header in " + path.string());
  return line;
}

int header_int(std::istream& in, const std::string& key, const std::filesystem::path& path) {
  std::istringstream s(read_line(in, path));
  std::string k;
  int v = 0;
  if (!(s >> k >> v) || k != key) throw Error(ErrorKind::io, "checkpoint " + path.string() + ": expected '" + key + "'");
  return v;
}

std::string header_string(std::istream& in, const std::string& key, const std::filesystem::path& path) {
  const std::string line = read_line(in, path);
  if (line.rfind(key + " ", 0) != 0) throw Error(ErrorKind::io, "checkpoint " + path.string() + ": expected '" + key + "'");
  return line.substr(key.size() + 1);
}

std::ifstream open_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open checkpoint " + path.string());
  return in;
}

CheckpointInfo read_header(std::istream& in, const std::filesystem::path& path) {
  CheckpointInfo info;
  std::istringstream magic(read_line(in, path));
  std::string m;
  if (!(magic >> m >> info.version) || m != kMagic) {
    throw Error(ErrorKind::io, path.string() + " is not a voxpix checkpoint");
  }
  if (info.version != kCheckpointVersion) {
    throw Error(ErrorKind::config_mismatch, "checkpoint version " + std::to_string(info.version) + ", expected " +
                                                std::to_string(kCheckpointVersion));
  }
  info.config_hash = header_string(in, "config_hash", path);
  info.stage = header_int(in, "stage", path);
  info.epoch = header_int(in, "epoch", path);
  info.layout = header_string(in, "layout", path);
  const int bytes = header_int(in, "config", path);
  std::string text(std::size_t(bytes), '\0');
  if (!in.read(text.data(), bytes)) throw Error(ErrorKind::io, "truncated config in " + path.string());
  if (sha256_hex(text) != info.config_hash) {
    throw Error(ErrorKind::config_mismatch, "checkpoint " + path.string() + ": config text does not match its hash");
  }
  info.config = ModelConfig::from_text(text);
  return info;
}

std::map<std::string, Stored> read_tensors(std::istream& in, const std::filesystem::path& path) {
  const int count = header_int(in, "tensors", path);
  std::map<std::string, Stored> out;
  for (int i = 0; i < count; ++i) {
    std::istringstream s(read_line(in, path));
    std::string sub, name;
    std::size_t n = 0;
    if (!(s >> sub >> name >> n)) throw Error(ErrorKind::io, "bad tensor record in " + path.string());
    Stored st{sub, std::vector<float>(n)};
    if (!in.read(reinterpret_cast<char*>(st.values.data()), std::streamsize(n * sizeof(float)))) {
      throw Error(ErrorKind::io, "truncated tensor " + name + " in " + path.string());
    }
    out.emplace(name, std::move(st));
  }
  return out;
}

void assign(Model<float>& model, const std::map<std::string, Stored>& tensors, const std::filesystem::path& path) {
  for (auto& [sub, params] : model.submodules()) {
    for (auto* p : params) {
      const auto it = tensors.find(p->name);
      if (it == tensors.end()) {
        if (sub == "coarse_decoder") continue;
        throw Error(ErrorKind::config_mismatch, "checkpoint " + path.string() + " lacks tensor " + p->name);
      }
      if (it->second.submodule != sub || it->second.values.size() != p->size()) {
        throw Error(ErrorKind::config_mismatch, "checkpoint tensor " + p->name + " has " +
                                                    std::to_string(it->second.values.size()) + " values in " +
                                                    it->second.submodule + ", expected " + std::to_string(p->size()) +
                                                    " in " + sub);
      }
      p->value = Eigen::Map<const nn::Vec<float>>(it->second.values.data(), Eigen::Index(p->size()));
    }
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, Model<float>& model, int stage, int epoch,
                     bool include_decoder) {
  const ModelConfig& config = model.config();
  const std::string text = config.to_text();
  std::ostringstream out;
  out << kMagic << ' ' << kCheckpointVersion << '\n'
      << "config_hash " << sha256_hex(text) << '\n'
      << "stage " << stage << '\n'
      << "epoch " << epoch << '\n'
      << "layout " << config.layout().descriptor() << '\n'
      << "config " << text.size() << '\n'
      << text;
  auto subs = model.submodules();
  std::size_t count = 0;
  for (auto& [sub, params] : subs)
    if (include_decoder || sub != "coarse_decoder") count += params.size();
  out << "tensors " << count << '\n';
  for (auto& [sub, params] : subs) {
    if (!include_decoder && sub == "coarse_decoder") continue;
    for (auto* p : params) {
      out << sub << ' ' << p->name << ' ' << p->size() << '\n';
      out.write(reinterpret_cast<const char*>(p->value.data()), std::streamsize(p->size() * sizeof(float)));
    }
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  write_text_file(path, out.str());
}

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path) {
  auto in = open_checkpoint(path);
  return read_header(in, path);
}

Model<float> load_checkpoint(const std::filesystem::path& path, CheckpointInfo* info) {
  auto in = open_checkpoint(path);
  CheckpointInfo header = read_header(in, path);
  Model<float> model(header.config);
  if (header.layout != header.config.layout().descriptor()) {
    throw Error(ErrorKind::config_mismatch, "checkpoint layout " + header.layout + " does not match its config (" +
                                                header.config.layout().descriptor() + ")");
  }
  assign(model, read_tensors(in, path), path);
  if (info) *info = std::move(header);
  return model;
}

CheckpointInfo load_checkpoint_into(const std::filesystem::path& path, Model<float>& model) {
  auto in = open_checkpoint(path);
  CheckpointInfo header = read_header(in, path);
  if (header.config_hash != model.config().hash()) {
    throw Error(ErrorKind::config_mismatch, "checkpoint " + path.string() + " was written for config " +
                                                header.config_hash.substr(0, 12) + ", model config is " +
                                                model.config().hash().substr(0, 12));
  }
  if (header.layout != model.config().layout().descriptor()) {
    throw Error(ErrorKind::config_mismatch, "checkpoint layout " + header.layout + " vs model layout " +
                                                model.config().layout().descriptor());
  }
  assign(model, read_tensors(in, path), path);
  return header;
}

}  // namespace voxpix
