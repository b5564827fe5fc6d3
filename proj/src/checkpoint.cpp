#include "ttaseg/checkpoint.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "ttaseg/error.hpp"
#include "ttaseg/ntf.hpp"

namespace ttaseg {

namespace {

constexpr const char* kHeader = "ttaseg-checkpoint 1";

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string config_line(const ModelConfig& c) {
  return "config depth=" + std::to_string(c.depth) + " base_width=" + std::to_string(c.base_width) +
         " blocks_per_module=" + std::to_string(c.blocks_per_module) + " kernel=" + std::to_string(c.kernel) +
         " in_channels=" + std::to_string(c.in_channels) + " dropout_rate=" + format_double(c.dropout_rate);
}

ModelConfig parse_config(const std::string& line, std::uint64_t offset) {
  std::istringstream in(line);
  std::string word;
  in >> word;
  if (word != "config") throw FormatError("checkpoint manifest: expected config line", offset);
  std::map<std::string, std::string> kv;
  while (in >> word) {
    const auto eq = word.find('=');
    if (eq == std::string::npos) throw FormatError("checkpoint manifest: bad config entry '" + word + "'", offset);
    kv[word.substr(0, eq)] = word.substr(eq + 1);
  }
  auto get = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError(std::string("checkpoint manifest: missing ") + key, offset);
    return it->second;
  };
  try {
    ModelConfig c;
    c.depth = std::stoul(get("depth"));
    c.base_width = std::stoul(get("base_width"));
    c.blocks_per_module = std::stoul(get("blocks_per_module"));
    c.kernel = std::stoul(get("kernel"));
    c.in_channels = std::stoul(get("in_channels"));
    c.dropout_rate = std::stod(get("dropout_rate"));
    c.validate();
    return c;
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(std::string("checkpoint manifest: bad config: ") + e.what(), offset);
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const SegModel& model) {
  std::filesystem::create_directories(dir);
  std::string manifest = std::string(kHeader) + "\n" + config_line(model.config()) + "\n";
  const auto state = model.state();
  manifest += "tensors " + std::to_string(state.size()) + "\n";
  std::string payload;
  for (const auto& ref : state) {
    manifest += ref.name + " " + shape_to_string(ref.value->shape()) + " " + std::to_string(payload.size()) + "\n";
    append_ntf(payload, *ref.value);
  }
  write_file_bytes(dir / "params.ntf", payload);
  write_file_bytes(dir / "manifest.txt", manifest);
}

SegModel load_checkpoint(const std::filesystem::path& dir) {
  const std::string manifest = read_file_bytes(dir / "manifest.txt");
  const std::string payload = read_file_bytes(dir / "params.ntf");

  std::istringstream in(manifest);
  std::string line;
  std::uint64_t line_offset = 0;
  auto next_line = [&]() {
    const auto pos = static_cast<std::streamoff>(in.tellg());
    line_offset = pos < 0 ? manifest.size() : static_cast<std::uint64_t>(pos);
    if (!std::getline(in, line)) throw FormatError("checkpoint manifest truncated", manifest.size());
  };
  next_line();
  if (line != kHeader) throw FormatError("not a ttaseg checkpoint manifest", 0);
  next_line();
  const ModelConfig cfg = parse_config(line, line_offset);
  SegModel model = SegModel::zeros(cfg);
  auto state = model.state();

  next_line();
  std::size_t count = 0;
  if (std::sscanf(line.c_str(), "tensors %zu", &count) != 1) throw FormatError("checkpoint manifest: bad tensor count", line_offset);
  if (count != state.size()) {
    throw FormatError("checkpoint holds " + std::to_string(count) + " tensors, model needs " +
                      std::to_string(state.size()), line_offset);
  }
  for (auto& ref : state) {
    next_line();
    std::istringstream fields(line);
    std::string name, shape;
    std::uint64_t offset = 0;
    if (!(fields >> name >> shape >> offset)) throw FormatError("checkpoint manifest: bad tensor line", line_offset);
    if (name != ref.name) throw FormatError("checkpoint manifest: expected " + ref.name + ", found " + name, line_offset);
    if (shape != shape_to_string(ref.value->shape())) {
      throw FormatError("checkpoint manifest: shape mismatch for " + name, line_offset);
    }
    std::uint64_t pos = offset;
    Tensor t = decode_ntf(payload, pos);
    if (t.shape() != ref.value->shape()) throw FormatError("checkpoint payload shape mismatch for " + name, offset);
    *ref.value = std::move(t);
  }
  return model;
}

}  // namespace ttaseg
