#include "bsim/nn/checkpoint.hpp"

#include <cstring>

#include "bsim/common.hpp"

namespace bsim::nn {

namespace {
constexpr std::string_view kMagic = "bsim-ckpt";
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json header;
  header["kind"] = ckpt.kind;
  header["meta"] = ckpt.meta;
  header["params"] = nlohmann::json::array();
  for (const auto& p : ckpt.params.params()) {
    header["params"].push_back({{"name", p.name}, {"shape", p.value.shape}});
  }
  std::string out = std::string(kMagic) + ' ' + std::to_string(kCheckpointVersion) + '\n';
  out += header.dump() + '\n';
  for (const auto& p : ckpt.params.params()) {
    const std::size_t bytes = p.value.size() * sizeof(double);
    const std::size_t at = out.size();
    out.resize(at + bytes);
    std::memcpy(out.data() + at, p.value.data.data(), bytes);
  }
  return out;
}

Checkpoint parse_checkpoint(std::string_view bytes) {
  const std::size_t l1 = bytes.find('\n');
  if (l1 == std::string_view::npos || bytes.substr(0, kMagic.size()) != kMagic) {
    throw ParseError("not a checkpoint (missing magic line)", 0);
  }
  const std::string version(bytes.substr(kMagic.size() + 1, l1 - kMagic.size() - 1));
  if (version != std::to_string(kCheckpointVersion)) {
    throw ParseError("unsupported checkpoint version '" + version + "'", kMagic.size() + 1);
  }
  const std::size_t l2 = bytes.find('\n', l1 + 1);
  if (l2 == std::string_view::npos) throw ParseError("truncated checkpoint: missing section 'header'", l1 + 1);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(l1 + 1, l2 - l1 - 1));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed checkpoint header: ") + e.what(), l1 + 1);
  }
  Checkpoint ck;
  std::size_t pos = l2 + 1;
  try {
    ck.kind = header.at("kind").get<std::string>();
    ck.meta = header.value("meta", nlohmann::json::object());
    for (const auto& pj : header.at("params")) {
      Tensor t(pj.at("shape").get<std::vector<int>>());
      const std::size_t nbytes = t.size() * sizeof(double);
      const std::string name = pj.at("name").get<std::string>();
      if (pos + nbytes > bytes.size()) {
        throw ParseError("truncated checkpoint: missing section 'param " + name + "'", pos);
      }
      std::memcpy(t.data.data(), bytes.data() + pos, nbytes);
      pos += nbytes;
      ck.params.add(name, std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed checkpoint header: ") + e.what(), l1 + 1);
  }
  if (pos != bytes.size()) throw ParseError("trailing bytes after checkpoint payload", pos);
  return ck;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  write_file_atomic(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) {
  const std::string bytes = read_file(path);
  try {
    return parse_checkpoint(bytes);
  } catch (const ParseError& e) {
    throw Error(path + ": " + e.what());
  }
}

}  // namespace bsim::nn
