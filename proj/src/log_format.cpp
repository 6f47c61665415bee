#include "bsim/log_format.hpp"

#include <charconv>
#include <cstring>
#include <map>
#include <sstream>

namespace bsim {

namespace {

constexpr std::string_view kTextMagic = "bsim-log";
constexpr std::string_view kBinaryMagic = "BSIMLOGB";

class LineReader {
 public:
  explicit LineReader(std::string_view text) : text_(text) {}

  bool done() const { return pos_ >= text_.size(); }
  std::size_t offset() const { return pos_; }

  /// Next line split on spaces, or throws naming the section that was expected.
  std::vector<std::string_view> next(std::string_view expected) {
    if (done()) throw ParseError("truncated log: missing section '" + std::string(expected) + "'", pos_);
    line_start_ = pos_;
    std::size_t end = text_.find('\n', pos_);
    if (end == std::string_view::npos) end = text_.size();
    std::string_view line = text_.substr(pos_, end - pos_);
    pos_ = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    std::vector<std::string_view> tok;
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && line[i] == ' ') ++i;
      std::size_t j = i;
      while (j < line.size() && line[j] != ' ') ++j;
      if (j > i) tok.push_back(line.substr(i, j - i));
      i = j;
    }
    if (tok.empty() || tok[0] != expected) {
      throw ParseError("expected section '" + std::string(expected) + "'", line_start_);
    }
    return tok;
  }

  std::size_t token_offset(std::string_view tok) const {
    return static_cast<std::size_t>(tok.data() - text_.data());
  }
  std::size_t line_start() const { return line_start_; }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_start_ = 0;
};

template <typename T>
T parse_number(std::string_view tok, std::size_t offset, std::string_view what) {
  T v{};
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
    throw ParseError("malformed " + std::string(what) + " '" + std::string(tok) + "'", offset);
  }
  return v;
}

std::map<std::string, std::pair<std::string_view, std::size_t>> key_values(
    const std::vector<std::string_view>& tok, std::size_t first, std::string_view full, std::size_t base) {
  std::map<std::string, std::pair<std::string_view, std::size_t>> kv;
  for (std::size_t i = first; i < tok.size(); ++i) {
    const std::size_t off = base + static_cast<std::size_t>(tok[i].data() - full.data());
    const auto eq = tok[i].find('=');
    if (eq == std::string_view::npos) throw ParseError("expected key=value, got '" + std::string(tok[i]) + "'", off);
    kv[std::string(tok[i].substr(0, eq))] = {tok[i].substr(eq + 1), off + eq + 1};
  }
  return kv;
}

struct KvReader {
  std::map<std::string, std::pair<std::string_view, std::size_t>> kv;
  std::size_t line_offset;

  std::pair<std::string_view, std::size_t> get(const std::string& key) const {
    const auto it = kv.find(key);
    if (it == kv.end()) throw ParseError("missing field '" + key + "'", line_offset);
    return it->second;
  }
  double d(const std::string& key) const {
    auto [v, o] = get(key);
    return parse_number<double>(v, o, key);
  }
  std::uint64_t u(const std::string& key) const {
    auto [v, o] = get(key);
    return parse_number<std::uint64_t>(v, o, key);
  }
  int i(const std::string& key) const {
    auto [v, o] = get(key);
    return parse_number<int>(v, o, key);
  }
};

std::vector<std::string_view> split_spaces(std::string_view line) {
  std::vector<std::string_view> tok;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && line[i] == ' ') ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ') ++j;
    if (j > i) tok.push_back(line.substr(i, j - i));
    i = j;
  }
  return tok;
}

}  // namespace

std::string serialize_map_spec(const MapSpec& m) {
  std::ostringstream o;
  o << "kind=" << to_string(m.kind) << " seed=" << m.seed << " lane_width=" << format_double(m.lane_width)
    << " lanes=" << m.lanes << " length=" << format_double(m.length) << " radius=" << format_double(m.radius)
    << " sweep_deg=" << format_double(m.sweep_deg) << " arm=" << format_double(m.arm)
    << " plaza=" << format_double(m.plaza) << " margin=" << format_double(m.margin)
    << " pixel_size=" << format_double(m.pixel_size) << " pose=" << format_double(m.pose.x) << ','
    << format_double(m.pose.y) << ',' << format_double(m.pose.heading);
  return o.str();
}

MapSpec parse_map_spec(std::string_view line, std::size_t base) {
  const auto tok = split_spaces(line);
  KvReader r{key_values(tok, 0, line, base), base};
  MapSpec m;
  {
    auto [v, o] = r.get("kind");
    try {
      m.kind = map_kind_from_string(std::string(v));
    } catch (const Error&) {
      throw ParseError("unknown map kind '" + std::string(v) + "'", o);
    }
  }
  m.seed = r.u("seed");
  m.lane_width = r.d("lane_width");
  m.lanes = r.i("lanes");
  m.length = r.d("length");
  m.radius = r.d("radius");
  m.sweep_deg = r.d("sweep_deg");
  m.arm = r.d("arm");
  m.plaza = r.d("plaza");
  m.margin = r.d("margin");
  m.pixel_size = r.d("pixel_size");
  auto [pv, po] = r.get("pose");
  const auto c1 = pv.find(',');
  const auto c2 = c1 == std::string_view::npos ? c1 : pv.find(',', c1 + 1);
  if (c2 == std::string_view::npos) throw ParseError("pose must be x,y,heading", po);
  m.pose.x = parse_number<double>(pv.substr(0, c1), po, "pose x");
  m.pose.y = parse_number<double>(pv.substr(c1 + 1, c2 - c1 - 1), po + c1 + 1, "pose y");
  m.pose.heading = parse_number<double>(pv.substr(c2 + 1), po + c2 + 1, "pose heading");
  return m;
}

std::string serialize_log(const SceneLog& log) {
  std::string out;
  out.reserve(64 + log.frames.size() * 96);
  out += std::string(kTextMagic) + ' ' + std::to_string(kLogFormatVersion) + '\n';
  out += "map " + serialize_map_spec(log.map) + '\n';
  out += "dt " + format_double(log.dt) + '\n';
  out += "units position=m heading=rad speed=m/s extent=m\n";
  const LogMetadata& m = log.meta;
  out += "meta seed=" + std::to_string(m.seed) + " agents_requested=" + std::to_string(m.agents_requested) +
         " agents_spawned=" + std::to_string(m.agents_spawned) + " attempts=" + std::to_string(m.attempts) +
         " congested=" + (m.congested ? "1" : "0") + " label_noise=" + format_double(m.label_noise) + '\n';
  out += "steps " + std::to_string(log.frames.size()) + '\n';
  for (std::size_t t = 0; t < log.frames.size(); ++t) {
    out += "step " + std::to_string(t) + ' ' + std::to_string(log.frames[t].size()) + '\n';
    for (const AgentState& a : log.frames[t]) {
      out += "a " + std::to_string(a.id) + ' ' + format_double(a.x) + ' ' + format_double(a.y) + ' ' +
             format_double(a.heading) + ' ' + format_double(a.speed) + ' ' + format_double(a.length) + ' ' +
             format_double(a.width) + '\n';
    }
  }
  out += "end\n";
  return out;
}

SceneLog parse_log(std::string_view text) {
  LineReader rd(text);
  SceneLog log;
  {
    const auto tok = rd.next(kTextMagic);
    if (tok.size() != 2) throw ParseError("header must be 'bsim-log <version>'", rd.line_start());
    const int version = parse_number<int>(tok[1], rd.token_offset(tok[1]), "version");
    if (version != kLogFormatVersion) {
      throw ParseError("unsupported log version " + std::to_string(version), rd.token_offset(tok[1]));
    }
  }
  {
    const auto tok = rd.next("map");
    const std::size_t start = rd.token_offset(tok[0]) + 4;
    const std::size_t end = tok.size() > 1 ? rd.token_offset(tok.back()) + tok.back().size() : start;
    log.map = parse_map_spec(text.substr(start, end > start ? end - start : 0), start);
  }
  {
    const auto tok = rd.next("dt");
    if (tok.size() != 2) throw ParseError("dt line needs one value", rd.line_start());
    log.dt = parse_number<double>(tok[1], rd.token_offset(tok[1]), "dt");
  }
  rd.next("units");
  {
    const auto tok = rd.next("meta");
    const std::size_t start = rd.token_offset(tok[0]);
    KvReader r{key_values(tok, 1, text.substr(start), start), rd.line_start()};
    log.meta.seed = r.u("seed");
    log.meta.agents_requested = r.i("agents_requested");
    log.meta.agents_spawned = r.i("agents_spawned");
    log.meta.attempts = r.i("attempts");
    log.meta.congested = r.i("congested") != 0;
    log.meta.label_noise = r.d("label_noise");
  }
  std::size_t n_steps = 0;
  {
    const auto tok = rd.next("steps");
    if (tok.size() != 2) throw ParseError("steps line needs one value", rd.line_start());
    n_steps = parse_number<std::size_t>(tok[1], rd.token_offset(tok[1]), "step count");
  }
  log.frames.resize(n_steps);
  for (std::size_t t = 0; t < n_steps; ++t) {
    const std::string section = "step " + std::to_string(t);
    if (rd.done()) throw ParseError("truncated log: missing section '" + section + "'", rd.offset());
    const auto tok = rd.next("step");
    if (tok.size() != 3) throw ParseError("step line needs index and agent count", rd.line_start());
    const auto idx = parse_number<std::size_t>(tok[1], rd.token_offset(tok[1]), "step index");
    if (idx != t) throw ParseError("expected " + section, rd.token_offset(tok[1]));
    const auto n = parse_number<std::size_t>(tok[2], rd.token_offset(tok[2]), "agent count");
    Frame& f = log.frames[t];
    f.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
      if (rd.done()) {
        throw ParseError("truncated log: missing section 'agent " + std::to_string(k) + " of " + section + "'",
                         rd.offset());
      }
      const auto a = rd.next("a");
      if (a.size() != 8) throw ParseError("agent record needs 7 fields", rd.line_start());
      AgentState s;
      s.id = parse_number<AgentId>(a[1], rd.token_offset(a[1]), "agent id");
      double* fields[6] = {&s.x, &s.y, &s.heading, &s.speed, &s.length, &s.width};
      for (int q = 0; q < 6; ++q) *fields[q] = parse_number<double>(a[2 + q], rd.token_offset(a[2 + q]), "agent field");
      if (!f.empty() && s.id <= f.back().id) throw ParseError("agents not sorted by id", rd.line_start());
      f.push_back(s);
    }
  }
  rd.next("end");
  try {
    validate(log);
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(e.what(), rd.offset());
  }
  return log;
}

namespace {

class BinWriter {
 public:
  template <typename T>
  void put(T v) {
    char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    out.append(b, sizeof(T));
  }
  void put_str(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    out += s;
  }
  std::string out;
};

class BinReader {
 public:
  explicit BinReader(std::string_view b) : b_(b) {}
  template <typename T>
  T get(std::string_view section) {
    if (pos_ + sizeof(T) > b_.size()) {
      throw ParseError("truncated log: missing section '" + std::string(section) + "'", pos_);
    }
    T v;
    std::memcpy(&v, b_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string_view get_str(std::string_view section) {
    const auto n = get<std::uint32_t>(section);
    if (pos_ + n > b_.size()) throw ParseError("truncated log: missing section '" + std::string(section) + "'", pos_);
    std::string_view s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  std::size_t size() const { return b_.size(); }

 private:
  std::string_view b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_log_binary(const SceneLog& log) {
  static_assert(sizeof(double) == 8);
  BinWriter w;
  w.out += kBinaryMagic;
  w.put<std::uint32_t>(kLogFormatVersion);
  w.put_str(serialize_map_spec(log.map));
  w.put<double>(log.dt);
  w.put<std::uint64_t>(log.meta.seed);
  w.put<std::int32_t>(log.meta.agents_requested);
  w.put<std::int32_t>(log.meta.agents_spawned);
  w.put<std::int32_t>(log.meta.attempts);
  w.put<std::uint8_t>(log.meta.congested ? 1 : 0);
  w.put<double>(log.meta.label_noise);
  w.put<std::uint64_t>(log.frames.size());
  for (const Frame& f : log.frames) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(f.size()));
    for (const AgentState& a : f) {
      w.put<std::uint32_t>(a.id);
      for (double v : {a.x, a.y, a.heading, a.speed, a.length, a.width}) w.put<double>(v);
    }
  }
  w.out += "END!";
  return w.out;
}

SceneLog parse_log_binary(std::string_view bytes) {
  if (bytes.substr(0, kBinaryMagic.size()) != kBinaryMagic) throw ParseError("missing binary log magic", 0);
  BinReader r(bytes.substr(kBinaryMagic.size()));
  const std::size_t base = kBinaryMagic.size();
  SceneLog log;
  try {
    const auto version = r.get<std::uint32_t>("version");
    if (version != kLogFormatVersion) throw ParseError("unsupported log version " + std::to_string(version), 0);
    const std::size_t map_off = r.pos() + 4;
    log.map = parse_map_spec(r.get_str("map"), map_off);
    log.dt = r.get<double>("dt");
    log.meta.seed = r.get<std::uint64_t>("meta");
    log.meta.agents_requested = r.get<std::int32_t>("meta");
    log.meta.agents_spawned = r.get<std::int32_t>("meta");
    log.meta.attempts = r.get<std::int32_t>("meta");
    log.meta.congested = r.get<std::uint8_t>("meta") != 0;
    log.meta.label_noise = r.get<double>("meta");
    const auto n_steps = r.get<std::uint64_t>("steps");
    if (n_steps > r.size()) throw ParseError("implausible step count", r.pos());
    log.frames.resize(n_steps);
    for (std::uint64_t t = 0; t < n_steps; ++t) {
      const std::string section = "step " + std::to_string(t);
      const auto n = r.get<std::uint32_t>(section);
      if (n > r.size()) throw ParseError("implausible agent count", r.pos());
      for (std::uint32_t k = 0; k < n; ++k) {
        AgentState a;
        a.id = r.get<std::uint32_t>(section);
        a.x = r.get<double>(section);
        a.y = r.get<double>(section);
        a.heading = r.get<double>(section);
        a.speed = r.get<double>(section);
        a.length = r.get<double>(section);
        a.width = r.get<double>(section);
        log.frames[t].push_back(a);
      }
    }
    const auto tail = r.get<std::uint32_t>("end");
    std::uint32_t expect;
    std::memcpy(&expect, "END!", 4);
    if (tail != expect) throw ParseError("bad end marker", r.pos() - 4);
  } catch (const ParseError& e) {
    throw ParseError(std::string(e.what()).substr(0, std::string(e.what()).rfind(" (at byte")), base + e.offset());
  }
  try {
    validate(log);
  } catch (const Error& e) {
    throw ParseError(e.what(), bytes.size());
  }
  return log;
}

SceneLog load_log(const std::string& path) {
  const std::string bytes = read_file(path);
  try {
    if (bytes.compare(0, kBinaryMagic.size(), kBinaryMagic) == 0) return parse_log_binary(bytes);
    return parse_log(bytes);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + std::string(e.what()).substr(0, std::string(e.what()).rfind(" (at byte")),
                     e.offset());
  }
}

void save_log(const std::string& path, const SceneLog& log, bool binary) {
  write_file_atomic(path, binary ? serialize_log_binary(log) : serialize_log(log));
}

}  // namespace bsim
