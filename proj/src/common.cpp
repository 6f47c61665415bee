#include "bsim/common.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>

#include <unistd.h>

namespace bsim {

double wrap_angle(double a) {
  double r = std::remainder(a, 2.0 * kPi);
  if (r <= -kPi) r += 2.0 * kPi;
  return r;
}

Pose2 to_local(const Pose2& frame, const Pose2& world) {
  const double c = std::cos(frame.heading);
  const double s = std::sin(frame.heading);
  const double dx = world.x - frame.x;
  const double dy = world.y - frame.y;
  return {c * dx + s * dy, -s * dx + c * dy, wrap_angle(world.heading - frame.heading)};
}

Pose2 to_world(const Pose2& frame, const Pose2& local) {
  const double c = std::cos(frame.heading);
  const double s = std::sin(frame.heading);
  return {frame.x + c * local.x - s * local.y, frame.y + s * local.x + c * local.y,
          wrap_angle(local.heading + frame.heading)};
}

Vec2 to_local(const Pose2& frame, Vec2 world) {
  const Pose2 p = to_local(frame, Pose2{world.x, world.y, 0.0});
  return {p.x, p.y};
}

Vec2 to_world(const Pose2& frame, Vec2 local) {
  const Pose2 p = to_world(frame, Pose2{local.x, local.y, 0.0});
  return {p.x, p.y};
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
  z = (z ^ (z >> 30u)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27u)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31u);
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::string& path, std::string_view bytes) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  static std::atomic<unsigned> counter{0};
  fs::path tmp = target;
  tmp += ".tmp" + std::to_string(::getpid()) + "." + std::to_string(counter++);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, target);
}

namespace {
std::atomic<int> g_level{0};
std::mutex g_log_mutex;
}  // namespace

void set_log_level(int level) { g_level = level; }

void log_info(std::string_view msg) {
  if (g_level > 0) return;
  std::lock_guard lock(g_log_mutex);
  std::clog << "[info] " << msg << '\n';
}

void log_warn(std::string_view msg) {
  if (g_level > 1) return;
  std::lock_guard lock(g_log_mutex);
  std::clog << "[warn] " << msg << '\n';
}

}  // namespace bsim
