#pragma once

#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>

namespace bsim {

inline constexpr double kPi = std::numbers::pi;

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised by readers of on-disk formats; carries the byte offset of the fault.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Wraps an angle into (-pi, pi].
double wrap_angle(double a);

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Vec2&) const = default;
};

/// Planar pose; also used as a rigid frame (origin + heading).
struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
  bool operator==(const Pose2&) const = default;
};

/// Expresses a world-frame pose in the local frame of `frame`.
Pose2 to_local(const Pose2& frame, const Pose2& world);
/// Inverse of to_local.
Pose2 to_world(const Pose2& frame, const Pose2& local);
Vec2 to_local(const Pose2& frame, Vec2 world);
Vec2 to_world(const Pose2& frame, Vec2 local);

/// splitmix64 finalizer; used to derive independent seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

/// FNV-1a over bytes; used for content addressing.
std::uint64_t fnv1a(std::string_view bytes);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

/// Reads a whole file; throws Error naming the path when it cannot be opened.
std::string read_file(const std::string& path);
/// Writes to a temporary sibling and renames it over `path`.
void write_file_atomic(const std::string& path, std::string_view bytes);

void log_info(std::string_view msg);
void log_warn(std::string_view msg);
/// Messages below the threshold are dropped. 0 = info, 1 = warn, 2 = silent.
void set_log_level(int level);

}  // namespace bsim
