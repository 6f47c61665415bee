#pragma once

#include <string>
#include <string_view>

#include "bsim/world.hpp"

namespace bsim {

inline constexpr int kLogFormatVersion = 1;

/// Text form of the log document:
///
///   bsim-log <version>
///   map kind=<k> seed=<u64> lane_width=<m> lanes=<n> length=<m> radius=<m>
///       sweep_deg=<deg> arm=<m> plaza=<m> margin=<m> pixel_size=<m> pose=<x>,<y>,<rad>
///   dt <s>
///   units position=m heading=rad speed=m/s extent=m
///   meta seed=<u64> agents_requested=<n> agents_spawned=<n> attempts=<n> congested=<0|1> label_noise=<m>
///   steps <count>
///   step <index> <agents>
///   a <id> <x> <y> <heading> <speed> <length> <width>     (one per agent)
///   end
///
/// The map line is a single line. Doubles use the shortest round-trip form.
std::string serialize_log(const SceneLog& log);
SceneLog parse_log(std::string_view text);

/// Compact little-endian framing of the same content, tagged "BSIMLOGB".
std::string serialize_log_binary(const SceneLog& log);
SceneLog parse_log_binary(std::string_view bytes);

/// Single-line key=value form of a map spec (used by the map line above).
std::string serialize_map_spec(const MapSpec& spec);
MapSpec parse_map_spec(std::string_view line, std::size_t base_offset = 0);

/// Picks the framing from the leading magic bytes.
SceneLog load_log(const std::string& path);
void save_log(const std::string& path, const SceneLog& log, bool binary = false);

}  // namespace bsim
