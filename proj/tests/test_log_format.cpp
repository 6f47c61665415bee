#include <doctest.h>

#include <filesystem>

#include "bsim/log_format.hpp"

using namespace bsim;

namespace {

SceneLog random_log(std::uint64_t seed, MapKind kind) {
  MapSpec s;
  s.kind = kind;
  s.seed = seed;
  s.pose = {1.25, -3.5, 0.3};
  const MapData m = gen_map(s);
  return gen_expert_log(m, std::min(5, spawn_capacity(m)), 6.0, seed);
}

}  // namespace

TEST_CASE("text and binary round trips") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const SceneLog log = random_log(seed, static_cast<MapKind>(seed % 3));
    CHECK(parse_log(serialize_log(log)) == log);
    CHECK(parse_log_binary(serialize_log_binary(log)) == log);
  }
}

TEST_CASE("empty scene round trips") {
  SceneLog log;
  log.frames.resize(3);
  const SceneLog back = parse_log(serialize_log(log));
  CHECK(back == log);
  CHECK(back.frames[1].empty());
  SceneLog none;
  CHECK(parse_log(serialize_log(none)).frames.empty());
}

TEST_CASE("truncated streams name the missing section") {
  const SceneLog log = random_log(1, MapKind::kStraight);
  const std::string text = serialize_log(log);
  const std::string cut = text.substr(0, text.find("step 3 "));
  try {
    parse_log(cut);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("missing section 'step 3'") != std::string::npos);
  }
  try {
    parse_log(text.substr(0, text.find("dt ")));
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("missing section 'dt'") != std::string::npos);
  }
  const std::string bin = serialize_log_binary(log);
  CHECK_THROWS_AS(parse_log_binary(bin.substr(0, bin.size() / 2)), ParseError);
  CHECK_THROWS_AS(parse_log("bsim-log 99\n"), ParseError);
}

TEST_CASE("map spec line round trips") {
  MapSpec s;
  s.kind = MapKind::kFourWay;
  s.seed = 123456789012345ULL;
  s.arm = 55.5;
  s.pose = {0.1, 0.2, -0.3};
  CHECK(parse_map_spec(serialize_map_spec(s)) == s);
}

TEST_CASE("save and load pick the framing") {
  const auto dir = std::filesystem::temp_directory_path() / "bsim_log_test";
  std::filesystem::create_directories(dir);
  const SceneLog log = random_log(2, MapKind::kArc);
  save_log((dir / "a.log").string(), log, false);
  save_log((dir / "b.log").string(), log, true);
  CHECK(load_log((dir / "a.log").string()) == log);
  CHECK(load_log((dir / "b.log").string()) == log);
  CHECK_THROWS_AS(load_log((dir / "missing.log").string()), Error);
  std::filesystem::remove_all(dir);
}
