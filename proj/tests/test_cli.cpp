#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "catch_amalgamated.hpp"

#include "cdlab/runner.hpp"

// End-to-end checks of the cdlab binary (path in CDLAB_BIN, working
// directory the repo root so the shipped scenario files resolve).

namespace fs = std::filesystem;
using cdlab::njson;

namespace {

std::string cdlab_bin() {
  const char* bin = std::getenv("CDLAB_BIN");
  REQUIRE(bin != nullptr);
  return bin;
}

int run_cmd(const std::string& cmd) {
  int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

struct CmdResult {
  int exit_code;
  std::string output;  // stdout + stderr
};

CmdResult run_capture(const std::string& cmd) {
  fs::path log = fs::temp_directory_path() / "cdlab_cli_capture.log";
  int code = run_cmd(cmd + " > \"" + log.string() + "\" 2>&1");
  std::ifstream in(log);
  std::ostringstream buf;
  buf << in.rdbuf();
  return {code, buf.str()};
}

fs::path fresh_dir(const std::string& leaf) {
  fs::path dir = fs::temp_directory_path() / "cdlab_test_cli" / leaf;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_config(const fs::path& dir, const std::string& name, const std::string& text) {
  fs::path p = dir / name;
  std::ofstream(p) << text;
  return p;
}

// Enough of draft-07 to consume the shipped report schema: type, required,
// properties, additionalProperties, enum, items.
bool validate_schema(const njson& inst, const njson& schema, std::string& err,
                     const std::string& path = "$") {
  if (schema.contains("enum")) {
    for (const auto& v : schema["enum"])
      if (inst == v) return true;
    err = path + ": not in enum";
    return false;
  }
  if (schema.contains("type")) {
    const std::string t = schema["type"].get<std::string>();
    bool ok = (t == "object" && inst.is_object()) || (t == "array" && inst.is_array()) ||
              (t == "string" && inst.is_string()) || (t == "number" && inst.is_number()) ||
              (t == "integer" && inst.is_number_integer()) ||
              (t == "boolean" && inst.is_boolean()) || (t == "null" && inst.is_null());
    if (!ok) {
      err = path + ": expected " + t;
      return false;
    }
  }
  if (inst.is_object()) {
    if (schema.contains("required"))
      for (const auto& key : schema["required"])
        if (!inst.contains(key.get<std::string>())) {
          err = path + ": missing required key " + key.get<std::string>();
          return false;
        }
    const njson props = schema.value("properties", njson::object());
    for (auto it = inst.begin(); it != inst.end(); ++it) {
      std::string sub = path + "." + it.key();
      if (props.contains(it.key())) {
        if (!validate_schema(it.value(), props[it.key()], err, sub)) return false;
      } else if (schema.contains("additionalProperties")) {
        const njson& ap = schema["additionalProperties"];
        if (ap.is_boolean()) {
          if (!ap.get<bool>()) {
            err = sub + ": key not allowed";
            return false;
          }
        } else if (!validate_schema(it.value(), ap, err, sub)) {
          return false;
        }
      }
    }
  }
  if (inst.is_array() && schema.contains("items")) {
    std::size_t i = 0;
    for (const auto& item : inst) {
      if (!validate_schema(item, schema["items"], err, path + "[" + std::to_string(i) + "]"))
        return false;
      ++i;
    }
  }
  return true;
}

njson load_json(const fs::path& p) {
  std::ifstream in(p);
  REQUIRE(in.good());
  njson j;
  in >> j;
  return j;
}

}  // namespace

TEST_CASE("curvature point query prints the closed-form value") {
  auto r = run_capture(cdlab_bin() + " curvature --config scenarios/bergman2.json --at 0.5 0");
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("-3.5555555") != std::string::npos);
}

TEST_CASE("diagnose exit codes follow the verdicts") {
  fs::path dir = fresh_dir("verdicts");
  std::string out = " --out \"" + dir.string() + "\"";
  CHECK(run_cmd(cdlab_bin() + " diagnose --config scenarios/constant_frame.json" + out) == 0);
  CHECK(run_cmd(cdlab_bin() + " diagnose --config scenarios/zero_at_point.json" + out) == 1);

  auto cross = run_capture(cdlab_bin() +
                           " diagnose --config scenarios/cross_atom_pair.json --json" + out);
  CHECK(cross.exit_code == 0);
  njson payload = njson::parse(cross.output);
  CHECK(payload["verdicts_match"].get<bool>());
  CHECK(payload["verdict"].get<std::string>() == "Similar");
  CHECK(payload["sub_runs"]["secondary"]["verdict"].get<std::string>() == "Similar");
}

TEST_CASE("h2 embedding diagnoses not similar through the cli") {
  fs::path dir = fresh_dir("h2");
  auto r = run_capture(cdlab_bin() + " diagnose --config scenarios/h2_in_bergman.json --out \"" +
                       dir.string() + "\"");
  CHECK(r.exit_code == 1);
  CHECK(r.output.find("NotSimilar") != std::string::npos);
}

TEST_CASE("diagnose artifacts land on disk and reports are byte-stable") {
  fs::path dir = fresh_dir("artifacts");
  std::string cmd = cdlab_bin() + " diagnose --config scenarios/bounded_perturbation.json --out \"" +
                    dir.string() + "\"";
  REQUIRE(run_cmd(cmd) == 0);
  fs::path scen = dir / "bounded_perturbation";
  for (const char* leaf : {"report.json", "defect.csv", "green_scan.csv", "carleson.csv"})
    CHECK(fs::exists(scen / leaf));

  njson first = load_json(scen / "report.json");
  CHECK(first["analyses"]["diagnose"]["ok"].get<bool>());
  CHECK(first["verdict"].get<std::string>() == "Similar");

  {
    std::ifstream in(scen / "defect.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header == "w_re,w_im,r,value");
  }

  REQUIRE(run_cmd(cmd) == 0);  // same --out: identical config echo
  njson second = load_json(scen / "report.json");
  first.erase("timings");
  second.erase("timings");
  CHECK(first.dump() == second.dump());
}

TEST_CASE("malformed configs exit 64") {
  fs::path dir = fresh_dir("bad_configs");
  std::string bin = cdlab_bin();

  fs::path junk = write_config(dir, "junk.json", "this is not json {");
  CHECK(run_cmd(bin + " diagnose --config \"" + junk.string() + "\"") == 64);

  fs::path unknown_key = write_config(
      dir, "unknown_key.json",
      R"({"name":"x","atom":{"family":"power","alpha":1.0},"frame":{"coefficients":[[[[1.0,0.0]]]]},"analyses":["diagnose"],"surprise":1})");
  CHECK(run_cmd(bin + " diagnose --config \"" + unknown_key.string() + "\"") == 64);

  fs::path bad_analysis = write_config(
      dir, "bad_analysis.json",
      R"({"name":"x","atom":{"family":"power","alpha":1.0},"frame":{"coefficients":[[[[1.0,0.0]]]]},"analyses":["plot"]})");
  CHECK(run_cmd(bin + " atom --config \"" + bad_analysis.string() + "\"") == 64);

  fs::path bad_rmax = write_config(
      dir, "bad_rmax.json",
      R"({"name":"x","atom":{"family":"power","alpha":1.0},"frame":{"coefficients":[[[[1.0,0.0]]]]},"grid":{"levels":8,"r_max":1.5},"analyses":["diagnose"]})");
  CHECK(run_cmd(bin + " diagnose --config \"" + bad_rmax.string() + "\"") == 64);

  CHECK(run_cmd(bin + " diagnose --config \"" + (dir / "missing.json").string() + "\"") == 64);
}

TEST_CASE("evaluation failures exit 70 with a structured error in the report") {
  // The rank-drop frame sits on a grid node inside the identity sweep, so the
  // gram solve blows up mid-analysis rather than at config time.
  fs::path dir = fresh_dir("eval_fail");
  auto r = run_capture(cdlab_bin() + " curvature --config scenarios/zero_at_point.json --out \"" +
                       dir.string() + "\"");
  CHECK(r.exit_code == 70);

  njson report = load_json(dir / "zero_at_point" / "report.json");
  CHECK(report["analyses"]["curvature"]["ok"].get<bool>());
  CHECK_FALSE(report["analyses"]["identities"]["ok"].get<bool>());
  CHECK(report["analyses"]["identities"]["error"].get<std::string>().find("ill-conditioned") !=
        std::string::npos);
}

TEST_CASE("modulemap prints the residual table") {
  fs::path dir = fresh_dir("modulemap");
  auto r = run_capture(cdlab_bin() +
                       " modulemap --config scenarios/bounded_perturbation.json --out \"" +
                       dir.string() + "\"");
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("theta sup norm") != std::string::npos);
  CHECK(r.output.find("levels,intertwining_residual,adjoint_residual") != std::string::npos);
  CHECK(fs::exists(dir / "bounded_perturbation" / "modulemap.csv"));
}

TEST_CASE("corpus reports validate against the shipped schema") {
  fs::path dir = fresh_dir("corpus");
  auto r = run_capture(cdlab_bin() + " corpus --out \"" + dir.string() + "\"");
  REQUIRE(r.exit_code == 0);
  for (const char* name : {"constant_frame", "bounded_perturbation", "h2_in_bergman",
                           "zero_at_point", "cross_atom_pair"})
    CHECK(r.output.find(name) != std::string::npos);

  njson schema = load_json("schemas/report.schema.json");
  for (const auto& cfg : cdlab::scenario_corpus()) {
    njson report = load_json(dir / cfg.name / "report.json");
    std::string err;
    bool valid = validate_schema(report, schema, err);
    INFO(cfg.name << ": " << err);
    CHECK(valid);
    CHECK(report["name"].get<std::string>() == cfg.name);
    CHECK(report.contains("verdict"));
  }
}

TEST_CASE("shipped scenario files mirror the built-in corpus") {
  for (const auto& cfg : cdlab::scenario_corpus()) {
    cdlab::ScenarioConfig from_file = cdlab::load_scenario("scenarios/" + cfg.name + ".json");
    CHECK(cdlab::scenario_to_json(from_file).dump() == cdlab::scenario_to_json(cfg).dump());
  }
  // And every shipped file parses, the point-query example included.
  CHECK(cdlab::load_scenario("scenarios/bergman2.json").atom.alpha == 2.0);
}

TEST_CASE("scenario configs round-trip through json") {
  auto corpus = cdlab::scenario_corpus();
  for (const auto& cfg : corpus) {
    njson j = cdlab::scenario_to_json(cfg);
    cdlab::ScenarioConfig back = cdlab::scenario_from_json(j);
    CHECK(cdlab::scenario_to_json(back).dump() == j.dump());
  }
  // The compact tower form survives the trip.
  njson h2 = cdlab::scenario_to_json(corpus[2]);
  REQUIRE(h2["frame"].contains("tower"));
  CHECK(h2["frame"]["tower"]["levels"].get<std::size_t>() == 151);
}
