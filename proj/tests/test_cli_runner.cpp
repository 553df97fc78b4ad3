#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sbc/error.hpp"
#include "sbc/experiment.hpp"
#include "sbc/svg.hpp"
#include "sbc/uniformity.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  int code = -1;
  std::string output;
};

std::string slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Scratch {
public:
  explicit Scratch(const std::string &name) : dir_(fs::temp_directory_path() / ("sbc_cli_" + name)) {
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  ~Scratch() { fs::remove_all(dir_); }
  const fs::path &dir() const { return dir_; }

  /// Relative output directories are placed under the scratch directory.
  fs::path write_config(const std::string &file, json j) const {
    const fs::path p = dir_ / file;
    j["output_dir"] = (dir_ / j.at("output_dir").get<std::string>()).string();
    std::ofstream(p) << j.dump(2);
    return p;
  }

  Outcome sbc(const std::string &args) const {
    const fs::path log = dir_ / "cli.log";
    const std::string cmd = std::string("\"") + SBC_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    Outcome o;
    o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    o.output = slurp(log);
    return o;
  }

private:
  fs::path dir_;
};

json conjugate_config(const std::string &kind, int iterations, const std::string &output_dir) {
  return {{"mode", "prior"},
          {"model", {{"id", "conjugate-normal"}}},
          {"backend", {{"kind", kind}, {"draws", 100}}},
          {"sbc", {{"iterations", iterations}, {"ranks_S", 100}}},
          {"band", {{"mc_replications", 1000}}},
          {"seed", 7},
          {"output_dir", output_dir}};
}

std::string q(const fs::path &p) { return "\"" + p.string() + "\""; }

// Enough of XML to catch broken markup: balanced tags, quoted attributes, one root.
bool well_formed(const std::string &doc) {
  std::size_t pos = 0;
  if (doc.rfind("<?xml", 0) == 0) pos = doc.find("?>") + 2;
  std::vector<std::string> stack;
  int roots = 0;
  const std::regex open(R"re(^<([A-Za-z][\w:-]*)((?:\s+[\w:-]+="[^"<]*")*)\s*(/?)>)re");
  const std::regex close(R"(^</([A-Za-z][\w:-]*)\s*>)");
  while (pos < doc.size()) {
    const std::size_t lt = doc.find('<', pos);
    const std::string text = doc.substr(pos, lt == std::string::npos ? std::string::npos : lt - pos);
    if (stack.empty() && text.find_first_not_of(" \n\r\t") != std::string::npos) return false;
    if (std::regex_search(text, std::regex(R"(&(?!amp;|lt;|gt;|quot;|apos;))"))) return false;
    if (lt == std::string::npos) break;
    const std::size_t gt = doc.find('>', lt);
    if (gt == std::string::npos) return false;
    const std::string tag = doc.substr(lt, gt - lt + 1);
    std::smatch m;
    if (std::regex_match(tag, m, close)) {
      if (stack.empty() || stack.back() != m[1]) return false;
      stack.pop_back();
    } else if (std::regex_match(tag, m, open)) {
      if (stack.empty()) ++roots;
      if (m[3].length() == 0) stack.push_back(m[1]);
    } else {
      return false;
    }
    pos = gt + 1;
  }
  return stack.empty() && roots == 1;
}

std::vector<double> polyline_ys(const std::string &svg) {
  const std::regex re(R"re(<polyline class="ecdf-difference" points="([^"]*)")re");
  std::smatch m;
  if (!std::regex_search(svg, m, re)) return {};
  std::vector<double> ys;
  std::istringstream in(m[1].str());
  std::string pt;
  while (in >> pt) ys.push_back(std::stod(pt.substr(pt.find(',') + 1)));
  return ys;
}

} // namespace

TEST_CASE("run writes every artifact and exits 0 on a calibrated backend") {
  const Scratch s("exact");
  const auto cfg = s.write_config("exact.json", conjugate_config("exact", 60, "out"));
  const Outcome o = s.sbc("run --config " + q(cfg));
  INFO(o.output);
  CHECK(o.code == 0);
  const fs::path out = s.dir() / "out";
  for (const char *f : {"iterations.jsonl", "ranks.csv", "envelope.json", "report.json", "report.txt", "manifest.json"})
    CHECK(fs::exists(out / f));
  const json manifest = json::parse(slurp(out / "manifest.json"));
  CHECK(manifest.at("status") == "complete");
  CHECK(manifest.at("seed") == 7);
  CHECK(manifest.at("config_hash").get<std::string>().size() == 16);
  for (const auto &name : manifest.at("quantities")) CHECK(fs::exists(out / (name.get<std::string>() + ".svg")));

  const std::string ranks = slurp(out / "ranks.csv");
  CHECK(ranks.rfind("iter,quantity,rank,S,status\n", 0) == 0);
  const auto lines = std::count(ranks.begin(), ranks.end(), '\n');
  CHECK(lines == 1 + 60 * static_cast<long>(manifest.at("quantities").size()));

  const json rep = json::parse(slurp(out / "report.json"));
  CHECK(rep.at("status") == "complete");
  CHECK(rep.at("summary").get<std::string>().rfind("PASS (", 0) == 0);
  CHECK(rep.at("wall_seconds_total").get<double>() >= 0.0);

  const Outcome again = s.sbc("report --run-dir " + q(out));
  CHECK(again.code == 0);
  CHECK(again.output.find("PASS (") != std::string::npos);
}

TEST_CASE("a shifted backend exits 1 with an interpreted excursion") {
  const Scratch s("shifted");
  json j = conjugate_config("shifted", 300, "out");
  j["backend"]["shift_sd"] = 0.5;
  j["plots"] = false;
  const Outcome o = s.sbc("run --config " + q(s.write_config("shifted.json", j)));
  INFO(o.output);
  CHECK(o.code == 1);
  const json rep = json::parse(slurp(s.dir() / "out" / "report.json"));
  bool theta_failed = false;
  for (const auto &qj : rep.at("quantities"))
    if (qj.at("quantity") == "theta") {
      theta_failed = qj.at("verdict") == "FAIL";
      CHECK(qj.at("interpretation").get<std::string>().find("excursion: ") != std::string::npos);
    }
  CHECK(theta_failed);
  CHECK(!fs::exists(s.dir() / "out" / "theta.svg"));
}

TEST_CASE("configuration errors exit 2 and name the field") {
  const Scratch s("badcfg");
  json j = conjugate_config("exact", 20, "out");
  j["mode"] = "posterior";
  Outcome o = s.sbc("run --config " + q(s.write_config("nodata.json", j)));
  CHECK(o.code == 2);
  CHECK(o.output.find("data.path") != std::string::npos);
  CHECK(!fs::exists(s.dir() / "out"));

  j = conjugate_config("exact", 20, "out");
  j["sbc"]["ranks_S"] = "many";
  o = s.sbc("run --config " + q(s.write_config("badtype.json", j)));
  CHECK(o.code == 2);
  CHECK(o.output.find("sbc.ranks_S") != std::string::npos);

  j = conjugate_config("exact", 20, "out");
  j["typo"] = 1;
  o = s.sbc("run --config " + q(s.write_config("unknown.json", j)));
  CHECK(o.code == 2);
  CHECK(o.output.find("typo") != std::string::npos);

  std::ofstream(s.dir() / "broken.json") << "{ not json";
  CHECK(s.sbc("run --config " + q(s.dir() / "broken.json")).code == 2);
  CHECK(s.sbc("run --config " + q(s.dir() / "absent.json")).code == 2);
}

TEST_CASE("command-line misuse exits 2") {
  const Scratch s("argv");
  CHECK(s.sbc("").code == 2);
  CHECK(s.sbc("frobnicate").code == 2);
  CHECK(s.sbc("run").code == 2);
  CHECK(s.sbc("calibrate-band --n 10 --s 10").code == 2);
  CHECK(s.sbc("calibrate-band --n 10 --s 10 --coverage 1.5").code == 2);
  CHECK(s.sbc("--help").code == 0);
}

TEST_CASE("ranks.csv does not depend on the worker count") {
  const Scratch s("workers");
  json j = conjugate_config("shifted", 80, "w1");
  j["plots"] = false;
  const auto cfg1 = s.write_config("w1.json", j);
  j["output_dir"] = "w8";
  const auto cfg8 = s.write_config("w8.json", j);
  CHECK(s.sbc("run --config " + q(cfg1) + " --workers 1").code != 2);
  CHECK(s.sbc("run --config " + q(cfg8) + " --workers 8").code != 2);
  const std::string a = slurp(s.dir() / "w1" / "ranks.csv");
  CHECK(!a.empty());
  CHECK(a == slurp(s.dir() / "w8" / "ranks.csv"));
  CHECK(json::parse(slurp(s.dir() / "w1" / "manifest.json")).at("config_hash") ==
        json::parse(slurp(s.dir() / "w8" / "manifest.json")).at("config_hash"));

  SUBCASE("seed override changes the ranks") {
    j["output_dir"] = "seeded";
    CHECK(s.sbc("run --config " + q(s.write_config("seeded.json", j)) + " --seed 8").code != 2);
    CHECK(slurp(s.dir() / "seeded" / "ranks.csv") != a);
  }
}

TEST_CASE("interrupted runs resume to identical output") {
  const Scratch s("resume");
  json j = conjugate_config("exact", 50, "full");
  const auto full = s.write_config("full.json", j);
  j["output_dir"] = "part";
  const auto part = s.write_config("part.json", j);

  CHECK(s.sbc("run --config " + q(full)).code == 0);

  const Outcome first = s.sbc("run --config " + q(part) + " --stop-after 17");
  CHECK(first.code == 0);
  const fs::path dir = s.dir() / "part";
  CHECK(json::parse(slurp(dir / "manifest.json")).at("status") == "incomplete");

  const Outcome rep = s.sbc("report --run-dir " + q(dir));
  CHECK(rep.code == 0);
  const json r = json::parse(slurp(dir / "report.json"));
  CHECK(r.at("status") == "incomplete");
  CHECK(r.at("iterations_completed") == 17);
  CHECK(r.at("missing_iterations").size() == 33);
  CHECK(r.at("missing_iterations").front() == 17);
  CHECK(rep.output.find("incomplete (17/50 iterations)") != std::string::npos);
  CHECK(s.sbc("plot --run-dir " + q(dir)).code == 2);

  CHECK(s.sbc("run --config " + q(part) + " --resume --stop-after 20").code == 0);
  CHECK(s.sbc("run --config " + q(part) + " --resume").code == 0);
  CHECK(slurp(dir / "ranks.csv") == slurp(s.dir() / "full" / "ranks.csv"));
  CHECK(slurp(dir / "envelope.json") == slurp(s.dir() / "full" / "envelope.json"));
  CHECK(slurp(dir / "theta.svg") == slurp(s.dir() / "full" / "theta.svg"));

  SUBCASE("resume refuses a changed configuration") {
    j["seed"] = 99;
    const auto changed = s.write_config("part.json", j);
    CHECK(s.sbc("run --config " + q(changed) + " --resume").code == 2);
  }
}

TEST_CASE("plot regenerates identical SVG files") {
  const Scratch s("plot");
  CHECK(s.sbc("run --config " + q(s.write_config("c.json", conjugate_config("exact", 40, "out")))).code == 0);
  const fs::path dir = s.dir() / "out";
  const std::string before = slurp(dir / "theta.svg");
  fs::remove(dir / "theta.svg");
  CHECK(s.sbc("plot --run-dir " + q(dir)).code == 0);
  CHECK(slurp(dir / "theta.svg") == before);
  CHECK(well_formed(before));
}

TEST_CASE("report and plot reject directories without a run") {
  const Scratch s("empty");
  const Outcome o = s.sbc("report --run-dir " + q(s.dir()));
  CHECK(o.code == 2);
  CHECK(o.output.find("error:") != std::string::npos);
  CHECK(s.sbc("report --run-dir " + q(s.dir() / "nowhere")).code == 2);
  CHECK(s.sbc("plot --run-dir " + q(s.dir())).code == 2);
}

TEST_CASE("calibrate-band writes a readable envelope") {
  const Scratch s("calibrate");
  const fs::path path = s.dir() / "band.json";
  const Outcome o = s.sbc("calibrate-band --n 120 --s 60 --coverage 0.9 --replications 800 --output " + q(path));
  INFO(o.output);
  CHECK(o.code == 0);
  const sbc::Envelope env = sbc::read_envelope_json(path);
  CHECK(env.N == 120);
  CHECK(env.S == 60);
  CHECK(env.coverage == 0.9);
  CHECK(env.mc_replications == 800);
  CHECK(env.grid.size() == 61);
  CHECK(env.gamma < 0.1);
}

TEST_CASE("render_plot") {
  const sbc::Envelope env = sbc::simultaneous_band(100, 100, 0.95, {1000, 1e-3, 3});
  const sbc::EcdfDiffCurve zero{env.grid, Eigen::VectorXd::Zero(env.grid.size()), 100, 100};

  SUBCASE("zero curve is a flat line strictly inside the band") {
    const std::string svg = sbc::render_plot(zero, env, "theta");
    CHECK(well_formed(svg));
    const auto ys = polyline_ys(svg);
    REQUIRE(ys.size() == 1 + 2 * static_cast<std::size_t>(env.grid.size()));
    for (double y : ys) CHECK(y == ys.front());
    // At u = 1 the difference is identically zero and the band closes.
    const Eigen::Index open = env.grid.size() - 1;
    CHECK((env.lower.head(open).array() < 0.0).all());
    CHECK((env.upper.head(open).array() > 0.0).all());
    CHECK(svg.find(">PIT</text>") != std::string::npos);
    CHECK(svg.find(">ECDF difference</text>") != std::string::npos);
    CHECK(svg.find(">theta</text>") != std::string::npos);
    CHECK(svg.find("N = 100, S = 100") != std::string::npos);
  }

  SUBCASE("three PIT values draw three steps") {
    const sbc::Envelope env3 = sbc::simultaneous_band(3, 2, 0.95, {1000, 1e-3, 3});
    const std::vector<double> grid{0.25, 0.5, 1.0};
    sbc::EcdfDiffCurve c = sbc::pit_ecdf_diff(std::vector<double>{0.03, 0.43, 0.97}, grid);
    c.N = 3;
    c.S = 0;
    const std::string svg = sbc::render_plot(c, env3, "triple");
    CHECK(well_formed(svg));
    const auto ys = polyline_ys(svg);
    REQUIRE(ys.size() == 7);
    int levels = 0;
    for (std::size_t i = 1; i < ys.size(); i += 2) {
      CHECK(ys[i] == ys[i + 1]);
      levels += i == 1 || ys[i] != ys[i - 1];
    }
    CHECK(levels == 3);
  }

  SUBCASE("identical inputs give identical bytes") {
    CHECK(sbc::render_plot(zero, env, "a<b&c") == sbc::render_plot(zero, env, "a<b&c"));
    CHECK(well_formed(sbc::render_plot(zero, env, "a<b&c")));
  }

  SUBCASE("mismatched inputs are rejected") {
    sbc::EcdfDiffCurve c = zero;
    c.N = 99;
    CHECK_THROWS_AS(sbc::render_plot(c, env, "theta"), sbc::Error);
    c = zero;
    c.S = 50;
    CHECK_THROWS_AS(sbc::render_plot(c, env, "theta"), sbc::Error);
  }
}

TEST_CASE("configs built in code accept signed integer literals") {
  json j = conjugate_config("exact", 20, "/tmp/unused");
  j["seed"] = 5; // a signed JSON integer, unlike parsed text
  CHECK(sbc::parse_experiment_config(j).sbc.seed == 5);
  j["seed"] = -1;
  CHECK_THROWS_WITH_AS(sbc::parse_experiment_config(j), doctest::Contains("'seed' must be non-negative"),
                       sbc::ConfigError);
}
