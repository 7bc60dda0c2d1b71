#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "catch_amalgamated.hpp"
#include "rcm/io/csv.hpp"

namespace fs = std::filesystem;
using rcm::io::read_csv;

namespace {

const fs::path kSource = RCM_SOURCE_DIR;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("rcm_cli_test_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(RCM_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write_config(const fs::path& dir, const std::string& name, const std::string& body) {
  const fs::path p = dir / name;
  std::ofstream(p) << body;
  return p;
}

std::string meta(const fs::path& csv, const std::string& key) {
  const auto t = read_csv(csv.string());
  const auto it = t.meta.find(key);
  return it == t.meta.end() ? std::string() : it->second;
}

const char* kSmallExplore =
    "space.dimension = 2\n"
    "model.kind = gilbert\n"
    "model.radius = 0.5\n"
    "sim.intensity = 0.5\n"
    "sim.intensity_unit = inverse_degree\n"
    "sim.replications = 3000\n"
    "sim.seed = 99\n";

const char* kSmallSweep =
    "space.dimension = 2\n"
    "space.box_length = 6,10\n"
    "model.kind = gilbert\n"
    "model.radius = 0.5\n"
    "sim.intensity_grid = 1.0,1.4,1.8\n"
    "sim.replications = 40\n"
    "sim.gamma = 0.1\n"
    "sim.bootstrap = 50\n"
    "sim.seed = 5\n";

const char* kSmallBounds =
    "space.dimension = 2\n"
    "model.kind = gilbert\n"
    "model.radius = 0.5\n"
    "sim.intensity_grid = 0.1,0.2\n"
    "sim.replications = 500\n"
    "sim.n_mc = 500\n"
    "sim.t_c = 1.4364\n"
    "sim.seed = 8\n";

const char* kSmallCheck =
    "space.dimension = 2\n"
    "space.box_length = 8\n"
    "model.kind = gilbert\n"
    "model.radius = 0.5\n"
    "sim.intensity_grid = 0.3\n"
    "sim.intensity_unit = inverse_degree\n"
    "sim.replications = 1000\n"
    "sim.gamma = 0.2\n"
    "sim.n_mc = 500\n"
    "sim.seed = 4\n";

std::vector<fs::path> files_in(const fs::path& d) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(d)) out.push_back(e.path().filename());
  std::sort(out.begin(), out.end());
  return out;
}

// Runs `command` three times (twice single-threaded, once with 3 threads)
// and requires byte-identical outputs.
void require_deterministic(const std::string& command, const std::string& body, const std::string& extra = "") {
  const fs::path dir = scratch("det_" + command);
  const auto cfg = write_config(dir, "c.cfg", body);
  const std::vector<std::string> runs{"a", "b", "c"};
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const std::string threads = i == 2 ? " --threads 3" : "";
    const int rc = run_cli(command + " --config " + cfg.string() + " --out " + (dir / runs[i]).string() + threads + extra);
    REQUIRE((rc == 0 || rc == 1));
  }
  const auto names = files_in(dir / "a");
  REQUIRE_FALSE(names.empty());
  for (const auto& r : {"b", "c"}) {
    REQUIRE(files_in(dir / r) == names);
    for (const auto& n : names) {
      INFO(command << " " << n.string() << " run " << r);
      CHECK(slurp(dir / "a" / n) == slurp(dir / r / n));
    }
  }
}

}  // namespace

TEST_CASE("explore is byte-identical across runs and thread counts") { require_deterministic("explore", kSmallExplore); }
TEST_CASE("sweep is byte-identical across runs and thread counts") { require_deterministic("sweep", kSmallSweep); }
TEST_CASE("bounds is byte-identical across runs and thread counts") { require_deterministic("bounds", kSmallBounds); }
TEST_CASE("check is byte-identical across runs and thread counts") { require_deterministic("check", kSmallCheck); }

TEST_CASE("fit is byte-identical across runs") {
  const fs::path dir = scratch("det_fit_src");
  std::string body = kSmallExplore;
  body.replace(body.find("3000"), 4, "20000");
  const auto cfg = write_config(dir, "c.cfg", body);
  REQUIRE(run_cli("explore --config " + cfg.string() + " --out " + (dir / "x").string()) == 0);
  require_deterministic("fit", body, " --input " + (dir / "x" / "clusters.csv").string());
}

TEST_CASE("t = 0 explores single vertices") {
  const fs::path dir = scratch("t0");
  std::string body = kSmallExplore;
  body.replace(body.find("sim.intensity = 0.5"), 19, "sim.intensity = 0");
  const auto cfg = write_config(dir, "c.cfg", body);
  REQUIRE(run_cli("explore --config " + cfg.string() + " --out " + (dir / "o").string()) == 0);
  const auto t = read_csv((dir / "o" / "clusters.csv").string());
  REQUIRE(t.rows.size() == 3000);
  for (double s : t.numbers("size")) CHECK(s == 1.0);
  for (double d : t.numbers("depth")) CHECK(d == 1.0);

  const auto sc = write_config(dir, "s.cfg",
                               "space.box_length = 6\nmodel.kind = gilbert\nmodel.radius = 0.5\n"
                               "sim.intensity_grid = 0\nsim.replications = 20\n");
  REQUIRE(run_cli("sweep --config " + sc.string() + " --out " + (dir / "s").string()) == 0);
  for (double s : read_csv((dir / "s" / "sweep.csv").string()).numbers("size")) CHECK(s == 1.0);
}

TEST_CASE("gilbert explore demo reproduces the golden summary") {
  const fs::path dir = scratch("golden");
  REQUIRE(run_cli("explore --config " + (kSource / "demos" / "gilbert_explore.cfg").string() + " --out " +
              (dir / "o").string()) == 0);
  CHECK(slurp(dir / "o" / "summary.csv") == slurp(kSource / "tests" / "golden" / "gilbert_explore_summary.csv"));
}

TEST_CASE("small sweep reproduces the golden theta table") {
  const fs::path dir = scratch("golden_sweep");
  const auto cfg = write_config(dir, "c.cfg", kSmallSweep);
  REQUIRE(run_cli("sweep --config " + cfg.string() + " --out " + (dir / "o").string()) == 0);
  CHECK(slurp(dir / "o" / "theta.csv") == slurp(kSource / "tests" / "golden" / "small_sweep_theta.csv"));
}

TEST_CASE("metadata carries the resolved config hash") {
  const fs::path dir = scratch("hash");
  const auto cfg = write_config(dir, "c.cfg", kSmallExplore);
  REQUIRE(run_cli("explore --config " + cfg.string() + " --out " + (dir / "a").string()) == 0);
  REQUIRE(run_cli("explore --config " + cfg.string() + " --out " + (dir / "b").string() + " --threads 2") == 0);
  REQUIRE(run_cli("explore --config " + cfg.string() + " --out " + (dir / "c").string() + " --seed 100") == 0);
  const auto h = meta(dir / "a" / "clusters.csv", "config_hash");
  CHECK(h.size() == 16);
  CHECK(meta(dir / "a" / "summary.csv", "config_hash") == h);
  CHECK(meta(dir / "b" / "clusters.csv", "config_hash") == h);
  CHECK(meta(dir / "c" / "clusters.csv", "config_hash") != h);
  CHECK(meta(dir / "c" / "clusters.csv", "sim.seed") == "100");
  CHECK(meta(dir / "a" / "clusters.csv", "command") == "explore");
  const auto t = read_csv((dir / "a" / "clusters.csv").string());
  CHECK(t.header == std::vector<std::string>{"replication_id", "root_mark", "size", "depth", "diameter",
                                             "max_edge", "truncated", "reason"});
}

TEST_CASE("exit codes") {
  const fs::path dir = scratch("codes");
  const std::string out = " --out " + (dir / "o").string();
  CHECK(run_cli("explore --config " + (kSource / "demos" / "corrupted_product.cfg").string() + out) == 2);
  CHECK(run_cli("check --config " + write_config(dir, "l.cfg", std::string(kSmallCheck) + "sim.lambda_order = 3\n").string() + out) == 2);
  CHECK(run_cli("explore --config " + write_config(dir, "u.cfg", std::string(kSmallExplore) + "sim.colour = red\n").string() + out) == 2);
  CHECK(run_cli("explore --config " + write_config(dir, "d.cfg", std::string(kSmallExplore) + "sim.seed = 3\n").string() + out) == 2);
  CHECK(run_cli("explore --config " + (dir / "missing.cfg").string() + out) == 2);
  CHECK(run_cli("explore" + out) == 2);
  CHECK(run_cli("explode --config " + (kSource / "demos" / "gilbert_explore.cfg").string()) == 2);
  const auto bad_value = write_config(dir, "v.cfg", "model.kind = gilbert\nmodel.radius = -1\nsim.intensity = 1\n");
  CHECK(run_cli("explore --config " + bad_value.string() + out) == 2);
  // Unbounded radii: D* is infinite, so no bounds exist.
  const auto trivial = write_config(dir, "t.cfg",
                                    "model.kind = gilbert\nmodel.radius_dist = exponential(2)\n"
                                    "sim.intensity_grid = 0.1\nsim.replications = 10\nsim.mark_grid = 0.5,1\n");
  CHECK(run_cli("bounds --config " + trivial.string() + out) == 3);
  CHECK(run_cli("check --config " + write_config(dir, "ok.cfg", kSmallCheck).string() + out) == 0);
}

TEST_CASE("fit recovers a positive decay rate and refuses censored input") {
  const fs::path dir = scratch("fit");
  std::string body = kSmallExplore;
  body.replace(body.find("3000"), 4, "20000");
  const auto cfg = write_config(dir, "c.cfg", body);
  REQUIRE(run_cli("explore --config " + cfg.string() + " --out " + (dir / "x").string()) == 0);
  REQUIRE(run_cli("fit --config " + cfg.string() + " --out " + (dir / "f").string() + " --input " +
              (dir / "x" / "clusters.csv").string()) == 0);
  const auto fit = read_csv((dir / "f" / "fit.csv").string());
  const auto slope = fit.numbers("slope");
  const auto lo = fit.numbers("ci_lo");
  REQUIRE(slope.size() == 2);
  for (std::size_t i = 0; i < slope.size(); ++i) {
    CHECK(slope[i] > 0.0);
    CHECK(lo[i] > 0.0);
  }

  // Every cluster censored at 2 points.
  std::string heavy = body + "sim.max_points = 2\n";
  heavy.replace(heavy.find("sim.intensity = 0.5"), 19, "sim.intensity = 3");
  const auto hc = write_config(dir, "h.cfg", heavy);
  REQUIRE(run_cli("explore --config " + hc.string() + " --out " + (dir / "y").string()) == 0);
  CHECK(run_cli("fit --config " + hc.string() + " --out " + (dir / "g").string() + " --input " +
            (dir / "y" / "clusters.csv").string()) == 3);
}

TEST_CASE("bounds report for Gilbert disks") {
  const fs::path dir = scratch("bounds");
  const auto cfg = write_config(dir, "c.cfg", kSmallBounds);
  REQUIRE(run_cli("bounds --config " + cfg.string() + " --out " + (dir / "o").string()) == 0);
  const auto b = read_csv((dir / "o" / "bounds.csv").string());
  std::map<std::string, double> kv;
  for (const auto& row : b.rows) kv[row[0]] = std::stod(row[1]);
  CHECK_THAT(kv["inv_norm_inf_1"], Catch::Matchers::WithinRel(1.0 / 3.141592653589793, 1e-14));
  CHECK_THAT(kv["inv_norm_2_2"], Catch::Matchers::WithinRel(1.0 / 3.141592653589793, 1e-14));
  const auto cert = read_csv((dir / "o" / "certificate.csv").string());
  CHECK(std::stod(meta(dir / "o" / "certificate.csv", "largest_certified_t")) == 0.2);
  CHECK(fs::exists(dir / "o" / "curves.csv"));
  CHECK(fs::exists(dir / "o" / "kernels.csv"));
  CHECK(fs::exists(dir / "o" / "delta.csv"));
}
