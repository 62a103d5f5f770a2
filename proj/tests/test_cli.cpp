#include <doctest.h>

#include <sys/wait.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dfl/data.hpp"
#include "dfl/json_io.hpp"
#include "test_support.hpp"

using namespace dfl;
namespace fs = std::filesystem;

namespace {

struct Workdir {
  fs::path dir;
  Workdir() {
    dir = fs::temp_directory_path() / ("dfl_cli_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Workdir() { fs::remove_all(dir); }
  std::string operator/(const std::string& name) const { return (dir / name).string(); }
};

// Runs the CLI with stderr captured; returns the exit code.
int run(const std::string& args, const std::string& err_path) {
  const std::string cmd = std::string(DFL_CLI_PATH) + " " + args + " 2> " + err_path;
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

Json read_json(const std::string& path) { return Json::parse(slurp(path)); }

std::string spec_json(const StorageSpec& s) { return Json(s).dump(); }

bool load_checkpoint_ok(const std::string& path) {
  const Json j = Json::parse(slurp(path));
  return j.at("task").get<std::string>() == "arbitrage" && j.at("method").get<std::string>() == "proposed";
}

}  // namespace

TEST_CASE("gen-data writes deterministic prices and feasible behaviors") {
  Workdir w;
  const std::string err = w / "err.txt";
  REQUIRE(run("gen-data --days 5 --seed 4 --out " + (w / "a.csv") + " --behavior-out " + (w / "ba.csv"), err) == 0);
  REQUIRE(run("gen-data --days 5 --seed 4 --out " + (w / "b.csv") + " --behavior-out " + (w / "bb.csv"), err) == 0);
  CHECK(slurp(w / "a.csv") == slurp(w / "b.csv"));
  CHECK(slurp(w / "ba.csv") == slurp(w / "bb.csv"));
  const PriceSeries s = load_price_csv(w / "a.csv");
  CHECK(s.size() == 5 * 24);

  std::ifstream in(w / "ba.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "timestamp,reward,p,b,y");
  Vector y(120);
  int k = 0;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string cell;
    for (int c = 0; c < 5; ++c) std::getline(ss, cell, ',');
    y[k++] = std::stod(cell);
  }
  REQUIRE(k == 120);
  const StorageSpec spec = dfl::testing::behavior_spec(24);
  for (int d = 0; d < 5; ++d) CHECK(check_feasible(schedule_from_net(y.segment(24 * d, 24), spec), spec, 1e-6).empty());

  CHECK(run("gen-data --days 0 --out " + (w / "c.csv"), err) == 2);
  CHECK(run("gen-data --out " + (w / "c.csv"), err) == 2);
}

TEST_CASE("solve reproduces the small dispatch examples through files") {
  Workdir w;
  const std::string err = w / "err.txt";
  struct Case {
    std::vector<double> prices;
    StorageSpec spec;
    double objective;
  };
  const std::vector<Case> cases{
      {{1, 5}, dfl::testing::unit_spec(2), 4.0},
      {{-3, -7}, dfl::testing::unit_spec(2, 1.0), 0.0},
      {{10, 50, 10}, dfl::testing::behavior_spec(3), 50 * 0.5 - 10 * 0.5 - 10 * ((0.5 / 0.9 - 0.5) / 0.9)},
  };
  for (const Case& c : cases) {
    std::ostringstream csv;
    csv << "timestamp,rtp,dap\n";
    for (std::size_t i = 0; i < c.prices.size(); ++i)
      csv << format_timestamp(3600 * static_cast<Timestamp>(i)) << ',' << c.prices[i] << ',' << c.prices[i] << '\n';
    write(w / "p.csv", csv.str());
    write(w / "spec.json", spec_json(c.spec));
    REQUIRE(run("solve --prices " + (w / "p.csv") + " --spec " + (w / "spec.json") + " --out " + (w / "s.json"), err) ==
            0);
    const Json j = read_json(w / "s.json");
    CHECK(j.at("objective").get<double>() == doctest::Approx(c.objective).epsilon(1e-7).scale(1.0));
    for (const char* key : {"p", "b", "e", "y", "config_hash"}) CHECK(j.contains(key));
    const DispatchSchedule direct = solve_dispatch(Eigen::Map<const Vector>(c.prices.data(), static_cast<Eigen::Index>(c.prices.size())), c.spec);
    CHECK(j.at("y").get<Vector>().isApprox(direct.net, 1e-12));
  }
  // Window beyond the data and a malformed spec are configuration errors.
  CHECK(run("solve --prices " + (w / "p.csv") + " --start 2 --spec " + (w / "spec.json") + " --out " + (w / "s.json"),
            err) == 2);
  write(w / "bad.json", R"({"power_rating": 0.5, "capacty": 2})");
  CHECK(run("solve --prices " + (w / "p.csv") + " --spec " + (w / "bad.json") + " --out " + (w / "s.json"), err) == 2);
  CHECK(slurp(err).find("capacty") != std::string::npos);
  // A missing price file is a runtime failure.
  CHECK(run("solve --prices " + (w / "none.csv") + " --out " + (w / "s.json"), err) == 1);
}

TEST_CASE("seven-day end-to-end run") {
  Workdir w;
  const std::string err = w / "err.txt";
  const auto t0 = std::chrono::steady_clock::now();
  REQUIRE(run("gen-data --days 7 --seed 1 --out " + (w / "p.csv") + " --behavior-out " + (w / "beh.csv"), err) == 0);
  Json cfg = {
      {"train", {{"task", "behavior"}, {"method", "proposed"}, {"epochs", 20}, {"spec", dfl::testing::behavior_spec(24)}}},
      {"data", {{"prices", w / "p.csv"}, {"behavior", w / "beh.csv"}, {"step", 24}, {"holdout_days", 2}}},
      {"output", {{"checkpoint", w / "ck.json"}, {"loss_log", w / "loss.csv"}, {"dataset", w / "ds.jsonl"}}},
  };
  write(w / "cfg.json", cfg.dump(2));
  REQUIRE(run("train --config " + (w / "cfg.json"), err) == 0);
  const Json ck = read_json(w / "ck.json");
  CHECK(ck.at("config_hash").get<std::string>().size() == 16);
  CHECK(fs::exists(w / "loss.csv"));
  CHECK(fs::exists(w / "ds.jsonl"));

  REQUIRE(run("predict --checkpoint " + (w / "ck.json") + " --features " + (w / "p.csv") + " --from \"2021-01-06 00:00\" --out " +
                  (w / "pred.csv"),
              err) == 0);
  REQUIRE(run("evaluate --pred " + (w / "pred.csv") + " --actual " + (w / "beh.csv") + " --out " + (w / "m.json") +
                  " --prices " + (w / "p.csv") + " --profit-out " + (w / "profit.csv"),
              err) == 0);
  const Json m = read_json(w / "m.json");
  for (const char* key : {"precision", "accuracy", "recall", "f1", "counts", "profit", "config_hash", "energy"})
    CHECK(m.contains(key));
  CHECK(m.at("counts").at("tp").get<long>() + m.at("counts").at("tn").get<long>() + m.at("counts").at("fp").get<long>() +
            m.at("counts").at("fn").get<long>() ==
        48);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(secs < 60.0);

  // Re-running the same training yields the same checkpoint.
  const std::string first = slurp(w / "ck.json");
  REQUIRE(run("train --config " + (w / "cfg.json"), err) == 0);
  CHECK(slurp(w / "ck.json") == first);
}

TEST_CASE("train without a spec uses the gen-data defaults") {
  Workdir w;
  const std::string err = w / "err.txt";
  REQUIRE(run("gen-data --days 4 --seed 3 --out " + (w / "p.csv") + " --behavior-out " + (w / "beh.csv"), err) == 0);
  {
    std::istringstream csv(slurp(w / "beh.csv"));
    std::string line, cell;
    bool negative_zero = false;
    while (std::getline(csv, line)) {
      std::istringstream fields(line);
      while (std::getline(fields, cell, ',')) negative_zero = negative_zero || cell == "-0";
    }
    CHECK_FALSE(negative_zero);
  }
  Json cfg = {
      {"train", {{"epochs", 2}}},
      {"data", {{"prices", w / "p.csv"}, {"behavior", w / "beh.csv"}}},
      {"output", {{"checkpoint", w / "ck.json"}}},
  };
  write(w / "cfg.json", cfg.dump());
  CHECK(run("train --config " + (w / "cfg.json"), err) == 0);
  const StorageSpec used = read_json(w / "ck.json").at("spec").get<StorageSpec>();
  CHECK(used.power_rating == 0.5);
  CHECK(used.capacity == 2.0);
  CHECK(used.initial_soc == 0.5);

  // A partial spec only overrides the fields it names.
  cfg["train"]["spec"] = {{"capacity", 4.0}};
  write(w / "cfg.json", cfg.dump());
  CHECK(run("train --config " + (w / "cfg.json"), err) == 0);
  const StorageSpec partial = read_json(w / "ck.json").at("spec").get<StorageSpec>();
  CHECK(partial.capacity == 4.0);
  CHECK(partial.power_rating == 0.5);
  CHECK(partial.cost_c1 == 10.0);
}

TEST_CASE("evaluate on identical prediction and truth") {
  Workdir w;
  const std::string err = w / "err.txt";
  REQUIRE(run("gen-data --days 3 --seed 2 --out " + (w / "p.csv") + " --behavior-out " + (w / "beh.csv"), err) == 0);
  for (const char* mode : {"event", "magnitude"}) {
    REQUIRE(run("evaluate --pred " + (w / "beh.csv") + " --actual " + (w / "beh.csv") + " --mode " + mode + " --out " +
                    (w / "m.json"),
                err) == 0);
    const Json m = read_json(w / "m.json");
    CHECK(m.at("f1").get<double>() == 1.0);
    CHECK(m.at("mode").get<std::string>() == mode);
  }
  CHECK(run("evaluate --pred " + (w / "beh.csv") + " --actual " + (w / "beh.csv") + " --mode fuzzy --out " + (w / "m.json"),
            err) == 2);
  CHECK(run("evaluate --pred " + (w / "beh.csv") + " --actual " + (w / "beh.csv") + " --pct 1.5 --out " + (w / "m.json"), err) ==
        2);
}

TEST_CASE("malformed configs exit with code 2 and name the field") {
  Workdir w;
  const std::string err = w / "err.txt";
  REQUIRE(run("gen-data --days 3 --seed 2 --out " + (w / "p.csv"), err) == 0);
  const Json base = {
      {"train", {{"task", "arbitrage"}, {"epochs", 1}}},
      {"data", {{"prices", w / "p.csv"}}},
      {"output", {{"checkpoint", w / "ck.json"}}},
  };
  write(w / "cfg.json", base.dump());
  CHECK(run("train --config " + (w / "cfg.json"), err) == 0);
  CHECK(load_checkpoint_ok(w / "ck.json"));
  auto expect_field = [&](Json cfg, const std::string& field) {
    write(w / "cfg.json", cfg.dump());
    CHECK(run("train --config " + (w / "cfg.json"), err) == 2);
    CAPTURE(field);
    CHECK(slurp(err).find(field) != std::string::npos);
  };
  Json a = base;
  a["train"]["epochs"] = 0;
  expect_field(a, "epochs");
  Json b = base;
  b["train"]["epoch"] = 3;
  expect_field(b, "epoch");
  Json c = base;
  c["data"]["lookbak"] = 3;
  expect_field(c, "lookbak");
  Json d = base;
  d["train"]["method"] = "lstm";
  expect_field(d, "method");
  Json e = base;
  e["extra"] = true;
  expect_field(e, "extra");
  Json f = base;
  f["data"].erase("prices");
  expect_field(f, "prices");
  Json g = base;
  g["train"]["task"] = "behavior";
  expect_field(g, "behavior");
  write(w / "cfg.json", "{not json");
  CHECK(run("train --config " + (w / "cfg.json"), err) == 2);
  CHECK(run("train", err) == 2);
  CHECK(run("", err) == 2);
  CHECK(run("--help > /dev/null", err) == 0);
}
