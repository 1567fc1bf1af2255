#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;
using noisycon::cli::run;

namespace {

struct Invocation {
  int code;
  std::string out;
  std::string err;
};

Invocation invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path dir = NOISYCON_TEST_TMPDIR;
  fs::create_directories(dir);
  const fs::path p = dir / name;
  fs::remove(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("cli requires a subcommand and accepts --help") {
  CHECK(invoke({}).code == 2);
  CHECK(invoke({"--help"}).code == 0);
  CHECK(invoke({"simulate", "--help"}).code == 0);
  CHECK(invoke({"bogus"}).code == 2);
}

TEST_CASE("cli rejects bad parameters before writing anything") {
  const auto out = scratch("bad.csv");
  auto r = invoke({"simulate", "--topology", "ring", "--nodes", "10", "--eta", "0", "--out", out.string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("eta must be > 0") != std::string::npos);
  CHECK_FALSE(fs::exists(out));

  r = invoke({"simulate", "--topology", "ring", "--nodes", "2", "--eta", "0.5"});
  CHECK(r.code == 2);
  CHECK(r.err.find("--nodes") != std::string::npos);

  r = invoke({"decay", "--nodes", "8", "--p", "0.5", "--eta", "0.9", "--out", out.string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("eta > 1") != std::string::npos);
  CHECK_FALSE(fs::exists(out));

  r = invoke({"ensemble", "--nodes", "8", "--p", "1.5", "--eta", "1.2"});
  CHECK(r.code == 2);
  CHECK(r.err.find("--p") != std::string::npos);

  r = invoke({"sweep", "--metric", "agreement_fraction", "--nodes", "6", "--out", out.string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("empty grid") != std::string::npos);
  CHECK_FALSE(fs::exists(out));

  r = invoke({"simulate", "--topology", "ring", "--nodes", "5", "--eta", "1", "--init", "file"});
  CHECK(r.code == 2);
}

TEST_CASE("cli exact caps the state space") {
  auto r = invoke({"exact", "--topology", "ring", "--nodes", "14", "--eta", "1.5"});
  CHECK(r.code == 2);
  CHECK(r.err.find("12") != std::string::npos);
  r = invoke({"exact", "--topology", "binomial", "--nodes", "6", "--p", "0.5", "--eta", "1.5"});
  CHECK(r.code == 2);
  CHECK(r.err.find("1024") != std::string::npos);
}

TEST_CASE("cli simulate is reproducible") {
  const auto a = scratch("sim_a.csv"), b = scratch("sim_b.csv");
  const std::vector<std::string> base{"simulate", "--topology", "ring", "--nodes", "20", "--eta", "1.3",
                                      "--steps", "200", "--seed", "7", "--no-timestamp", "--full-state"};
  auto args = base;
  args.insert(args.end(), {"--out", a.string()});
  REQUIRE(invoke(args).code == 0);
  args = base;
  args.insert(args.end(), {"--out", b.string()});
  REQUIRE(invoke(args).code == 0);
  const std::string text = slurp(a);
  CHECK(text == slurp(b));
  CHECK(text.find("step,state_sum,state\n") != std::string::npos);
  CHECK(text.find("generated_at") == std::string::npos);
  CHECK(text.find("# seed=7") != std::string::npos);
  CHECK_FALSE(fs::exists(a.string() + ".tmp"));

  const auto stamped = scratch("sim_c.csv");
  REQUIRE(invoke({"simulate", "--nodes", "6", "--eta", "0.5", "--steps", "5", "--out", stamped.string()}).code == 0);
  CHECK(slurp(stamped).find("generated_at=") != std::string::npos);
}

TEST_CASE("cli simulate JSON output") {
  const auto out = scratch("sim.json");
  REQUIRE(invoke({"simulate", "--topology", "lattice", "--dims", "3,3", "--periodic", "--eta", "0.2", "--init",
                  "all-plus", "--format", "json", "--out", out.string()})
              .code == 0);
  const auto j = nlohmann::json::parse(slurp(out));
  CHECK(j["n_nodes"] == 9);
  CHECK(j["absorption"]["step"] == 0);
  CHECK(j["config"]["topology"] == "lattice");
}

TEST_CASE("cli config file with flag override") {
  const auto cfg = scratch("run.ini");
  {
    std::ofstream f(cfg);
    f << "topology=binomial\nnodes=6\np=0.5\neta=1.5\nsteps=10\ntrials=200\nseed=3\n";
  }
  const auto a = scratch("ens_a.csv"), b = scratch("ens_b.csv");
  REQUIRE(invoke({"ensemble", "--config", cfg.string(), "--no-timestamp", "--out", a.string()}).code == 0);
  REQUIRE(invoke({"ensemble", "--topology", "binomial", "--nodes", "6", "--p", "0.5", "--eta", "1.5", "--steps", "10",
                  "--trials", "200", "--seed", "3", "--no-timestamp", "--out", b.string()})
              .code == 0);
  CHECK(slurp(a) == slurp(b));
  CHECK(slurp(a).find("step,mean_sum,stderr\n0,6,0\n") != std::string::npos);

  const auto c = scratch("ens_c.csv");
  REQUIRE(invoke({"ensemble", "--config", cfg.string(), "--seed", "4", "--no-timestamp", "--out", c.string()}).code == 0);
  CHECK(slurp(c) != slurp(a));
}

TEST_CASE("cli decay writes a JSON report") {
  const auto out = scratch("decay.json"), ens = scratch("decay_ens.csv");
  const auto r = invoke({"decay", "--nodes", "10", "--p", "0.5", "--eta", "1.5", "--steps", "40", "--trials", "3000",
                         "--out", out.string(), "--ensemble-out", ens.string()});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(slurp(out));
  CHECK(std::abs(j["relative_error"].get<double>()) < 0.2);
  CHECK(j.contains("generated_at"));
  CHECK(fs::exists(ens));
}

TEST_CASE("cli exact output and verification") {
  const auto prefix = scratch("chain").string();
  auto r = invoke({"exact", "--topology", "binomial", "--nodes", "2", "--p", "0.5", "--eta", "2", "--verify",
                   "--no-timestamp", "--out", prefix});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("PASS closed_form_stationary") != std::string::npos);
  CHECK(r.out.find("FAIL") == std::string::npos);
  const auto j = nlohmann::json::parse(slurp(prefix + ".json"));
  CHECK(j["convention"] == "row-stochastic");
  CHECK(j["stationary"]["probs"][0].get<double>() == doctest::Approx(7.0 / 26.0).epsilon(1e-12));
  CHECK(j["stationary"]["probs"][1].get<double>() == doctest::Approx(3.0 / 13.0).epsilon(1e-12));
  const std::string matrix = slurp(prefix + ".matrix.csv");
  CHECK(std::count(matrix.begin(), matrix.end(), '\n') == 4);

  r = invoke({"exact", "--topology", "ring", "--nodes", "4", "--eta", "0.5", "--verify"});
  CHECK(r.code == 0);
  CHECK(r.out.find("2 absorbing") != std::string::npos);
}

TEST_CASE("cli sweep") {
  const auto out = scratch("sweep.csv");
  REQUIRE(invoke({"sweep", "--metric", "agreement_fraction", "--topology", "ring", "--nodes", "12", "--eta-grid",
                  "0.5,0.75", "--steps", "20000", "--trials", "6", "--no-timestamp", "--out", out.string()})
              .code == 0);
  const std::string text = slurp(out);
  CHECK(text.find("point,eta,p,metric,value,uncertainty,seed\n") != std::string::npos);
  CHECK(text.find("0,0.5,,agreement_fraction,1,0,1\n") != std::string::npos);
  CHECK(text.find("1,0.75,,agreement_fraction,") != std::string::npos);

  const auto r = invoke({"sweep", "--metric", "final_time_average", "--topology", "binomial", "--nodes", "10",
                         "--p-grid", "0.2,0.5", "--eta-grid", "2", "--steps", "2000", "--burn-in", "100", "--trials", "4"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("1,2,0.5,final_time_average,") != std::string::npos);
}
