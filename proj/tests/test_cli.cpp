#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "netreg/cli.hpp"
#include "netreg/netreg.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace netreg;

namespace {

const char* kHandAdjacency = "0,1,1,0\n1,0,1,0\n1,1,0,1\n0,0,1,0\n";
const char* kHandNodes = "y,x\n2,1\n3,2\n9,4\n10,7\n";

struct Result {
  int code;
  std::string out, err;
};

Result run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"netreg"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = main_entry(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

class EnvGuard {
 public:
  EnvGuard(const char* name, const char* value) : name_(name) {
    if (const char* old = std::getenv(name)) old_ = old;
    if (value) ::setenv(name, value, 1);
    else ::unsetenv(name);
  }
  ~EnvGuard() {
    if (old_) ::setenv(name_, old_->c_str(), 1);
    else ::unsetenv(name_);
  }

 private:
  const char* name_;
  std::optional<std::string> old_;
};

}  // namespace

TEST(ParseArgs, ValidSimulate) {
  auto cfg = parse_args({"simulate", "--design", "blockmodel", "--n", "100", "--reps", "50", "--seed", "7"});
  EXPECT_EQ(cfg.subcommand, "simulate");
  EXPECT_EQ(cfg.designs, std::vector<std::string>{"blockmodel"});
  EXPECT_EQ(cfg.ns, std::vector<Index>{100});
  EXPECT_EQ(cfg.reps, 50);
  EXPECT_EQ(cfg.seed, 7u);
  EXPECT_EQ(cfg.argument, KernelArgument::root);
  EXPECT_DOUBLE_EQ(cfg.bandwidth.constant, 0.1);
  EXPECT_DOUBLE_EQ(cfg.bandwidth.exponent, 1.0 / 9.0);
}

TEST(ParseArgs, AllTables) {
  auto cfg = parse_args({"simulate", "--all-tables", "--reps", "200"});
  EXPECT_EQ(cfg.designs.size(), 3u);
  EXPECT_EQ(cfg.ns, (std::vector<Index>{50, 100, 200}));
  EXPECT_THROW(parse_args({"simulate", "--all-tables", "--design", "degree"}), ValidationError);
}

TEST(ParseArgs, UsageErrors) {
  EXPECT_THROW(parse_args({"estimate", "--nodes", "n.csv"}), ValidationError);
  EXPECT_THROW(parse_args({"estimate", "--adjacency", "a.csv", "--nodes", "n.csv", "--bandwidth-exponent", "-1"}),
               ValidationError);
  EXPECT_THROW(parse_args({"estimate", "--adjacency", "a", "--nodes", "n", "--adaptive", "5", "--bias-correct",
                           "2,2,1"}),
               ValidationError);
  EXPECT_THROW(parse_args({"estimate", "--adjacency", "a", "--nodes", "n", "--bias-correct", "2,1"}),
               ValidationError);
  EXPECT_THROW(parse_args({"estimate", "--adjacency", "a", "--nodes", "n", "--bias-correct", "2,2,1", "--variance",
                           "finite-support"}),
               ValidationError);
  EXPECT_THROW(parse_args({"estimate", "--adjacency", "a", "--nodes", "n", "--kernel-argument", "cubed"}),
               ValidationError);
  EXPECT_THROW(parse_args({"simulate", "--design", "degree", "--frobnicate"}), ValidationError);
  EXPECT_THROW(parse_args({"simulate", "--design", "degree", "--n", "5"}), ValidationError);
  EXPECT_THROW(parse_args({"simulate", "--design", "degree", "--estimators", "0"}), ValidationError);
  EXPECT_THROW(parse_args({"peer", "--adjacency", "a", "--nodes", "n", "--hz", "0.5"}), ValidationError);
  EXPECT_THROW(parse_args({"distances", "--adjacency", "a", "--link-covariates", "z"}), ValidationError);
  EXPECT_THROW(parse_args({"distances", "--adjacency", "a", "b"}), ValidationError);
}

TEST(ParseArgs, Help) {
  auto r = run_cli({"--help"});
  EXPECT_EQ(r.code, kExitOk);
  EXPECT_NE(r.out.find("simulate"), std::string::npos);
}

TEST(ParseArgs, ThreadsFromEnvironment) {
  {
    EnvGuard env("NETREG_THREADS", "3");
    EXPECT_EQ(parse_args({"simulate", "--design", "degree"}).threads, 3u);
    EXPECT_EQ(parse_args({"--threads", "2", "simulate", "--design", "degree"}).threads, 2u);
  }
  {
    EnvGuard env("NETREG_THREADS", "lots");
    EXPECT_THROW(parse_args({"simulate", "--design", "degree"}), ValidationError);
  }
  {
    EnvGuard env("NETREG_THREADS", nullptr);
    EXPECT_EQ(parse_args({"simulate", "--design", "degree"}).threads, 0u);
  }
}

TEST(Cli, DistancesHandAdjacency) {
  testutil::TempDir dir;
  const auto adj = dir.write("adj.csv", kHandAdjacency);
  auto r = run_cli({"distances", "--adjacency", adj});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const Matrix d2 = read_csv_grid(dir.write("d2.csv", r.out));
  EXPECT_NEAR(d2(0, 1), 0.03125, 1e-15);
  EXPECT_LE((d2 - oracle::codegree_triple(read_csv_grid(adj))).cwiseAbs().maxCoeff(), 1e-15);

  const auto out = dir.file("d2_file.csv");
  ASSERT_EQ(run_cli({"distances", "--adjacency", adj, "--out", out}).code, kExitOk);
  EXPECT_EQ(read_csv_grid(out), d2);
}

TEST(Cli, DistancesWithLinkCovariates) {
  testutil::TempDir dir;
  const auto adj = dir.write("adj.csv", kHandAdjacency);
  const auto z = dir.write("z.csv", "0,1,0,1\n1,0,1,1\n0,1,0,0\n1,1,0,0\n");
  auto r = run_cli({"distances", "--adjacency", adj, "--link-covariates", z, "--hz", "1.5"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const Matrix d2 = read_csv_grid(dir.write("d2.csv", r.out));
  const Matrix want = oracle::conditional_quad(read_csv_grid(adj), {read_csv_grid(z)}, 1.5);
  EXPECT_LE((d2 - want).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Cli, EstimateHandDataset) {
  testutil::TempDir dir;
  const auto adj = dir.write("adj.csv", kHandAdjacency);
  const auto nodes = dir.write("nodes.csv", kHandNodes);
  const auto out = dir.file("report.json");
  auto r = run_cli({"-q", "estimate", "--adjacency", adj, "--nodes", nodes, "--kernel-argument", "squared",
                    "--bandwidth-constant", "1", "--bandwidth-exponent", "0", "--out", out});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto j = nlohmann::json::parse(slurp(out));
  Matrix x(4, 1);
  x << 1, 2, 4, 7;
  Vector y(4);
  y << 2, 3, 9, 10;
  const Vector want = oracle::pairwise_loop(x, y, oracle::codegree_triple(read_csv_grid(adj)), 1.0,
                                            oracle::Arg::squared);
  EXPECT_NEAR(j["beta"][0].get<double>(), want(0), 1e-12);
  EXPECT_EQ(j["n"], 4);
  EXPECT_EQ(j["estimator"], "pairwise-difference");
  EXPECT_EQ(j["kernel_argument"], "squared");
  EXPECT_EQ(j["regressors"][0], "x");
  ASSERT_TRUE(j["se"].is_array());
  EXPECT_LE(j["ci"][0]["lo"].get<double>(), j["beta"][0].get<double>());
  EXPECT_GE(j["ci"][0]["hi"].get<double>(), j["beta"][0].get<double>());
  EXPECT_EQ(j["lambda_path"], out + ".lambda.csv");
  const auto lam = slurp(out + ".lambda.csv");
  EXPECT_EQ(lam.rfind("agent,lambda,r_hat\n", 0), 0u);
}

TEST(Cli, SimulateThenEstimate) {
  testutil::TempDir dir;
  const auto emit = dir.file("rep0");
  const auto csv = dir.file("report.csv");
  auto sim = run_cli({"-q", "simulate", "--design", "degree", "--n", "50", "--reps", "5", "--seed", "3", "--emit", emit,
                      "--out", csv, "--format", "csv"});
  ASSERT_EQ(sim.code, kExitOk) << sim.err;
  EXPECT_EQ(sim.out.rfind("design,n,metric,beta1", 0), 0u);
  EXPECT_NE(slurp(csv).find("kernel_argument"), std::string::npos);

  const auto out = dir.file("est.json");
  auto est = run_cli({"-q", "estimate", "--adjacency", emit + "/adjacency.csv", "--nodes", emit + "/nodes.csv",
                      "--out", out});
  ASSERT_EQ(est.code, kExitOk) << est.err;
  const auto j = nlohmann::json::parse(slurp(out));
  EXPECT_TRUE(std::isfinite(j["beta"][0].get<double>()));

  for (const char* variant : {"2,2,1", "3,2,3,1"}) {
    auto bc = run_cli({"-q", "estimate", "--adjacency", emit + "/adjacency.csv", "--nodes", emit + "/nodes.csv",
                       "--bias-correct", variant});
    EXPECT_EQ(bc.code, kExitOk) << bc.err;
    EXPECT_EQ(nlohmann::json::parse(bc.out)["variance_method"], "bias-corrected");
  }
  auto ad = run_cli({"-q", "estimate", "--adjacency", emit + "/adjacency.csv", "--nodes", emit + "/nodes.csv",
                     "--adaptive", "10"});
  EXPECT_EQ(ad.code, kExitOk) << ad.err;
}

TEST(Cli, SimulateIsDeterministic) {
  const std::vector<std::string> args{"-q", "simulate", "--design", "homophily", "--n", "40", "--reps", "4",
                                      "--seed", "11", "--format", "csv"};
  auto a = run_cli(args);
  auto b = run_cli(args);
  ASSERT_EQ(a.code, kExitOk) << a.err;
  EXPECT_EQ(a.out, b.out);
  auto c = run_cli({"-q", "--threads", "2", "simulate", "--design", "homophily", "--n", "40", "--reps", "4", "--seed",
                    "11", "--format", "csv"});
  EXPECT_EQ(a.out, c.out);
}

TEST(Cli, PeerAgentCovariates) {
  testutil::TempDir dir;
  DesignSpec spec;
  spec.design = Design::degree;
  spec.n = 40;
  auto rep = gen_replication(spec, 0);
  const auto adj = dir.file("adj.csv");
  save_network(adj, rep.net);
  std::ostringstream nodes;
  nodes << "y,x,z\n";
  for (Index i = 0; i < spec.n; ++i)
    nodes << rep.sample.y()(i) << ',' << rep.sample.x()(i, 0) << ',' << normal_cdf(rep.omega(i)) << '\n';
  const auto np = dir.write("nodes.csv", nodes.str());
  auto r = run_cli({"-q", "peer", "--variant", "agent-z", "--adjacency", adj, "--nodes", np, "--hz", "0.8"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["theta"].size(), 3u);
  EXPECT_TRUE(j["se"].is_null());
}

TEST(Cli, ExitCodes) {
  testutil::TempDir dir;
  const auto adj = dir.write("adj.csv", kHandAdjacency);
  // constant regressor: no within-pair variation
  const auto flat = dir.write("flat.csv", "y,x\n1,1\n2,1\n3,1\n4,1\n");
  auto r = run_cli({"-q", "estimate", "--adjacency", adj, "--nodes", flat});
  EXPECT_EQ(r.code, kExitNumerical) << r.err;
  EXPECT_NE(r.err.find("numerical"), std::string::npos);

  r = run_cli({"estimate", "--adjacency", dir.file("missing.csv"), "--nodes", flat});
  EXPECT_EQ(r.code, kExitValidation);
  r = run_cli({"estimate", "--adjacency", adj, "--nodes", dir.write("short.csv", "y,x\n1,2\n")});
  EXPECT_EQ(r.code, kExitValidation);
  r = run_cli({"simulate", "--design", "lattice"});
  EXPECT_EQ(r.code, kExitValidation);
  r = run_cli({"frobnicate"});
  EXPECT_EQ(r.code, kExitValidation);
}

TEST(Cli, BinaryExitStatus) {
  testutil::TempDir dir;
  const auto adj = dir.write("adj.csv", kHandAdjacency);
  const auto flat = dir.write("flat.csv", "y,x\n1,1\n2,1\n3,1\n4,1\n");
  auto status = [&](const std::string& args) {
    const std::string cmd = std::string(NETREG_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int s = std::system(cmd.c_str());
    return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
  };
  EXPECT_EQ(status("distances --adjacency " + adj), 0);
  EXPECT_EQ(status("estimate --adjacency " + adj), 1);
  EXPECT_EQ(status("estimate --adjacency " + adj + " --nodes " + flat), 2);
}
