#include <doctest.h>

#include <fstream>
#include <sstream>

#include "ginet/cli.hpp"
#include "ginet/dataset_file.hpp"
#include "ginet/error.hpp"
#include "ginet/synthetic.hpp"

using namespace ginet;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run ginet_cmd(std::vector<std::string> args) {
  args.insert(args.begin(), "ginet");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

// Small pipeline shared by several cases: 6 synthetic cycles of 120 s at 2 Hz.
struct Workspace {
  fs::path dir = fs::temp_directory_path() / "ginet_cli_test";
  fs::path raw = dir / "raw";
  fs::path data = dir / "data.gds";
  fs::path cfg = dir / "toy.cfg";
  fs::path ckpt = dir / "model.ckpt";

  Workspace() {
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::ofstream(cfg) << "d_model=8\nn_heads=2\nd_ff=16\ngru_hidden=4\ngru_layers=1\nmax_epochs=1\n"
                          "batch_size=64\nstride=4\n";
    REQUIRE(ginet_cmd({"synth", raw.string(), "--cycles", "6", "--duration", "120", "--rate", "2", "--seed", "3"})
                .code == 0);
    const auto r = ginet_cmd({"prepare", raw.string(), data.string(), "--config", cfg.string(), "--t-in", "12",
                              "--t-out", "3", "--seed", "3"});
    INFO(r.err);
    REQUIRE(r.code == 0);
  }

  void train() {
    const auto r = ginet_cmd({"train", data.string(), ckpt.string()});
    INFO(r.err);
    REQUIRE(r.code == 0);
  }
};

}  // namespace

TEST_CASE("cli: usage errors map to exit code 2") {
  CHECK(ginet_cmd({}).code == kExitConfig);
  CHECK(ginet_cmd({"frobnicate"}).code == kExitConfig);
  CHECK(ginet_cmd({"bench-attention", "--lengths", "256"}).code == kExitConfig);
  CHECK(ginet_cmd({"--help"}).code == kExitOk);
}

TEST_CASE("cli: prepare on an empty directory is insufficient data") {
  const auto dir = fs::temp_directory_path() / "ginet_cli_empty";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto r = ginet_cmd({"prepare", dir.string(), (dir / "x.gds").string()});
  CHECK(r.code == kExitInsufficientData);
  CHECK_FALSE(r.err.empty());
}

TEST_CASE("cli: invalid config keys are rejected by name") {
  const auto dir = fs::temp_directory_path() / "ginet_cli_badcfg";
  fs::create_directories(dir);
  std::ofstream(dir / "bad.cfg") << "t_in=12\nwarmup_steps=5\n";
  const auto r = ginet_cmd({"synth", (dir / "raw").string(), "--config", (dir / "bad.cfg").string()});
  CHECK(r.code == kExitConfig);
  CHECK(r.err.find("warmup_steps") != std::string::npos);
  CHECK(ginet_cmd({"synth", (dir / "raw").string(), "--variant", "lstm"}).code == kExitConfig);
}

TEST_CASE("cli: prepare is byte-identical across runs") {
  Workspace ws;
  const auto again = ws.dir / "again.gds";
  REQUIRE(ginet_cmd({"prepare", ws.raw.string(), again.string(), "--config", ws.cfg.string(), "--t-in", "12",
                     "--t-out", "3", "--seed", "3"})
              .code == 0);
  CHECK(slurp(ws.data) == slurp(again));
  const auto ds = load_prepared_dataset(ws.data);
  CHECK(ds.provenance.t_in == 12);
  CHECK_FALSE(ds.test.empty());
}

TEST_CASE("cli: train, evaluate and predict end to end") {
  Workspace ws;
  ws.train();
  const auto log1 = slurp(ws.ckpt.string() + ".log.csv");
  CHECK(log1.rfind("# config_digest=", 0) == 0);
  CHECK(lines_of(log1).at(1) == "epoch,train_loss,val_loss,lr");
  CHECK(lines_of(log1).size() == 3);

  SUBCASE("training log is reproducible") {
    const auto other = ws.dir / "other.ckpt";
    REQUIRE(ginet_cmd({"train", ws.data.string(), other.string()}).code == 0);
    CHECK(slurp(other.string() + ".log.csv") == log1);
    CHECK(slurp(other) == slurp(ws.ckpt));
  }

  SUBCASE("evaluate writes report, csv and svg covering every window") {
    const auto out = ws.dir / "eval";
    const auto r = ginet_cmd({"evaluate", ws.ckpt.string(), ws.data.string(), out.string()});
    INFO(r.err);
    REQUIRE(r.code == 0);
    const auto report = slurp(out / "report.txt");
    for (const char* key : {"mae=", "rmse=", "n_windows=", "config_digest=", "variant=ginet"}) {
      CHECK(report.find(key) != std::string::npos);
    }
    const auto ds = load_prepared_dataset(ws.data);
    const auto csv = lines_of(slurp(out / "predictions.csv"));
    CHECK(csv.at(0).rfind("# config_digest=", 0) == 0);
    CHECK(csv.at(1) == "t_origin,y_soc_pred,y_soc_true");
    CHECK(csv.size() == ds.test.size() + 2);
    const auto svg = slurp(out / "predictions.svg");
    std::size_t titles = 0;
    for (auto pos = svg.find("<title>"); pos != std::string::npos; pos = svg.find("<title>", pos + 1)) ++titles;
    CHECK(titles == ds.test.size());
    CHECK(svg.find(csv.at(0).substr(16)) != std::string::npos);
  }

  SUBCASE("predict needs T_in slots and reports the horizon mean") {
    // 2 Hz raw rows, 1 s slots: 24 rows give 12 slots.
    auto cycles = generate_synthetic_cycles(SyntheticOptions{1, 12.0, 2.0, 2.9, 0.005}, 5);
    const auto full = ws.dir / "in12.csv";
    write_cycle_csv(cycles[0], full);
    const auto out = ws.dir / "pred.csv";
    const auto r = ginet_cmd({"predict", ws.ckpt.string(), full.string(), out.string()});
    INFO(r.err);
    REQUIRE(r.code == 0);
    const auto rows = lines_of(slurp(out));
    REQUIRE(rows.size() == 3);
    CHECK(rows[1] == "t_origin,y_soc_pred,yhat_1,yhat_2,yhat_3");
    std::vector<double> v;
    std::istringstream line(rows[2]);
    for (std::string cell; std::getline(line, cell, ',');) v.push_back(std::stod(cell));
    REQUIRE(v.size() == 5);
    CHECK(v[0] == 12);
    CHECK(v[1] == doctest::Approx((v[2] + v[3] + v[4]) / 3).epsilon(1e-14));

    auto short_cycle = cycles[0];
    short_cycle.records.resize(short_cycle.records.size() - 2);  // one slot short
    const auto part = ws.dir / "in11.csv";
    write_cycle_csv(short_cycle, part);
    CHECK(ginet_cmd({"predict", ws.ckpt.string(), part.string(), out.string()}).code == kExitInsufficientData);
  }

  SUBCASE("mismatched T_in between dataset and run is a config error") {
    CHECK(ginet_cmd({"train", ws.data.string(), (ws.dir / "x.ckpt").string(), "--t-in", "16"}).code == kExitConfig);
  }
}

TEST_CASE("bench_attention: op counts and CSV shape") {
  const auto rows = bench_attention({32, 64}, 16, 2, 1);
  REQUIRE(rows.size() == 2);
  CHECK(rows[1].full_ops == 4 * rows[0].full_ops);
  CHECK(rows[0].probsparse_ops < rows[0].full_ops);
  const auto r = ginet_cmd({"bench-attention", "--lengths", "32,64", "--d-model", "16", "--heads", "2"});
  REQUIRE(r.code == 0);
  const auto lines = lines_of(r.out);
  REQUIRE(lines.size() == 5);
  CHECK(lines[2] == "L,full_ops,probsparse_ops,full_ms,probsparse_ms");
}

TEST_CASE("exit code mapping") {
  CHECK(exit_code_for(ConfigError("x")) == 2);
  CHECK(exit_code_for(ParseError("x")) == 2);
  CHECK(exit_code_for(InsufficientDataError("x")) == 3);
  CHECK(exit_code_for(NumericError("x")) == 4);
  CHECK(exit_code_for(std::runtime_error("x")) == 1);
}
