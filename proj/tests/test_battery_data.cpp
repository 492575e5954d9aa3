#include <doctest.h>

#include <fstream>
#include <set>

#include "ginet/battery_data.hpp"
#include "ginet/dataset_file.hpp"
#include "ginet/error.hpp"
#include "ginet/synthetic.hpp"

using namespace ginet;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("ginet_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_text(const fs::path& file, const std::string& text) {
  std::ofstream(file) << text;
  return file;
}

Cycle cycle_of_length(std::size_t n, const std::string& id = "c") {
  Cycle c;
  c.id = id;
  for (std::size_t i = 0; i < n; ++i) {
    BatteryRecord r;
    r.timestamp = static_cast<double>(i);
    r.current = static_cast<double>(i);
    r.voltage = 100.0 + static_cast<double>(i);
    r.temperature = 200.0 + static_cast<double>(i);
    r.soc = static_cast<double>(i) / 1000.0;
    c.records.push_back(r);
  }
  return c;
}

std::string read_bytes(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("parse: well-formed rows at slot spacing") {
  const auto dir = scratch_dir("parse1");
  const auto f = write_text(dir / "a.csv",
                            "timestamp_s,voltage_V,current_A,temperature_C,amp_hours_Ah\n"
                            "0,4.0,-1,25,0\n1,3.9,-1,25,-0.1\n2,3.8,-1,25,-0.2\n");
  const Cycle c = parse_cycle_file(f, 1.0);
  REQUIRE(c.records.size() == 3);
  CHECK(c.records[1].voltage == doctest::Approx(3.9));
  CHECK(c.records[2].amp_hours == doctest::Approx(-0.2));
  CHECK(c.id == "a");
}

TEST_CASE("parse: columns located by name, any order") {
  const auto dir = scratch_dir("parse_order");
  const auto f = write_text(dir / "b.csv",
                            "amp_hours_Ah,temperature_C,current_A,voltage_V,timestamp_s\n"
                            "-0.5,30,-2,3.7,0\n");
  const Cycle c = parse_cycle_file(f, 1.0);
  REQUIRE(c.records.size() == 1);
  CHECK(c.records[0].voltage == doctest::Approx(3.7));
  CHECK(c.records[0].current == doctest::Approx(-2.0));
  CHECK(c.records[0].temperature == doctest::Approx(30.0));
}

TEST_CASE("parse: missing voltage column names the column") {
  const auto dir = scratch_dir("parse2");
  const auto f = write_text(dir / "a.csv", "timestamp_s,current_A,temperature_C,amp_hours_Ah\n0,-1,25,0\n");
  try {
    parse_cycle_file(f, 1.0);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("voltage") != std::string::npos);
  }
}

TEST_CASE("parse: non-monotonic timestamps are a data error") {
  const auto dir = scratch_dir("parse3");
  const auto f = write_text(dir / "a.csv",
                            "timestamp_s,voltage_V,current_A,temperature_C,amp_hours_Ah\n"
                            "0,4,-1,25,0\n2,4,-1,25,0\n1,4,-1,25,0\n");
  CHECK_THROWS_AS(parse_cycle_file(f, 1.0), DataError);
}

TEST_CASE("parse: 20 rows at 10 Hz aggregate to two slot means") {
  const auto dir = scratch_dir("parse4");
  std::string text = "timestamp_s,voltage_V,current_A,temperature_C,amp_hours_Ah\n";
  double mean_v[2] = {0, 0}, mean_i[2] = {0, 0};
  for (int i = 0; i < 20; ++i) {
    const double v = 3.0 + 0.01 * i, cur = -1.0 - 0.1 * i;
    mean_v[i / 10] += v / 10.0;
    mean_i[i / 10] += cur / 10.0;
    text += std::to_string(0.1 * i) + "," + std::to_string(v) + "," + std::to_string(cur) + ",25,0\n";
  }
  const Cycle c = parse_cycle_file(write_text(dir / "a.csv", text), 1.0);
  REQUIRE(c.records.size() == 2);
  for (int s = 0; s < 2; ++s) {
    CHECK(c.records[s].voltage == doctest::Approx(mean_v[s]).epsilon(1e-12));
    CHECK(c.records[s].current == doctest::Approx(mean_i[s]).epsilon(1e-12));
  }
}

TEST_CASE("parse_dataset: directory sorted by name; missing path is a parse error") {
  const auto dir = scratch_dir("parse5");
  const std::string row = "timestamp_s,voltage_V,current_A,temperature_C,amp_hours_Ah\n0,4,-1,25,0\n";
  write_text(dir / "z.csv", row);
  write_text(dir / "a.csv", row);
  write_text(dir / "notes.txt", "ignored");
  const auto cycles = parse_dataset(dir, 1.0);
  REQUIRE(cycles.size() == 2);
  CHECK(cycles[0].id == "a");
  CHECK(cycles[1].id == "z");
  CHECK_THROWS_AS(parse_dataset(dir / "nope", 1.0), ParseError);
}

TEST_CASE("derive_soc examples") {
  Cycle c;
  for (double ah : {0.0, -1.45, -3.5, 0.2}) {
    BatteryRecord r;
    r.amp_hours = ah;
    c.records.push_back(r);
  }
  const Cycle d = derive_soc(c, 2.9);
  CHECK(d.records[0].soc == doctest::Approx(1.0));
  CHECK(d.records[1].soc == doctest::Approx(0.5));
  CHECK(d.records[2].soc == 0.0);
  CHECK(d.records[3].soc == 1.0);
}

TEST_CASE("normalize examples") {
  Cycle c;
  for (double v : {2.0, 4.0, 6.0}) {
    BatteryRecord r;
    r.current = v;
    r.voltage = 5.0;
    r.temperature = v;
    r.soc = 0.3;
    c.records.push_back(r);
  }
  const NormStats s = fit_normalize({c});
  const Cycle n = apply_normalize(s, {c}).front();
  CHECK(n.records[0].current == 0.0);
  CHECK(n.records[1].current == doctest::Approx(0.5));
  CHECK(n.records[2].current == 1.0);
  for (const auto& r : n.records) {
    CHECK(r.voltage == 0.0);  // degenerate range
    CHECK(r.soc == 0.3);      // targets untouched
  }
  CHECK(s.scale(0, 8.0) == doctest::Approx(1.5));
  CHECK_THROWS(fit_normalize({}));
}

TEST_CASE("make_windows examples") {
  CHECK(make_windows(cycle_of_length(5), 2, 1).size() == 3);
  CHECK(make_windows(cycle_of_length(19), 10, 10).empty());
  const auto w = make_windows(cycle_of_length(6), 2, 2);
  REQUIRE(w.size() == 3);
  CHECK(w[0].t_origin == 2);
  // input slots {0,1}: currents 0, 1; target slots {2,3}
  CHECK(w[0].input[0 * 3 + 0] == 0.0);
  CHECK(w[0].input[1 * 3 + 0] == 1.0);
  CHECK(w[0].target[0] == doctest::Approx(0.002));
  CHECK(w[0].target[1] == doctest::Approx(0.003));
  CHECK(w[1].start_time == 1.0);
}

TEST_CASE("window count formula agrees with exhaustive enumeration") {
  for (std::size_t L = 1; L <= 20; ++L) {
    for (std::size_t tin = 1; tin <= 8; ++tin) {
      for (std::size_t tout = 1; tout <= 8; ++tout) {
        for (std::size_t stride = 1; stride <= 3; ++stride) {
          std::size_t brute = 0;
          for (std::size_t t = tin; t + tout <= L; t += 1) {
            if ((t - tin) % stride == 0) ++brute;
          }
          CHECK(window_count(L, tin, tout, stride) == brute);
          const auto w = make_windows(cycle_of_length(L), tin, tout, stride);
          CHECK(w.size() == brute);
          for (const auto& s : w) {
            // input covers [t - tin, t - 1], target [t, t + tout - 1]
            CHECK(s.input[(tin - 1) * 3] == static_cast<double>(s.t_origin - 1));
            CHECK(s.target.front() == doctest::Approx(static_cast<double>(s.t_origin) / 1000.0));
          }
        }
      }
    }
  }
}

TEST_CASE("split sizes") {
  CHECK(split_sizes(17, {}) == std::array<std::size_t, 3>{10, 2, 5});
  CHECK(split_sizes(34, {}) == std::array<std::size_t, 3>{20, 4, 10});
  for (std::size_t n = 3; n < 60; ++n) {
    const auto s = split_sizes(n, {});
    CHECK(s[0] + s[1] + s[2] == n);
    CHECK(s[0] >= 1);
    CHECK(s[1] >= 1);
    CHECK(s[2] >= 1);
  }
  CHECK_THROWS_AS(split_sizes(2, {}), ConfigError);
}

TEST_CASE("split_cycles: deterministic, disjoint, input-order independent") {
  std::vector<Cycle> cycles;
  for (int i = 0; i < 17; ++i) cycles.push_back(cycle_of_length(3, "cyc" + std::to_string(100 + i)));
  const auto a = split_cycles(cycles, {}, 42);
  auto reversed = cycles;
  std::reverse(reversed.begin(), reversed.end());
  const auto b = split_cycles(reversed, {}, 42);
  auto ids = [](const std::vector<Cycle>& v) {
    std::vector<std::string> out;
    for (const auto& c : v) out.push_back(c.id);
    return out;
  };
  CHECK(ids(a.train) == ids(b.train));
  CHECK(ids(a.val) == ids(b.val));
  CHECK(ids(a.test) == ids(b.test));
  CHECK(a.train.size() == 10);
  CHECK(a.val.size() == 2);
  CHECK(a.test.size() == 5);
  std::set<std::string> all;
  for (const auto* part : {&a.train, &a.val, &a.test}) {
    for (const auto& c : *part) all.insert(c.id);
  }
  CHECK(all.size() == 17);
  const auto c = split_cycles(cycles, {}, 43);
  CHECK((ids(a.test) != ids(c.test) || ids(a.train) != ids(c.train)));
}

TEST_CASE("split_cycles with pinned test ids") {
  std::vector<Cycle> cycles;
  for (int i = 0; i < 8; ++i) cycles.push_back(cycle_of_length(3, "k" + std::to_string(i)));
  const auto s = split_cycles(cycles, {}, 1, {"k3", "k5"});
  REQUIRE(s.test.size() == 2);
  CHECK(s.test[0].id == "k3");
  CHECK(s.test[1].id == "k5");
  CHECK(s.train.size() + s.val.size() == 6);
  CHECK(s.val.size() >= 1);
  CHECK_THROWS(split_cycles(cycles, {}, 1, {"missing"}));
}

TEST_CASE("prepared dataset: no leakage, byte-identical reruns, round trip") {
  SyntheticOptions o;
  o.n_cycles = 6;
  o.duration_s = 60;
  const auto dir = scratch_dir("prep");
  for (const auto& c : generate_synthetic_cycles(o, 3)) write_cycle_csv(c, dir / (c.id + ".csv"));

  PrepareOptions p;
  p.t_in = 10;
  p.t_out = 3;
  p.seed = 5;
  const auto ds = prepare_dataset(parse_dataset(dir, 1.0), p);
  std::set<std::string> train_ids(ds.train_ids.begin(), ds.train_ids.end());
  for (const auto& w : ds.test) CHECK(train_ids.count(w.cycle_id) == 0);
  for (const auto& w : ds.val) CHECK(train_ids.count(w.cycle_id) == 0);
  for (const auto& w : ds.train) {
    for (double v : w.input) {
      CHECK(v >= -1e-12);
      CHECK(v <= 1.0 + 1e-12);
    }
  }

  save_prepared_dataset(ds, dir / "a.bin");
  const auto again = prepare_dataset(parse_dataset(dir, 1.0), p);
  save_prepared_dataset(again, dir / "b.bin");
  CHECK(read_bytes(dir / "a.bin") == read_bytes(dir / "b.bin"));

  const auto loaded = load_prepared_dataset(dir / "a.bin");
  CHECK(loaded.test_ids == ds.test_ids);
  REQUIRE(loaded.train.size() == ds.train.size());
  CHECK(loaded.train[3].input == ds.train[3].input);
  CHECK(loaded.train[3].target == ds.train[3].target);
  CHECK(loaded.norm.max == ds.norm.max);
  save_prepared_dataset(loaded, dir / "c.bin");
  CHECK(read_bytes(dir / "a.bin") == read_bytes(dir / "c.bin"));
}

TEST_CASE("prepared dataset: too few cycles or too-short cycles") {
  PrepareOptions p;
  p.t_in = 10;
  p.t_out = 3;
  CHECK_THROWS_AS(prepare_dataset({cycle_of_length(50, "a"), cycle_of_length(50, "b")}, p), InsufficientDataError);
  CHECK_THROWS_AS(prepare_dataset({cycle_of_length(5, "a"), cycle_of_length(5, "b"), cycle_of_length(5, "c")}, p),
                  InsufficientDataError);
}

TEST_CASE("load_prepared_dataset rejects foreign files") {
  const auto dir = scratch_dir("badfile");
  write_text(dir / "x.bin", "not a dataset at all");
  CHECK_THROWS_AS(load_prepared_dataset(dir / "x.bin"), ParseError);
}

TEST_CASE("synthetic cycles: SoC monotone under discharge and recoverable from amp-hours") {
  SyntheticOptions o;
  o.n_cycles = 3;
  o.duration_s = 120;
  const auto cycles = generate_synthetic_cycles(o, 9);
  REQUIRE(cycles.size() == 3);
  for (const auto& c : cycles) {
    CHECK(c.records.size() == 1200);
    for (std::size_t i = 1; i < c.records.size(); ++i) {
      const auto& prev = c.records[i - 1];
      const auto& cur = c.records[i];
      if (cur.current < 0) CHECK(cur.soc <= prev.soc + 1e-12);
      CHECK(cur.soc == doctest::Approx(std::clamp(1.0 + cur.amp_hours / 2.9, 0.0, 1.0)).epsilon(1e-9));
    }
  }
  for (double s = 0.0; s < 1.0; s += 0.05) CHECK(synthetic_ocv(s + 0.05) > synthetic_ocv(s));
}
