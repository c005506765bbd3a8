#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "car/cli.hpp"
#include "car/dataset.hpp"

using namespace car;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path fresh_dir(const char* stem) {
  fs::path p = fs::temp_directory_path() / stem;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p);
  out << content;
}

void write_minimal_dataset(const fs::path& dir) {
  write_file(dir / "meta.json", "{\"directed\": false, \"num_classes\": 2}\n");
  write_file(dir / "features.tsv", "0\t0.5\t1.0\n1\t0.25\t0.75\n");
  write_file(dir / "edges.tsv", "# source target\n0\t1\n");
  write_file(dir / "labels.tsv", "0\t0\n1\t1\n");
  write_file(dir / "splits.tsv", "0\ttrain\n1\ttest\n");
}

struct StdoutRedirect {
  std::streambuf* old;
  explicit StdoutRedirect(std::streambuf* to) : old(std::cout.rdbuf(to)) {}
  ~StdoutRedirect() { std::cout.rdbuf(old); }
};

std::string capture_stdout(const std::function<int()>& f, int& rc) {
  std::ostringstream got;
  StdoutRedirect redirect(got.rdbuf());
  rc = f();
  return got.str();
}

}  // namespace

TEST_CASE("the loader reads a minimal dataset") {
  fs::path dir = fresh_dir("car_ds_min");
  write_minimal_dataset(dir);
  Graph g = load_dataset(dir.string());
  CHECK(g.num_nodes == 2);
  CHECK(g.num_edges() == 2);  // undirected pair doubled
  CHECK(g.feature_dim == 2);
  CHECK(g.features == std::vector<double>{0.5, 1.0, 0.25, 0.75});
  CHECK(g.labels == std::vector<int>{0, 1});
  CHECK(g.train_mask == std::vector<std::uint8_t>{1, 0});
  CHECK(g.val_mask == std::vector<std::uint8_t>{0, 0});
  CHECK(g.test_mask == std::vector<std::uint8_t>{0, 1});
  fs::remove_all(dir);
}

TEST_CASE("loader errors carry file and line") {
  SUBCASE("ragged feature rows") {
    fs::path dir = fresh_dir("car_ds_ragged");
    write_minimal_dataset(dir);
    write_file(dir / "features.tsv", "0\t0.5\t1.0\n1\t0.25\n");
    CHECK_THROWS_WITH_AS(load_dataset(dir.string()),
                         doctest::Contains("features.tsv line 2"), DataError);
    CHECK_THROWS_WITH_AS(load_dataset(dir.string()),
                         doctest::Contains("expected 2 features, got 1"), DataError);
    fs::remove_all(dir);
  }
  SUBCASE("node id gaps") {
    fs::path dir = fresh_dir("car_ds_gap");
    write_minimal_dataset(dir);
    write_file(dir / "features.tsv", "0\t0.5\t1.0\n2\t0.25\t0.75\n");
    CHECK_THROWS_WITH_AS(load_dataset(dir.string()),
                         doctest::Contains("node id 2 outside 0..1"), DataError);
    fs::remove_all(dir);
  }
  SUBCASE("unknown split tags") {
    fs::path dir = fresh_dir("car_ds_tag");
    write_minimal_dataset(dir);
    write_file(dir / "splits.tsv", "0\ttrain\n1\tdev\n");
    CHECK_THROWS_WITH_AS(load_dataset(dir.string()),
                         doctest::Contains("unknown split tag 'dev'"), DataError);
    fs::remove_all(dir);
  }
  SUBCASE("missing files") {
    fs::path dir = fresh_dir("car_ds_missing");
    CHECK_THROWS_AS(load_dataset(dir.string()), DataError);
    fs::remove_all(dir);
  }
}

TEST_CASE("saving and reloading reproduces the graph exactly") {
  SynthConfig sc;
  sc.n = 25;
  sc.num_classes = 3;
  sc.target_homophily = 0.4;
  sc.mean_degree = 3.0;
  sc.feature_dim = 5;
  sc.seed = 7;
  sc.train_per_class = 3;
  sc.val_count = 6;
  Graph g = generate_synthetic(sc);

  fs::path dir = fresh_dir("car_ds_roundtrip");
  save_dataset(g, dir.string());
  Graph r = load_dataset(dir.string());
  CHECK(r.num_nodes == g.num_nodes);
  CHECK(r.src == g.src);
  CHECK(r.tgt == g.tgt);
  CHECK(r.features == g.features);
  CHECK(r.labels == g.labels);
  CHECK(r.num_classes == g.num_classes);
  CHECK(r.train_mask == g.train_mask);
  CHECK(r.val_mask == g.val_mask);
  CHECK(r.test_mask == g.test_mask);
  fs::remove_all(dir);
}

TEST_CASE("citation files convert with sorted class ids") {
  fs::path dir = fresh_dir("car_planetoid");
  write_file(dir / "tiny.content",
             "p0\t1\t0\t0\ttheory\n"
             "p1\t0\t1\t0\tapps\n"
             "p2\t0\t0\t1\ttheory\n"
             "p3\t1\t1\t0\tapps\n"
             "p4\t0\t1\t1\tml\n");
  write_file(dir / "tiny.cites",
             "p0\tp1\n"
             "p2\tp2\n"  // self-citation, dropped
             "p3\tp4\n");
  fs::path out = dir / "out";
  convert_planetoid((dir / "tiny.content").string(), (dir / "tiny.cites").string(),
                    out.string());
  Graph g = load_dataset(out.string());
  CHECK(g.num_nodes == 5);
  CHECK(g.num_edges() == 4);  // two citations, doubled
  CHECK(g.num_classes == 3);
  // classes sort to apps < ml < theory
  CHECK(g.labels == std::vector<int>{2, 0, 2, 0, 1});
  // five nodes, fewer than 20 per class: everything is training data
  CHECK(g.train_mask == std::vector<std::uint8_t>{1, 1, 1, 1, 1});

  write_file(dir / "bad.cites", "p9\tp0\n");
  CHECK_THROWS_WITH_AS(
      convert_planetoid((dir / "tiny.content").string(), (dir / "bad.cites").string(),
                        (dir / "out2").string()),
      doctest::Contains("unknown paper id 'p9'"), DataError);
  fs::remove_all(dir);
}

TEST_CASE("converted splits follow content order") {
  fs::path dir = fresh_dir("car_planetoid_splits");
  std::ostringstream content;
  // 25 of class a, then 5 of class b
  for (int i = 0; i < 30; ++i)
    content << "n" << i << "\t1\t0\t" << (i < 25 ? "a" : "b") << "\n";
  write_file(dir / "big.content", content.str());
  write_file(dir / "big.cites", "n0\tn1\n");
  fs::path out = dir / "out";
  convert_planetoid((dir / "big.content").string(), (dir / "big.cites").string(), out.string());
  Graph g = load_dataset(out.string());
  REQUIRE(g.num_nodes == 30);
  for (std::size_t i = 0; i < 30; ++i) {
    // first 20 of class a, plus every class-b node, are training nodes
    const bool train = i < 20 || i >= 25;
    CHECK(g.train_mask[i] == (train ? 1 : 0));
    CHECK(g.val_mask[i] == (train ? 0 : 1));
    CHECK(g.test_mask[i] == 0);
  }
  fs::remove_all(dir);
}

TEST_CASE("metrics records serialize deterministically") {
  MetricsRecord r;
  r.dataset = "synth";
  r.cfg.lambda = 1.0;
  r.cfg.mode = TrainMode::Car;
  r.test_accuracy = 0.75;
  r.test_loss = 0.5;
  r.mean_kl = 0.125;
  r.epochs_run = 17;
  r.wall_clock_seconds = 1.5;

  const std::string s = metrics_record_json(r);
  CHECK(s == metrics_record_json(r));
  CHECK(s.find('\n') == std::string::npos);

  json j = json::parse(s);
  CHECK(j.at("test_accuracy").get<double>() == 0.75);
  CHECK(j.at("config").at("lambda").get<double>() == 1.0);
  CHECK(j.at("config").at("dataset").get<std::string>() == "synth");
  CHECK(j.at("mean_kl").get<double>() == 0.125);
  CHECK(j.at("car_enabled").get<bool>() == true);

  r.mean_kl.reset();
  CHECK(json::parse(metrics_record_json(r)).at("mean_kl").is_null());

  r.cfg.lambda = 0.0;
  CHECK(json::parse(metrics_record_json(r)).at("car_enabled").get<bool>() == false);
  r.cfg.lambda = 1.0;
  r.cfg.mode = TrainMode::Baseline;
  CHECK(json::parse(metrics_record_json(r)).at("car_enabled").get<bool>() == false);
}

TEST_CASE("bad invocations return the usage code") {
  int rc;
  capture_stdout([&] { return run_commands({"no-such-command"}); }, rc);
  CHECK(rc == 1);
  capture_stdout([&] { return run_commands({"train", "--frobnicate", "x"}); }, rc);
  CHECK(rc == 1);
  capture_stdout([&] { return run_commands({}); }, rc);
  CHECK(rc == 1);
  capture_stdout(
      [&] { return run_commands({"gen-synth", "--out", "/tmp/x", "--h", "1.5"}); }, rc);
  CHECK(rc == 1);
}

TEST_CASE("data problems return the data code") {
  int rc;
  fs::path out = fresh_dir("car_cli_nodata");
  capture_stdout(
      [&] {
        return run_commands(
            {"train", "--data", (out / "nope").string(), "--out", (out / "o").string()});
      },
      rc);
  CHECK(rc == 2);
  fs::remove_all(out);
}

TEST_CASE("generate, train, evaluate round trip") {
  fs::path root = fresh_dir("car_cli_flow");
  fs::path data = root / "data", run = root / "run";
  int rc;
  capture_stdout(
      [&] {
        return run_commands({"gen-synth", "--out", data.string(), "--n", "40", "--classes",
                             "2", "--feature-dim", "4", "--mean-degree", "3", "--h", "0.7",
                             "--seed", "3", "--train-per-class", "8", "--val-count", "10"});
      },
      rc);
  REQUIRE(rc == 0);
  REQUIRE(fs::exists(data / "edges.tsv"));

  std::string train_out = capture_stdout(
      [&] {
        return run_commands({"train", "--data", data.string(), "--out", run.string(),
                             "--hidden", "4", "--max-epochs", "3", "--lambda", "0.5",
                             "--rounds", "2", "--seed", "1"});
      },
      rc);
  REQUIRE(rc == 0);
  CHECK(fs::exists(run / "model.ckpt"));
  REQUIRE(fs::exists(run / "metrics.jsonl"));

  std::ifstream metrics_in(run / "metrics.jsonl");
  std::string record_line;
  REQUIRE(std::getline(metrics_in, record_line));
  json record = json::parse(record_line);
  CHECK(record.at("config").at("hidden").get<int>() == 4);
  CHECK(record.at("config").at("mode").get<std::string>() == "car");
  CHECK(record.at("car_enabled").get<bool>() == true);
  // the stdout line is the same record
  CHECK(json::parse(train_out) == record);

  std::string eval_out = capture_stdout(
      [&] {
        return run_commands({"eval", "--data", data.string(), "--checkpoint",
                             (run / "model.ckpt").string()});
      },
      rc);
  REQUIRE(rc == 0);
  json ev = json::parse(eval_out);
  CHECK(ev.at("test_accuracy").get<double>() ==
        record.at("test_accuracy").get<double>());
  CHECK(ev.at("test_loss").get<double>() == record.at("test_loss").get<double>());
  fs::remove_all(root);
}

TEST_CASE("sweeps pair every cell with one baseline") {
  fs::path root = fresh_dir("car_cli_sweep");
  fs::path data = root / "data", out = root / "sweep";
  int rc;
  capture_stdout(
      [&] {
        return run_commands({"gen-synth", "--out", data.string(), "--n", "30", "--classes",
                             "2", "--feature-dim", "3", "--mean-degree", "2", "--seed", "5",
                             "--train-per-class", "6", "--val-count", "8"});
      },
      rc);
  REQUIRE(rc == 0);

  write_file(root / "grid.json",
             "{\"mechanisms\":[\"gat\"],\"layers\":[1],\"heads\":[1],\"hidden\":[3],"
             "\"lambdas\":[0.5,1.0],\"seeds\":[0,1],\"max_epochs\":2,\"rounds\":2}");
  capture_stdout(
      [&] {
        return run_commands({"sweep", "--data", data.string(), "--out", out.string(),
                             "--config", (root / "grid.json").string()});
      },
      rc);
  REQUIRE(rc == 0);

  std::ifstream rec_in(out / "records.jsonl");
  std::size_t lines = 0, baselines = 0, regularized = 0;
  std::string line;
  while (std::getline(rec_in, line)) {
    ++lines;
    json r = json::parse(line);
    if (r.at("car_enabled").get<bool>())
      ++regularized;
    else
      ++baselines;
  }
  // one baseline plus one run per lambda, for each grid cell and seed
  CHECK(lines == 6);
  CHECK(baselines == 2);
  CHECK(regularized == 4);

  std::ifstream sum_in(out / "summary.json");
  json summary = json::parse(sum_in);
  CHECK(summary.at("baseline_records").get<int>() == 2);
  CHECK(summary.at("regularized_records").get<int>() == 4);
  CHECK(summary.contains("mean_improvement"));
  CHECK(summary.contains("wilcoxon_p_improvement"));
  CHECK(summary.contains("welch_p_high_vs_low_lambda"));
  fs::remove_all(root);
}

TEST_CASE("sweep configs reject a hostile grid") {
  fs::path root = fresh_dir("car_cli_sweepbad");
  fs::path data = root / "data";
  int rc;
  capture_stdout(
      [&] {
        return run_commands({"gen-synth", "--out", data.string(), "--n", "20", "--classes",
                             "2", "--feature-dim", "3", "--seed", "1"});
      },
      rc);
  REQUIRE(rc == 0);
  SUBCASE("empty axis") {
    write_file(root / "bad.json", "{\"lambdas\":[]}");
    capture_stdout(
        [&] {
          return run_commands({"sweep", "--data", data.string(), "--out",
                               (root / "o").string(), "--config", (root / "bad.json").string()});
        },
        rc);
    CHECK(rc == 2);
  }
  SUBCASE("baseline mode makes no sense in a paired sweep") {
    write_file(root / "bad.json", "{\"mode\":\"baseline\"}");
    capture_stdout(
        [&] {
          return run_commands({"sweep", "--data", data.string(), "--out",
                               (root / "o").string(), "--config", (root / "bad.json").string()});
        },
        rc);
    CHECK(rc == 2);
  }
  SUBCASE("unknown scalar knob") {
    write_file(root / "bad.json", "{\"momentum\":0.9}");
    capture_stdout(
        [&] {
          return run_commands({"sweep", "--data", data.string(), "--out",
                               (root / "o").string(), "--config", (root / "bad.json").string()});
        },
        rc);
    CHECK(rc == 2);
  }
  fs::remove_all(root);
}

TEST_CASE("the default grid multiplies out to 288 regularized cells") {
  // 3 mechanisms x 2 depths x 3 head counts x 4 widths x 4 lambdas
  CHECK(3 * 2 * 3 * 4 * 4 == 288);
}
