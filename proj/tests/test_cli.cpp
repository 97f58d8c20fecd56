// Drives the installed binary end to end through popen; GACL_CLI_PATH is
// injected by the build so the tests always hit the freshly built tool.

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"

namespace {

namespace fs = std::filesystem;

struct CmdResult {
  int exit_code = -1;
  std::string out;  // stdout, plus stderr when the command redirects it
};

CmdResult run_cli(const std::string& args) {
  const std::string cmd = std::string("GACL_LOG=error ") + GACL_CLI_PATH + " " + args;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  CmdResult r;
  char buf[4096];
  size_t n;
  while ((n = fread(buf, 1, sizeof(buf), pipe)) > 0) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

struct TempDir {
  fs::path path;
  TempDir() {
    char tmpl[] = "/tmp/gacl_cli_XXXXXX";
    REQUIRE(mkdtemp(tmpl) != nullptr);
    path = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  REQUIRE(f.good());
  f << text;
}

std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

int count_lines(const std::string& text) {
  int n = 0;
  for (char c : text) n += c == '\n';
  return n;
}

// dense enough that every snapshot keeps both graph sides connected after
// the split carves out a test set
std::string synthetic_raw(int users = 5, int services = 6, int slices = 3) {
  std::string out = "# synthetic invocation log\n";
  char line[64];
  for (int u = 0; u < users; ++u)
    for (int s = 0; s < services; ++s)
      for (int t = 0; t < slices; ++t) {
        const double v =
            0.4 + 0.1 * u + 0.15 * s + 0.05 * t + 0.03 * static_cast<double>((u * 5 + s + t) % 4);
        std::snprintf(line, sizeof(line), "%d %d %d %.4f\n", u, s, t, v);
        out += line;
      }
  return out;
}

std::string tiny_config() {
  return R"({"embed_dim": 4, "graph_layers": 1, "window": 1, "tf_layers": 1, "heads": 2,
             "ffn_dim": 8, "lr": 0.01, "reg_lambda": 0.001, "epochs": 2, "batch_size": 64,
             "patience": 0, "workers": 1, "density": 0.8,
             "seed_split": 1, "seed_init": 2, "seed_sample": 3})";
}

// one ingest + train shared by the read-only checkpoint tests
struct TrainedFixture {
  TempDir dir;
  std::string data, cfg, ck;
  TrainedFixture() {
    write_text(dir.file("raw.txt"), synthetic_raw());
    write_text(dir.file("cfg.json"), tiny_config());
    data = dir.file("data.txt");
    cfg = dir.file("cfg.json");
    ck = dir.file("ck.bin");
    REQUIRE(run_cli("ingest " + dir.file("raw.txt") + " -o " + data).exit_code == 0);
    REQUIRE(run_cli("train --config " + cfg + " --data " + data + " -o " + ck).exit_code == 0);
  }
};

}  // namespace

TEST_CASE("ingest validates and canonicalizes") {
  TempDir dir;

  SUBCASE("a small valid file round-trips") {
    write_text(dir.file("raw.txt"), "0 0 0 1.5\n1 0 0 0.8\n0 1 1 2.25\n");
    CmdResult r = run_cli("ingest " + dir.file("raw.txt") + " -o " + dir.file("data.txt"));
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("3 records") != std::string::npos);
    CHECK(fs::exists(dir.file("data.txt")));

    auto manifest = nlohmann::json::parse(read_text(dir.file("data.txt.manifest.json")));
    CHECK(manifest.at("command") == "ingest");
    CHECK(manifest.at("version") == "0.1.0");
    CHECK(manifest.at("inputs").size() == 1);
    CHECK(manifest.at("outputs")[0] == dir.file("data.txt"));
    CHECK(manifest.contains("started"));
    CHECK(manifest.contains("finished"));
  }

  SUBCASE("a duplicate triple is rejected by name") {
    write_text(dir.file("dup.txt"), "0 3 1 1.0\n0 3 1 2.0\n");
    CmdResult r = run_cli("ingest " + dir.file("dup.txt") + " -o " + dir.file("x.txt") + " 2>&1");
    CHECK(r.exit_code == 3);
    CHECK(r.out.find("user=0") != std::string::npos);
    CHECK(r.out.find("service=3") != std::string::npos);
    CHECK(r.out.find("slice=1") != std::string::npos);
  }

  SUBCASE("a missing input exits 2") {
    CHECK(run_cli("ingest " + dir.file("nope.txt") + " -o " + dir.file("x.txt")).exit_code == 2);
  }

  SUBCASE("unreadable text exits 2, out-of-bounds indices exit 3") {
    write_text(dir.file("bad.txt"), "0 0 zero 1.0\n");
    CHECK(run_cli("ingest " + dir.file("bad.txt") + " -o " + dir.file("x.txt")).exit_code == 2);
    write_text(dir.file("wide.txt"), "0 0 0 1.0\n7 0 0 1.0\n");
    CHECK(run_cli("ingest " + dir.file("wide.txt") + " --users 3 -o " + dir.file("x.txt"))
              .exit_code == 3);
  }
}

TEST_CASE("train writes a checkpoint and its sidecars") {
  TrainedFixture fx;
  CHECK(fs::exists(fx.ck));
  CHECK(fs::exists(fx.ck + ".meta.json"));
  CHECK(fs::exists(fx.ck + ".trainlog.jsonl"));
  CHECK(fs::exists(fx.ck + ".manifest.json"));

  auto meta = nlohmann::json::parse(read_text(fx.ck + ".meta.json"));
  CHECK(meta.at("epochs") == 2);
  CHECK(meta.at("config").at("embed_dim") == 4);
  CHECK(meta.at("config").at("n_users") == 5);  // resolved from the data

  // one json line per epoch, no wall-clock anywhere
  const std::string log = read_text(fx.ck + ".trainlog.jsonl");
  CHECK(count_lines(log) == 2);
  CHECK(log.find("wall") == std::string::npos);

  auto manifest = nlohmann::json::parse(read_text(fx.ck + ".manifest.json"));
  CHECK(manifest.at("command") == "train");
  CHECK(manifest.at("config_hash").is_string());
  CHECK(manifest.at("inputs").size() == 2);  // data + config
}

TEST_CASE("training reruns are byte-identical") {
  TrainedFixture fx;
  const std::string ck2 = fx.dir.file("ck2.bin");
  REQUIRE(run_cli("train --config " + fx.cfg + " --data " + fx.data + " -o " + ck2).exit_code ==
          0);
  CHECK(read_text(fx.ck) == read_text(ck2));
  CHECK(read_text(fx.ck + ".trainlog.jsonl") == read_text(ck2 + ".trainlog.jsonl"));
  CHECK(read_text(fx.ck + ".meta.json") == read_text(ck2 + ".meta.json"));
}

TEST_CASE("flag overrides beat the config file") {
  TempDir dir;
  write_text(dir.file("raw.txt"), synthetic_raw());
  write_text(dir.file("cfg.json"), tiny_config());
  REQUIRE(run_cli("ingest " + dir.file("raw.txt") + " -o " + dir.file("data.txt")).exit_code == 0);
  REQUIRE(run_cli("train --config " + dir.file("cfg.json") + " --data " + dir.file("data.txt") +
                  " --density 0.7 --seed-init 9 --ablation tw -o " + dir.file("ck.bin"))
              .exit_code == 0);
  auto meta = nlohmann::json::parse(read_text(dir.file("ck.bin.meta.json")));
  CHECK(meta.at("config").at("density") == 0.7);
  CHECK(meta.at("config").at("seed_init") == 9);
  CHECK(meta.at("config").at("ablation") == "semantic_only");
}

TEST_CASE("config file problems exit 3, divergence exits 4") {
  TempDir dir;
  write_text(dir.file("raw.txt"), synthetic_raw());
  REQUIRE(run_cli("ingest " + dir.file("raw.txt") + " -o " + dir.file("data.txt")).exit_code == 0);

  SUBCASE("unknown key is named") {
    write_text(dir.file("typo.json"), R"({"embde_dim": 8})");
    CmdResult r = run_cli("train --config " + dir.file("typo.json") + " --data " +
                          dir.file("data.txt") + " -o " + dir.file("ck.bin") + " 2>&1");
    CHECK(r.exit_code == 3);
    CHECK(r.out.find("embde_dim") != std::string::npos);
  }

  SUBCASE("absurd learning rate blows up as a numeric failure") {
    // one optimizer step puts every weight near 1e200, so the next matmul
    // overflows no matter how much normalization sits in between
    std::string cfg = tiny_config();
    cfg.replace(cfg.find("0.01"), 4, "1e200");
    write_text(dir.file("absurd.json"), cfg);
    CHECK(run_cli("train --config " + dir.file("absurd.json") + " --data " +
                  dir.file("data.txt") + " -o " + dir.file("ck.bin"))
              .exit_code == 4);
  }
}

TEST_CASE("evaluate reports metrics in both formats") {
  TrainedFixture fx;

  CmdResult r = run_cli("evaluate --checkpoint " + fx.ck + " --data " + fx.data + " -o " +
                        fx.dir.file("report.json"));
  REQUIRE(r.exit_code == 0);
  auto report = nlohmann::json::parse(read_text(fx.dir.file("report.json")));
  CHECK(report.at("dataset") == "data");
  CHECK(report.at("ablation") == "full");
  CHECK(report.at("mae").get<double>() >= 0.0);
  CHECK(report.at("mae").get<double>() <= report.at("rmse").get<double>() + 1e-15);
  CHECK(report.at("n_eval").get<int>() > 0);
  CHECK(nlohmann::json::parse(r.out) == report);  // stdout carries the same payload

  CmdResult csv = run_cli("evaluate --checkpoint " + fx.ck + " --data " + fx.data +
                          " --output-format csv");
  REQUIRE(csv.exit_code == 0);
  CHECK(csv.out.rfind("dataset,density,ablation,mae,nmae,rmse,n_eval\n", 0) == 0);
  CHECK(count_lines(csv.out) == 2);
}

TEST_CASE("evaluate is deterministic and worker-count independent") {
  TrainedFixture fx;
  CmdResult a = run_cli("evaluate --checkpoint " + fx.ck + " --data " + fx.data + " --workers 1");
  CmdResult b = run_cli("evaluate --checkpoint " + fx.ck + " --data " + fx.data + " --workers 3");
  REQUIRE(a.exit_code == 0);
  REQUIRE(b.exit_code == 0);
  auto ja = nlohmann::json::parse(a.out);
  auto jb = nlohmann::json::parse(b.out);
  CHECK(ja.at("mae") == jb.at("mae"));
  CHECK(ja.at("nmae") == jb.at("nmae"));
  CHECK(ja.at("rmse") == jb.at("rmse"));
  CHECK(ja.at("n_eval") == jb.at("n_eval"));
}

TEST_CASE("a mismatched config needs --force") {
  TrainedFixture fx;
  std::string cfg = tiny_config();
  cfg.replace(cfg.find("\"density\": 0.8"), 14, "\"density\": 0.7");
  write_text(fx.dir.file("other.json"), cfg);

  const std::string args =
      "evaluate --checkpoint " + fx.ck + " --data " + fx.data + " --config " +
      fx.dir.file("other.json");
  CHECK(run_cli(args).exit_code == 3);
  CHECK(run_cli(args + " --force").exit_code == 0);

  // worker count and epoch horizon are not part of the identity
  CHECK(run_cli("evaluate --checkpoint " + fx.ck + " --data " + fx.data + " --workers 2")
            .exit_code == 0);
}

TEST_CASE("resume continues the epoch count") {
  TrainedFixture fx;
  std::string cfg = tiny_config();
  cfg.replace(cfg.find("\"epochs\": 2"), 11, "\"epochs\": 4");
  write_text(fx.dir.file("longer.json"), cfg);

  const std::string ck2 = fx.dir.file("ck2.bin");
  CmdResult r = run_cli("train --config " + fx.dir.file("longer.json") + " --data " + fx.data +
                        " --resume " + fx.ck + " -o " + ck2);
  REQUIRE(r.exit_code == 0);
  const std::string log = read_text(ck2 + ".trainlog.jsonl");
  CHECK(count_lines(log) == 2);  // epochs 2 and 3 only
  CHECK(log.find("\"epoch\":2") != std::string::npos);
  CHECK(log.find("\"epoch\":3") != std::string::npos);
  auto meta = nlohmann::json::parse(read_text(ck2 + ".meta.json"));
  CHECK(meta.at("epochs") == 4);

  // already at the horizon: nothing runs, outputs still written
  CmdResult done = run_cli("train --config " + fx.cfg + " --data " + fx.data + " --resume " +
                           fx.ck + " -o " + fx.dir.file("ck3.bin"));
  CHECK(done.exit_code == 0);
  CHECK(done.out.find("nothing to do") != std::string::npos);
  CHECK(read_text(fx.dir.file("ck3.bin")) == read_text(fx.ck));

  // resuming under a different training recipe is refused without --force
  std::string hot = tiny_config();
  hot.replace(hot.find("0.01"), 4, "0.05");
  write_text(fx.dir.file("hot.json"), hot);
  CHECK(run_cli("train --config " + fx.dir.file("hot.json") + " --data " + fx.data +
                " --resume " + fx.ck + " -o " + fx.dir.file("ck4.bin"))
            .exit_code == 3);
  CHECK(run_cli("train --config " + fx.dir.file("hot.json") + " --data " + fx.data +
                " --resume " + fx.ck + " --force -o " + fx.dir.file("ck4.bin"))
            .exit_code == 0);
}

TEST_CASE("predict prints one value and validates its query") {
  TrainedFixture fx;
  CmdResult r = run_cli("predict --checkpoint " + fx.ck + " --data " + fx.data +
                        " --user 1 --service 2 --slice 2");
  REQUIRE(r.exit_code == 0);
  const double value = std::stod(r.out);
  CHECK(value >= 0.0);

  // reruns agree to the digit
  CmdResult again = run_cli("predict --checkpoint " + fx.ck + " --data " + fx.data +
                            " --user 1 --service 2 --slice 2");
  CHECK(again.out == r.out);

  CHECK(run_cli("predict --checkpoint " + fx.ck + " --data " + fx.data +
                " --user 1 --service 2 --slice 9")
            .exit_code == 3);
  CHECK(run_cli("predict --checkpoint " + fx.ck + " --data " + fx.data +
                " --user 50 --service 2 --slice 2")
            .exit_code == 3);
}

TEST_CASE("ablate prints the four-variant table") {
  TempDir dir;
  write_text(dir.file("raw.txt"), synthetic_raw());
  write_text(dir.file("cfg.json"), tiny_config());
  REQUIRE(run_cli("ingest " + dir.file("raw.txt") + " -o " + dir.file("data.txt")).exit_code == 0);

  CmdResult r = run_cli("ablate --config " + dir.file("cfg.json") + " --data " +
                        dir.file("data.txt") + " -o " + dir.file("ablation.csv") +
                        " --output-format csv 2>/dev/null");
  REQUIRE(r.exit_code == 0);

  // stdout table: header + exactly four variant rows + the baseline row
  std::istringstream lines(r.out);
  std::string line;
  std::vector<std::string> labels;
  while (std::getline(lines, line)) {
    labels.push_back(line.substr(0, line.find(' ')));
  }
  REQUIRE(labels.size() == 6);
  CHECK(labels[0] == "variant");
  CHECK(labels[1] == "full");
  CHECK(labels[2] == "gacl-t");
  CHECK(labels[3] == "gacl-w");
  CHECK(labels[4] == "gacl-tw");
  CHECK(labels[5] == "global_mean");

  // csv artifact: header + four variants + baseline
  const std::string csv = read_text(dir.file("ablation.csv"));
  CHECK(count_lines(csv) == 6);
  CHECK(csv.find(",no_target,") != std::string::npos);
  CHECK(csv.find(",semantic_only,") != std::string::npos);
  CHECK(csv.find(",global_mean,") != std::string::npos);
}

TEST_CASE("usage problems map onto the validation exit code") {
  CHECK(run_cli("2>/dev/null").exit_code == 3);               // no subcommand
  CHECK(run_cli("transmogrify 2>/dev/null").exit_code == 3);  // unknown subcommand
  CHECK(run_cli("train --data x 2>/dev/null").exit_code == 3);  // missing -o
  TempDir dir;
  write_text(dir.file("raw.txt"), "0 0 0 1.0\n");
  CHECK(run_cli("ingest " + dir.file("raw.txt") + " -o " + dir.file("d.txt") +
                " --manifest " + dir.file("m.json"))
            .exit_code == 0);
  CHECK(run_cli("train --data " + dir.file("d.txt") + " -o " + dir.file("ck.bin") +
                " --ablation bogus 2>/dev/null")
            .exit_code == 3);
  CHECK(run_cli("--version").exit_code == 0);
  CHECK(run_cli("--help").exit_code == 0);
}
