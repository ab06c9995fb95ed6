// Drives the installed CLI binary the way a shell user would.
#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace {

namespace fs = std::filesystem;

const char* cli() { return APCTL_PATH; }

struct Run {
  int exit_code;
  std::string out;
  std::string err;
};

Run run(const std::string& args) {
  fs::path out = fs::temp_directory_path() / "ap_cli_stdout.txt";
  fs::path err = fs::temp_directory_path() / "ap_cli_stderr.txt";
  std::string cmd = std::string(cli()) + " " + args + " >" + out.string() + " 2>" + err.string();
  int rc = std::system(cmd.c_str());
  auto slurp = [](const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(is), {});
  };
  int code = rc == -1 ? -1 : WEXITSTATUS(rc);
  return {code, slurp(out), slurp(err)};
}

std::string slurp_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

struct Workspace {
  fs::path dir;
  Workspace() : dir(fs::temp_directory_path() / "ap_cli_ws") {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Workspace() { fs::remove_all(dir); }
  std::string operator/(const std::string& f) const { return (dir / f).string(); }
};

}  // namespace

TEST_CASE("--help exits zero with usage text") {
  Run r = run("--help");
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("Usage") != std::string::npos);
  CHECK(r.out.find("gradcheck") != std::string::npos);
}

TEST_CASE("unknown flags are a usage error with exit code 2") {
  Run r = run("synth --does-not-exist");
  CHECK(r.exit_code == 2);
}

TEST_CASE("missing subcommand is a usage error") {
  Run r = run("");
  CHECK(r.exit_code == 2);
}

TEST_CASE("runtime failures produce one machine-parsable error line and exit 1") {
  Run r = run("ingest --tracks /nonexistent.csv --meta /nonexistent.json --out /tmp/x.bin");
  CHECK(r.exit_code == 1);
  CHECK(r.err.rfind("error: io: ", 0) == 0);
  CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
}

TEST_CASE("gradcheck subcommand reports and exits zero when all checks pass") {
  Run r = run("gradcheck --seed 7");
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("ffw_loss_end_to_end") != std::string::npos);
  CHECK(r.out.find("max relative error") != std::string::npos);
}

TEST_CASE("synth, ingest, train, eval, predict, plot round trip with deterministic retrain") {
  Workspace ws;
  CHECK(run("synth --scenario roundabout_arc --count 3 --recordings 3 --seed 5 --out " +
            (ws / "data"))
            .exit_code == 0);
  Run ing = run("ingest --tracks " + (ws / "data/tracks.csv") + " --meta " +
                (ws / "data/meta.json") + " --map " + (ws / "data/map.json") + " --out " +
                (ws / "cache.bin"));
  CHECK(ing.exit_code == 0);
  CHECK(ing.out.find("snippets") != std::string::npos);

  {
    std::ofstream os(ws / "run.json");
    os << "{\"model\":{\"architecture\":\"ffw\",\"encoder\":\"mlp_on_feature_vector\","
          "\"feature_size\":12,\"hidden_size\":12,\"gru_layers\":1,\"modes\":2,"
          "\"mode_embed\":4,\"horizon\":10},"
          "\"schedule\":{\"epochs\":1,\"batch\":8,\"lr\":0.001}}";
  }
  std::string train_cmd = "train --config " + (ws / "run.json") + " --cache " +
                          (ws / "cache.bin") + " --seed 1 --out ";
  CHECK(run(train_cmd + (ws / "runA")).exit_code == 0);
  CHECK(run(train_cmd + (ws / "runB")).exit_code == 0);
  CHECK(slurp_file(ws / "runA/metrics.jsonl") == slurp_file(ws / "runB/metrics.jsonl"));

  CHECK(run("eval --checkpoint " + (ws / "runA/model.ckpt") + " --cache " + (ws / "cache.bin") +
            " --split val --out " + (ws / "report.json"))
            .exit_code == 0);
  CHECK(slurp_file(ws / "report.json").find("best_of_m") != std::string::npos);

  Run pr = run("predict --checkpoint " + (ws / "runA/model.ckpt") + " --cache " +
               (ws / "cache.bin") + " --index 0");
  CHECK(pr.exit_code == 0);
  CHECK(pr.out.find("\"modes\"") != std::string::npos);
  CHECK(pr.out.find("config_hash") != std::string::npos);

  CHECK(run("plot --checkpoint " + (ws / "runA/model.ckpt") + " --cache " + (ws / "cache.bin") +
            " --index 0 --out " + (ws / "scene.svg") + " --raster-prefix " + (ws / "ctx") +
            " --raster-variant chauffeurnet")
            .exit_code == 0);
  CHECK(fs::exists(ws / "scene.svg"));
  CHECK(fs::exists(ws / "ctx_ch0.png"));
}
