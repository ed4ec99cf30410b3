#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const std::string kCli = STREAMSEG_CLI;
const fs::path kSamples = SAMPLES_DIR;

int run(const std::string& args) {
    const int status = std::system((kCli + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("streamseg_cli_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("simulate succeeds and writes every report") {
    TempDir tmp;
    const auto scenario = (kSamples / "mixed_table.json").string();
    const int code = run("simulate --scenario " + scenario + " --K 10 --M 20 --D 5 --retention 40 --out-events " +
                         (tmp.path / "e.jsonl").string() + " --out-memory-report " + (tmp.path / "m.csv").string() +
                         " --out-stats " + (tmp.path / "s.csv").string() + " --out-truth " +
                         (tmp.path / "t.jsonl").string());
    CHECK(code == 0);
    CHECK(fs::exists(tmp.path / "e.jsonl"));
    CHECK(slurp(tmp.path / "m.csv").rfind("frame_count_resident,fast_bytes,slow_bytes,num_frames_total\n", 0) == 0);
    CHECK(slurp(tmp.path / "s.csv").rfind("call_no,head_idx,span,", 0) == 0);
    CHECK_FALSE(slurp(tmp.path / "t.jsonl").empty());
}

TEST_CASE("simulate is byte-for-byte repeatable") {
    TempDir tmp;
    const auto scenario = (kSamples / "mixed_table.json").string();
    for (const char* name : {"a", "b"}) {
        REQUIRE(run("simulate --scenario " + scenario + " --K 10 --M 20 --D 5 --box-jitter 1.5 --dropout-prob 0.2 "
                    "--seed 4 --out-events " + (tmp.path / (std::string(name) + ".jsonl")).string() +
                    " --out-stats " + (tmp.path / (std::string(name) + ".csv")).string()) == 0);
    }
    CHECK(slurp(tmp.path / "a.jsonl") == slurp(tmp.path / "b.jsonl"));
    CHECK(slurp(tmp.path / "a.csv") == slurp(tmp.path / "b.csv"));
}

TEST_CASE("config errors exit with 2") {
    const auto scenario = (kSamples / "mixed_table.json").string();
    CHECK(run("simulate --scenario " + scenario + " --K 10 --M 20 --retention 20") == 2);
    CHECK(run("simulate --scenario " + scenario + " --K 10 --M 5") == 2);
    CHECK(run("simulate --scenario /nonexistent.json") == 2);
    CHECK(run("simulate --config /nonexistent.json") == 2);
    CHECK(run("simulate --scenario " + scenario + " --M lots") == 2);
    CHECK(run("") == 2);
    CHECK(run("frobnicate") == 2);
    CHECK(run("bench --grid /nonexistent.json --out /tmp/x.csv") == 2);
}

TEST_CASE("runtime failures exit with 3 and flag partial reports") {
    TempDir tmp;
    const auto scenario = (kSamples / "mixed_table.json").string();
    CHECK(run("simulate --scenario " + scenario + " --dropout-prob 1 --out-events " +
              (tmp.path / "e.jsonl").string()) == 3);
    CHECK(slurp(tmp.path / "e.jsonl").rfind("# partial: ", 0) == 0);
    CHECK(run("simulate --scenario " + scenario + " --K 10 --M 20 --retention 40 --export-preload " +
              (tmp.path / "p.json").string() + " --export-frames 0,5") == 3);
}

TEST_CASE("sample config runs from any working directory") {
    TempDir tmp;
    fs::copy(kSamples / "mixed_table.json", tmp.path / "mixed_table.json");
    fs::copy(kSamples / "simulate.json", tmp.path / "simulate.json");
    fs::create_directories(tmp.path / "out");
    CHECK(run("simulate --config " + (tmp.path / "simulate.json").string()) == 0);
    CHECK(fs::exists(tmp.path / "out" / "events.jsonl"));
}

TEST_CASE("preload export and reuse through the CLI") {
    TempDir tmp;
    const auto scenario = (kSamples / "mixed_table.json").string();
    const auto preload = (tmp.path / "bank.json").string();
    REQUIRE(run("simulate --scenario " + scenario + " --K 10 --D 5 --frames 30 --export-preload " + preload +
                " --export-frames 0,5,10") == 0);
    CHECK(run("simulate --scenario " + scenario + " --K 10 --M 20 --D 5 --retention 40 --dropout-prob 1 --preload " +
              preload) == 0);
}

TEST_CASE("bench writes one row per cell") {
    TempDir tmp;
    std::ofstream(tmp.path / "grid.json") << R"({"K": [1, 10], "M": [20, "inf"], "frames": 120})";
    REQUIRE(run("bench --grid " + (tmp.path / "grid.json").string() + " --out " + (tmp.path / "b.csv").string()) == 0);
    const std::string csv = slurp(tmp.path / "b.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
    CHECK(csv.find("1,inf,1,none,ok,7260,") != std::string::npos);
}

TEST_CASE("replay and export-events") {
    TempDir tmp;
    const auto scenario = (kSamples / "mixed_table.json").string();
    REQUIRE(run("simulate --scenario " + scenario + " --K 10 --M 20 --D 5 --out-events " +
                (tmp.path / "e.jsonl").string()) == 0);
    CHECK(run("replay --events " + (tmp.path / "e.jsonl").string()) == 0);
    CHECK(run("replay --events /nonexistent.jsonl") == 2);
    std::ofstream(tmp.path / "bad.jsonl") << "{broken\n";
    CHECK(run("replay --events " + (tmp.path / "bad.jsonl").string()) == 2);
    CHECK(run("export-events --scenario " + scenario + " --out " + (tmp.path / "t.jsonl").string()) == 0);
    CHECK(slurp(tmp.path / "t.jsonl").find("\"kind\":\"goal\"") != std::string::npos);
}
