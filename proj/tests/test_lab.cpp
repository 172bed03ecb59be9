#include "levytree/lab.hpp"

#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace levytree::lab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
    fs::path p = fs::temp_directory_path() / ("levytree-lab-test-" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p)
{
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& body)
{
    std::ofstream f(p, std::ios::binary);
    f << body;
}

struct Shell {
    int code;
    std::string out;
};

Shell shell(const std::string& args, const std::string& env = "")
{
    const char* exe = std::getenv("LEVYTREE_LAB");
    REQUIRE_MESSAGE(exe, "LEVYTREE_LAB must point at the levytree-lab executable");
    std::string cmd = env + " '" + exe + "' " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe);
    std::string out;
    char buf[4096];
    while (std::size_t n = fread(buf, 1, sizeof buf, pipe)) out.append(buf, n);
    int status = pclose(pipe);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

const char* kTinyDensity = R"([experiment]
name = density
threads = 1

[mechanism]
kind = stable
gamma = 2

[seeds]
list = 3, 4

[walk]
length = 2048
p = 2048

[density]
centers_per_tree = 3
k_lo = 4
k_hi = 7
)";

}  // namespace

TEST_CASE("config parsing and validation")
{
    auto cfg = parse_config("[experiment]\nname = mech-report\n[mechanism]\nkind = stable\ngamma = 1.5\n");
    CHECK(cfg.experiment() == "mech-report");
    CHECK(cfg.real("mechanism.gamma") == 1.5);
    CHECK(cfg.integer("grid.points") == 60);
    CHECK_NOTHROW(validate_config(cfg));

    apply_overrides(cfg, {"grid.points=10", "mechanism.gamma=2"});
    CHECK(cfg.integer("grid.points") == 10);
    CHECK_THROWS_AS(apply_overrides(cfg, {"nonsense"}), ConfigError);
    CHECK_THROWS_AS(apply_overrides(cfg, {"grid.bogus=1"}), ConfigError);

    CHECK_THROWS_AS(parse_config("[experiment]\nname = x\nwhat = 1\n"), ConfigError);
    auto bad_type = parse_config("[experiment]\nname = mech-report\n[grid]\npoints = many\n");
    CHECK_THROWS_AS(validate_config(bad_type), ConfigError);
    auto unknown = parse_config("[experiment]\nname = no-such-thing\n");
    CHECK_THROWS_AS(validate_config(unknown), ConfigError);
    auto no_seeds = parse_config("[experiment]\nname = density\n");
    CHECK_THROWS_AS(validate_config(no_seeds), ConfigError);
    auto bad_gamma = parse_config("[experiment]\nname = mech-report\n[mechanism]\ngamma = 3\n");
    CHECK_THROWS_AS(validate_config(bad_gamma), ConfigError);

    auto seeded = parse_config("[experiment]\nname = density\n[seeds]\nlist = 5, 6,7\n");
    CHECK(seeded.seeds() == std::vector<std::uint64_t>{5, 6, 7});
    CHECK(experiments().size() == 8);
    CHECK(find_experiment("packing-ratio") != nullptr);
    CHECK(find_experiment("nope") == nullptr);
}

TEST_CASE("JSON emission")
{
    json doc = {{"b", 1.0 / 3.0}, {"a", json::array()}, {"c", {{"z", 1}, {"y", NAN}}}, {"d", 2.0}};
    std::string text = dump_json(doc);
    CHECK(text.find("\"a\"") < text.find("\"b\""));
    CHECK(text.find("\"y\": null") != std::string::npos);
    CHECK(text.find("0.33333333333333331") != std::string::npos);
    CHECK(text.find("\"d\": 2.0") != std::string::npos);
    auto back = json::parse(text);
    CHECK(back["b"].get<double>() == 1.0 / 3.0);
    CHECK(dump_json(json::object()) == "{}\n");

    LabConfig cfg = parse_config("[experiment]\nname = mech-report\n");
    auto s = emit_summary("mech-report", cfg, json());
    CHECK(s["results"].is_object());
    CHECK(s["results"].empty());
    CHECK(s.contains("version"));
    CHECK(s["config"]["experiment.name"] == "mech-report");
    CHECK_NOTHROW(json::parse(dump_json(s)));
}

TEST_CASE("hashes and CSV tables")
{
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CsvTable t({"x", "name"});
    t.row() << 0.1 << "a,b";
    t.row() << 2L << true;
    CHECK(t.str() == "x,name\n0.10000000000000001,\"a,b\"\n2,true\n");
    CHECK(t.str("# {}\n").rfind("# {}\nx,name\n", 0) == 0);
}

TEST_CASE("run_experiment writes artifacts and a manifest")
{
    auto dir = scratch("mech");
    auto cfg = parse_config("[experiment]\nname = mech-report\n[mechanism]\nkind = stable\ngamma = 2\n");
    cfg.set("experiment.output_dir", dir.string());
    auto rr = run_experiment(cfg);
    REQUIRE(rr.status == 0);
    CHECK(rr.dir == dir / "mech-report");
    CHECK(fs::exists(rr.dir / "psi_table.csv"));
    auto manifest = json::parse(slurp(rr.dir / "manifest.json"));
    CHECK(manifest["status"] == 0);
    CHECK(manifest.contains("created_utc"));
    for (const auto& f : manifest["files"]) {
        std::string body = slurp(rr.dir / f["path"].get<std::string>());
        CHECK(f["sha256"] == sha256_hex(body));
        CHECK(f["bytes"] == body.size());
    }
    auto summary = json::parse(slurp(rr.dir / "summary.json"));
    CHECK(summary["experiment"] == "mech-report");

    auto bad = cfg;
    bad.set("experiment.name", "what");
    CHECK(run_experiment(bad).status == 2);
}

TEST_CASE("counterexample and kernels summaries carry their headline numbers")
{
    auto dir = scratch("summaries");
    auto ce = parse_config("[experiment]\nname = counterexample\n[mechanism]\ngamma = 1.5\nn_max = 12\n"
                           "[exponents]\npoints = 400\n");
    ce.set("experiment.output_dir", dir.string());
    auto rr = run_experiment(ce);
    REQUIRE(rr.status == 0);
    CHECK(rr.summary["results"].contains("max_doubling_ratio"));
    CHECK(rr.summary["results"].contains("delta_hat"));

    auto kc = parse_config("[experiment]\nname = kernels-check\n[kernels]\ngammas = 2\n");
    kc.set("experiment.output_dir", dir.string());
    auto kr = run_experiment(kc);
    REQUIRE(kr.status == 0);
    CHECK(kr.summary["results"].dump().find("pass") != std::string::npos);
}

TEST_CASE("CLI exit codes")
{
    auto dir = scratch("cli");
    spit(dir / "ok.ini", "[experiment]\nname = mech-report\n[grid]\npoints = 8\n");
    spit(dir / "unknown.ini", "[experiment]\nname = no-such-experiment\n");
    spit(dir / "badkey.ini", "[experiment]\nname = mech-report\nflavour = mint\n");

    CHECK(shell("list-experiments").code == 0);
    auto listed = shell("list-experiments").out;
    for (const char* n : {"mech-report", "kernels-check", "doubling", "counterexample", "spine-laplace", "subliminf",
                          "density", "packing-ratio"})
        CHECK(listed.find(n) != std::string::npos);
    CHECK(shell("validate " + (dir / "ok.ini").string()).code == 0);
    CHECK(shell("validate " + (dir / "unknown.ini").string()).code == 2);
    CHECK(shell("validate " + (dir / "badkey.ini").string()).code == 2);
    CHECK(shell("run " + (dir / "unknown.ini").string()).code == 2);
    CHECK(shell("run " + (dir / "ok.ini").string() + " grid.points=oops").code == 2);
    CHECK(shell("frobnicate").code == 2);

    auto out = dir / "env-out";
    auto run = shell("run " + (dir / "ok.ini").string(), "LEVYTREE_OUTPUT_DIR='" + out.string() + "'");
    CHECK(run.code == 0);
    CHECK(fs::exists(out / "mech-report" / "manifest.json"));
}

TEST_CASE("density runs are reproducible across thread counts")
{
    auto dir = scratch("density");
    spit(dir / "tiny.ini", kTinyDensity);
    auto a = dir / "a", b = dir / "b";
    auto ra = shell("run " + (dir / "tiny.ini").string() + " experiment.output_dir=" + a.string());
    auto rb = shell("run " + (dir / "tiny.ini").string() + " experiment.threads=2 experiment.output_dir=" + b.string());
    REQUIRE(ra.code == 0);
    REQUIRE(rb.code == 0);
    CHECK(fs::exists(a / "density" / "trees" / "tree_0.ltex"));
    CHECK(fs::exists(a / "density" / "trees" / "tree_1.ltex"));
    CHECK(fs::exists(a / "density" / "summary.json"));
    for (const char* f : {"density.csv", "trees/tree_0.ltex", "trees/tree_1.ltex"})
        CHECK(slurp(a / "density" / f) == slurp(b / "density" / f));
}
