// Runs the dislocore executable; argv[1] is its path, argv[2] a scratch directory.

#define DOCTEST_CONFIG_IMPLEMENT
#include "doctest.h"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <sys/wait.h>

#include "dislocore/lattice.hpp"

namespace fs = std::filesystem;

namespace {

std::string exe, work;

int run(const std::string& args)
{
    const std::string cmd = exe + " " + args + " > /dev/null 2>&1";
    const int st = std::system(cmd.c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

std::string dir(const std::string& name) { return (fs::path(work) / name).string(); }

const std::string kToy = "--crystal toy --potential toy --burgers 1,0,0 --line 0,0,1";

} // namespace

TEST_CASE("exit codes")
{
    CHECK(run("stability --out " + dir("st")) == 0);
    CHECK(fs::exists(fs::path(dir("st")) / "stability.cert"));
    CHECK(run("stability --crystal toy --potential toy-flipped --burgers 1,0,0 --line 0,0,1 --out " + dir("flip")) == 2);
    CHECK(run("stability --crystal " + dir("no_such_crystal.json") + " --rcut 1.5 --out " + dir("none")) == 64);
    CHECK(run("relax --no-such-flag") == 64);
    CHECK(run("") == 64);
    CHECK(run("converge --radii 10,14 " + kToy + " --out " + dir("none")) == 64);
    CHECK(run("converge --radii 14,10,20,28 " + kToy + " --out " + dir("none")) == 64);
    CHECK(run("relax --method newton " + kToy + " --out " + dir("none")) == 64);
    CHECK_FALSE(fs::exists(dir("none")));

    // an output path that is a regular file cannot hold the outputs
    std::ofstream(dir("blocker")) << "x";
    CHECK(run("stability --out " + dir("blocker") + "/sub") == 74);

    // unreadable crystal content
    std::ofstream(dir("bad.json")) << "{ not json";
    CHECK(run("stability --crystal " + dir("bad.json") + " --rcut 1.5 --out " + dir("bad")) == 74);

    // non-convergence is a scientific failure
    CHECK(run("relax " + kToy + " --radius 12 --max-iter 2 --out " + dir("short")) == 2);
}

TEST_CASE("isotropic screw predictor matches the antiplane closed form")
{
    REQUIRE(run("predict --burgers -0.5,0.5,0 --line -1,1,0 --mode isotropic --radius 10 --out " + dir("screw")) == 0);
    std::ifstream in(fs::path(dir("screw")) / "field.csv");
    REQUIRE(in);
    auto fr = dislo::build_frame(dislo::silicon_spec(), dislo::Vec3(-0.5, 0.5, 0), dislo::Vec3(-1, 1, 0));
    const double b3 = fr.burgers(2);
    CHECK(std::abs(fr.burgers.head<2>().norm()) < 1e-12);
    std::string line;
    double cx = 0, cy = 0;
    int rows = 0;
    double worst = 0;
    while (std::getline(in, line)) {
        if (line.rfind("# core", 0) == 0) {
            std::istringstream s(line.substr(6));
            s >> cx >> cy;
        }
        if (line.empty() || line[0] == '#' || line[0] == 'l') continue;
        std::istringstream s(line);
        std::vector<double> v;
        std::string tok;
        while (std::getline(s, tok, ',')) v.push_back(std::stod(tok));
        double theta = std::atan2(v[1] - cy, v[0] - cx);
        if (theta < 0) theta += 2 * M_PI;
        const double oracle = b3 * theta / (2 * M_PI);
        worst = std::max({worst, std::abs(v[4] - oracle), std::abs(v[2]), std::abs(v[3])});
        ++rows;
    }
    CHECK(rows > 100);
    CHECK(worst <= 1e-8);
}

TEST_CASE("reruns produce identical bytes")
{
    REQUIRE(run("relax " + kToy + " --radius 12 --out " + dir("r1")) == 0);
    REQUIRE(run("relax " + kToy + " --radius 12 --threads 1 --out " + dir("r2")) == 0);
    const std::string a = slurp(fs::path(dir("r1")) / "relax.csv");
    CHECK(!a.empty());
    CHECK(a == slurp(fs::path(dir("r2")) / "relax.csv"));

    REQUIRE(run("converge " + kToy + " --radii 8,10,12,14 --seed 4 --out " + dir("c1")) == 0);
    REQUIRE(run("converge " + kToy + " --radii 8,10,12,14 --seed 4 --out " + dir("c2")) == 0);
    const std::string c = slurp(fs::path(dir("c1")) / "conv.csv");
    CHECK(c == slurp(fs::path(dir("c2")) / "conv.csv"));
    CHECK(c.find("# config_hash") != std::string::npos);
    CHECK(c.find("# dislocore ") != std::string::npos);
    CHECK(fs::exists(fs::path(dir("c1")) / "conv.plt"));
}

TEST_CASE("flags override the config file")
{
    const fs::path cfg = fs::path(work) / "run.json";
    std::ofstream(cfg) << R"({"crystal": "toy", "potential": "toy", "burgers": [1, 0, 0], "line": [0, 0, 1],
                             "radius": 30, "out": ")" << dir("cfg_default") << R"("})";
    REQUIRE(run("predict --config " + cfg.string() + " --radius 8 --out " + dir("cfg_flag")) == 0);
    const std::string s = slurp(fs::path(dir("cfg_flag")) / "field.csv");
    CHECK(s.find("\"radius\":8.0") != std::string::npos);
    CHECK_FALSE(fs::exists(dir("cfg_default")));
    CHECK(run("predict --config " + dir("missing.json") + " --out " + dir("none")) == 64);
}

TEST_CASE("green writes fits and a plot script")
{
    REQUIRE(run("green --supercell 32 --green-window 2,12 --out " + dir("g")) == 0);
    const std::string s = slurp(fs::path(dir("g")) / "green.csv");
    CHECK(s.find("# fit DG00") != std::string::npos);
    CHECK(fs::exists(fs::path(dir("g")) / "green.plt"));
}

int main(int argc, char** argv)
{
    if (argc < 3) return 64;
    exe = argv[1];
    work = argv[2];
    fs::remove_all(work);
    fs::create_directories(work);
    doctest::Context ctx;
    ctx.applyCommandLine(argc - 2, argv + 2);
    return ctx.run();
}
