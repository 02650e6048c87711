#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const fs::path& work_dir() {
    static const fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "pda_cli_smoke";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

struct Run {
    int code = -1;
    std::string out;
};

Run run(const std::string& args) {
    const fs::path out = work_dir() / "stdout.txt";
    const std::string cmd = std::string(PDA_CLI_PATH) + " " + args + " > " + out.string() + " 2> " +
                            (work_dir() / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(out);
    std::stringstream ss;
    ss << in.rdbuf();
    r.out = ss.str();
    return r;
}

json run_json(const std::string& args) {
    const Run r = run(args);
    INFO(args);
    REQUIRE(r.code == 0);
    return json::parse(r.out);
}

std::string p(const std::string& name) { return (work_dir() / name).string(); }

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("flops report") {
    const json j = run_json("flops");
    CHECK(j["base"].get<double>() > 0);
    CHECK(j["prompted"].get<double>() > j["base"].get<double>());
    CHECK(j["overhead"].get<double>() > 0.0);
    CHECK(j["overhead"].get<double>() < 0.10);
}

TEST_CASE("end-to-end pipeline") {
    const std::string data = p("data");
    const json gen = run_json("gen-data --seed 3 --frames 4 --resolution 32x48 --out " + data);
    CHECK(gen["frames"] == 4);
    CHECK(fs::exists(data + "/depth_0003.pfm"));
    CHECK(fs::exists(data + "/poses.txt"));

    const json same = run_json("eval-depth --pred " + data + "/depth_0000.pfm --gt " + data + "/depth_0000.pfm");
    CHECK(same["l1"] == 0.0);
    CHECK(same["rmse"] == 0.0);
    CHECK(same["absrel"] == 0.0);
    CHECK(same["delta05"] == 1.0);

    const json sim = run_json("simulate-lidar --seed 1 --depth " + data + "/depth_0000.pfm --rgb " + data +
                              "/rgb_0000.ppm --out " + p("prompt.pfm"));
    CHECK(sim["height"] == 16);
    CHECK(sim["width"] == 24);

    {
        std::ofstream cfg(p("cfg.json"));
        cfg << R"({"net": {"height": 32, "width": 48}, "warmup_steps": 2, "main_steps": 2, "scene_count": 2})";
    }
    run_json("train --quiet --seed 4 --config " + p("cfg.json") + " --out " + p("a.pdac"));
    const json tr = run_json("train --quiet --seed 4 --config " + p("cfg.json") + " --out " + p("b.pdac"));
    CHECK(tr["steps"] == 4);
    CHECK(tr["lambda"] == 0.5);
    CHECK(slurp(p("a.pdac")) == slurp(p("b.pdac")));

    run_json("infer --checkpoint " + p("a.pdac") + " --rgb " + data + "/rgb_0000.ppm --prompt " + data +
             "/prompt_0000.pfm --out " + p("pred.pfm"));
    const json ev = run_json("eval-depth --pred " + p("pred.pfm") + " --gt " + data + "/depth_0000.pfm");
    CHECK(ev["l1"].get<double>() >= 0.0);

    const json al = run_json("align --pred " + p("pred.pfm") + " --ref " + data + "/depth_0000.pfm --method polyfit");
    CHECK(al.contains("scale"));

    const json fu = run_json("fuse-tsdf --data " + data + " --voxel-size 0.08 --out " + p("pts.txt"));
    CHECK(fu["points"].get<int>() > 0);
    const json rec = run_json("eval-recon --pred " + p("pts.txt") + " --gt " + p("pts.txt"));
    CHECK(rec["fscore"] == 1.0);
    CHECK(rec["acc"] == 0.0);

    const json sel = run_json("select-frames --fps 6 --frames-dir " + data);
    CHECK(sel["count"] == 4);
    CHECK(!sel["picks"].empty());
}

TEST_CASE("usage and load errors exit with 2") {
    CHECK(run("").code == 2);
    CHECK(run("flops --no-such-flag").code == 2);
    CHECK(run("eval-depth --pred " + p("missing.pfm") + " --gt " + p("missing.pfm")).code == 2);
    {
        std::ofstream bad(p("bad.pfm"));
        bad << "P5\n1 1\n255\n";
    }
    CHECK(run("eval-depth --pred " + p("bad.pfm") + " --gt " + p("bad.pfm")).code == 2);
    {
        std::ofstream cfg(p("bad.json"));
        cfg << R"({"warmup_step": 3})";
    }
    CHECK(run("train --config " + p("bad.json") + " --out " + p("x.pdac")).code == 2);
    CHECK(run("flops --resolution 64by96").code == 2);
}
