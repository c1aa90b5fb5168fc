#include <gtest/gtest.h>

#include "cli.hpp"
#include "svg.hpp"

#include <viscobeam/common.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

using namespace viscobeam;
using namespace viscobeam::cli;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out, err;
};

Run run(std::vector<std::string> args) {
    args.insert(args.begin(), "viscobeam");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("viscobeam_cli_test_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::size_t count(const std::string& s, const std::string& what) {
    std::size_t n = 0;
    for (auto pos = s.find(what); pos != std::string::npos; pos = s.find(what, pos + 1)) ++n;
    return n;
}

}  // namespace

TEST(Dispatch, EmmRecoverExample) {
    const auto r = run({"emm-recover", "--moments", "6,-14,36,-98,276,-794", "--n", "3"});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("alpha=(-3,-2,-1)"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("beta=(3,2,1)"), std::string::npos) << r.out;
}

TEST(Dispatch, ExitCodes) {
    EXPECT_EQ(run({"no-such-command"}).code, 64);
    EXPECT_EQ(run({}).code, 64);
    EXPECT_EQ(run({"emm-recover", "--moments", "1,2,3", "--n", "3"}).code, 2);
    EXPECT_EQ(run({"emm-recover", "--moments", "1,x", "--n", "1"}).code, 2);
    EXPECT_EQ(run({"trace", "--no-such-flag", "1"}).code, 2);
    // a repeated exponent makes the moment matrix singular: numerical failure
    EXPECT_EQ(run({"emm-recover", "--moments", "2,-2,2,-2", "--n", "2"}).code, 3);
    EXPECT_EQ(run({"--help"}).code, 0);
}

TEST(Dispatch, ConfigFileAndFlagOverride) {
    const fs::path dir = scratch("config");
    fs::create_directories(dir);
    {
        std::ofstream f(dir / "cfg.json");
        f << R"({"moments": [6, -14, 36, -98, 276, -794], "n": 2})";
    }
    // n = 2 from the file conflicts with six moments; the flag fixes it
    EXPECT_EQ(run({"emm-recover", "--config", (dir / "cfg.json").string()}).code, 2);
    EXPECT_EQ(run({"emm-recover", "--config", (dir / "cfg.json").string(), "--n", "3"}).code, 0);
    {
        std::ofstream f(dir / "bad.json");
        f << R"({"moments": [1, 2], "typo": 1})";
    }
    EXPECT_EQ(run({"emm-recover", "--config", (dir / "bad.json").string()}).code, 2);
    EXPECT_EQ(run({"emm-recover", "--config", (dir / "missing.json").string()}).code, 2);
}

TEST(Dispatch, OutputsAreDeterministicWithHashHeader) {
    const fs::path a = scratch("det_a"), b = scratch("det_b");
    const std::vector<std::string> common{"--angles", "20", "--offsets", "12", "--pixels", "12", "--seed", "7"};
    auto args = [&](const fs::path& out) {
        std::vector<std::string> v{"xray", "--out", out.string()};
        v.insert(v.end(), common.begin(), common.end());
        return v;
    };
    ASSERT_EQ(run(args(a)).code, 0);
    ASSERT_EQ(run(args(b)).code, 0);
    for (const char* f : {"sinogram.csv", "field.csv"}) {
        const std::string x = slurp(a / f), y = slurp(b / f);
        EXPECT_EQ(x, y) << f;
        EXPECT_EQ(x.rfind("# viscobeam xray config_hash=", 0), 0u) << f;
        EXPECT_NE(x.find("seed=7"), std::string::npos);
    }
    // a different parameter changes the hash
    auto v = args(scratch("det_c"));
    v.back() = "8";
    ASSERT_EQ(run(v).code, 0);
    EXPECT_NE(slurp(scratch("det_c") / "sinogram.csv").substr(0, 50), slurp(a / "sinogram.csv").substr(0, 50));
}

TEST(Dispatch, ResidualScanWritesCsvAndLogLogSvg) {
    const fs::path dir = scratch("scan");
    const auto r = run({"residual-scan", "--construction", "go", "--orders", "1,2", "--ks", "20,40", "--out", dir.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(fs::exists(dir / "residual.csv"));
    const std::string svg = slurp(dir / "residual.svg");
    EXPECT_EQ(count(svg, "<polyline"), 2u);
    EXPECT_EQ(count(svg, "slope"), 2u);
    EXPECT_NE(r.out.find("order_2 slope"), std::string::npos);
}

TEST(Dispatch, ThreadsFlag) {
    const auto r = run({"--threads", "1", "lens", "--out", scratch("threads").string(), "--angles", "2", "--offsets", "2"});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(thread_count(), 1);
    set_thread_count(0);
}

TEST(Svg, TwoColumnTableGivesOnePolyline) {
    std::istringstream in("# comment\nx,y\n0,1\n1,2\n2,0\n");
    const Table t = read_csv(in);
    ASSERT_EQ(t.rows.size(), 3u);
    const std::string svg = render_svg(t, PlotSpec{"x", {"y"}, false, "t", "h"});
    EXPECT_EQ(count(svg, "<polyline"), 1u);
    EXPECT_NE(svg.find("viewBox=\"0 0 800 600\""), std::string::npos);
    EXPECT_EQ(svg, render_svg(t, PlotSpec{"x", {"y"}, false, "t", "h"}));
}

TEST(Svg, LogLogAnnotatesSlope) {
    std::istringstream in("k,r\n10,1\n20,0.25\n40,0.0625\n");
    const std::string svg = render_svg(read_csv(in), PlotSpec{"k", {"r"}, true, "", ""});
    EXPECT_NE(svg.find("r slope -2"), std::string::npos);
}

TEST(Svg, EmptyTableAndMissingColumnFail) {
    const fs::path dir = scratch("svg");
    fs::create_directories(dir);
    {
        std::ofstream f(dir / "empty.csv");
        f << "x,y\n";
    }
    EXPECT_THROW(render_svg_file((dir / "empty.csv").string(), PlotSpec{"x", {"y"}}, (dir / "empty.svg").string()),
                 ConfigError);
    EXPECT_FALSE(fs::exists(dir / "empty.svg"));
    std::istringstream in("x,y\n0,1\n");
    EXPECT_THROW(render_svg(read_csv(in), PlotSpec{"x", {"z"}}), ConfigError);
}

TEST(Executable, VerifyPasses) {
    const fs::path dir = scratch("exe");
    const std::string cmd = std::string(VISCOBEAM_CLI_PATH) + " verify --out " + dir.string() + " > /dev/null";
    const int status = std::system(cmd.c_str());
    ASSERT_NE(status, -1);
    EXPECT_EQ(WEXITSTATUS(status), 0);
    const std::string bad = std::string(VISCOBEAM_CLI_PATH) + " frobnicate > /dev/null 2>&1";
    EXPECT_EQ(WEXITSTATUS(std::system(bad.c_str())), 64);
}
