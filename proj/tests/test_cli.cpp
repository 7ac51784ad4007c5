#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mkinterp/cli.hpp"

using namespace mkinterp;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() / ("mkinterp_cli_" + std::string(info->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    std::string write(const std::string& name, const std::string& text) const {
        std::ofstream(path(name), std::ios::binary) << text;
        return path(name);
    }

    static std::string read(const std::string& p) {
        std::ifstream in(p, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }

    static Outcome run(std::vector<std::string> args) {
        std::ostringstream out, err;
        const int code = cli::run_cli(args, out, err);
        return {code, out.str(), err.str()};
    }

    // column `col` of a CSV body (header skipped)
    static std::vector<std::string> column(const std::string& csv, std::size_t col) {
        std::istringstream in(csv);
        std::string line;
        std::getline(in, line);
        std::vector<std::string> out;
        while (std::getline(in, line)) out.emplace_back(io::split_fields(line).at(col));
        return out;
    }

    Outcome fit_example() {
        return run({"fit", "--data", write("d.csv", "x1,y\n0,8\n1,9\n"), "--kernel", "power_series",
                    "--truncation", "2", "--decay", "1", "--order", "4", "--out", path("s.json")});
    }

    fs::path dir_;
};

double num(const std::string& s) { return io::parse_double(s, "csv", 0); }

}  // namespace

TEST_F(CliTest, FitExampleReportsCoefficientsAndNorm) {
    const Outcome r = fit_example();
    ASSERT_EQ(r.code, cli::kOk) << r.err;
    EXPECT_NE(r.out.find("converged: true"), std::string::npos);
    std::ifstream in(path("s.json"));
    const io::Json j = io::parse_json(in, "s.json");
    EXPECT_NEAR(j["coefficients"][0].get<double>(), 1.0, 1e-8);
    EXPECT_NEAR(j["coefficients"][1].get<double>(), 1.0, 1e-8);
    EXPECT_NEAR(j["report"]["norm"].get<double>(), std::pow(17.0, 0.75), 1e-10);
}

TEST_F(CliTest, EvalExampleAndEmptyList) {
    ASSERT_EQ(fit_example().code, cli::kOk);
    const Outcome r = run({"eval", "--interpolant", path("s.json"), "--points", write("p.csv", "x1\n0\n0.5\n1\n")});
    ASSERT_EQ(r.code, cli::kOk) << r.err;
    const auto s = column(r.out, 1);
    ASSERT_EQ(s.size(), 3u);
    EXPECT_NEAR(num(s[0]), 8.0, 1e-9);
    EXPECT_NEAR(num(s[1]), 8.5, 1e-9);
    EXPECT_NEAR(num(s[2]), 9.0, 1e-9);

    const Outcome empty = run({"eval", "--interpolant", path("s.json"), "--points", write("e.csv", "x1\n")});
    EXPECT_EQ(empty.code, cli::kOk);
    EXPECT_EQ(empty.out, "x1,s,status\n");
}

TEST_F(CliTest, EvalFlagsOutsidePoints) {
    ASSERT_EQ(fit_example().code, cli::kOk);
    const Outcome r = run({"eval", "--interpolant", path("s.json"), "--points", write("p.csv", "x1\n0\n2.0\n")});
    EXPECT_EQ(r.code, cli::kOutsideDomain);
    EXPECT_EQ(column(r.out, 2), (std::vector<std::string>{"ok", "outside"}));
}

TEST_F(CliTest, EvalRejectsSchemaMismatch) {
    const Outcome r = run({"eval", "--interpolant", write("bad.json", R"({"family": "power_series"})"), "--grid", "3"});
    EXPECT_EQ(r.code, cli::kInputError);
    EXPECT_EQ(run({"eval", "--interpolant", path("missing.json"), "--grid", "3"}).code, cli::kInputError);
}

TEST_F(CliTest, FitInputErrors) {
    const Outcome empty = run({"fit", "--data", write("d.csv", "x1,y\n0,8\n1,\n"), "--out", path("s.json")});
    EXPECT_EQ(empty.code, cli::kInputError);
    EXPECT_NE(empty.err.find("d.csv:3"), std::string::npos) << empty.err;

    const Outcome dup = run({"fit", "--data", write("u.csv", "x1,y\n0,8\n1,9\n0,3\n"), "--out", path("s.json")});
    EXPECT_EQ(dup.code, cli::kInputError);
    EXPECT_NE(dup.err.find("rows 1 and 3"), std::string::npos) << dup.err;

    const std::string d = write("ok.csv", "x1,y\n0,8\n1,9\n");
    EXPECT_EQ(run({"fit", "--data", d, "--out", path("s.json"), "--order", "3"}).code, cli::kInputError);
    EXPECT_EQ(run({"fit", "--data", d, "--out", path("s.json"), "--kernel", "gauss"}).code, cli::kInputError);
    EXPECT_EQ(run({"fit", "--data", d, "--out", path("s.json"), "--bogus"}).code, cli::kInputError);
    EXPECT_EQ(run({"fit", "--data", d}).code, cli::kInputError);
    EXPECT_EQ(run({}).code, cli::kInputError);
    EXPECT_EQ(run({"fit", "--data", d, "--out", path("s.json"), "--domain", "0:0.5"}).code, cli::kOutsideDomain);
}

TEST_F(CliTest, SingularDesignAndNonConvergence) {
    const std::string three = write("t.csv", "x1,y\n-1,1\n0,5\n1,2\n");
    const Outcome sing = run({"fit", "--data", three, "--truncation", "2", "--order", "4", "--max-iter", "20",
                          "--out", path("a.json")});
    EXPECT_EQ(sing.code, cli::kSingularDesign);
    EXPECT_TRUE(fs::exists(path("a.json")));

    const Outcome slow = run({"fit", "--data", write("q.csv", "x1,y\n-0.5,3\n0.1,-2\n0.7,5\n"), "--kernel", "trig",
                          "--truncation", "9", "--order", "6", "--max-iter", "1", "--out", path("b.json")});
    EXPECT_EQ(slow.code, cli::kNotConverged);
    std::ifstream in(path("b.json"));
    EXPECT_FALSE(io::parse_json(in, "b.json")["report"]["converged"].get<bool>());
}

TEST_F(CliTest, PowerColumns) {
    const std::string nodes = write("n.csv", "x1\n0\n1\n");
    const Outcome r = run({"power", "--nodes", nodes, "--points", write("p.csv", "x1\n-1\n0\n"), "--truncation", "3",
                       "--decay", "1", "--order", "2"});
    ASSERT_EQ(r.code, cli::kOk) << r.err;
    EXPECT_EQ(r.out.substr(0, r.out.find('\n')), "x1,p_m,p_2,bound");
    const auto p2 = column(r.out, 2);
    EXPECT_NEAR(num(p2[0]), std::sqrt(2.0), 1e-12);
    EXPECT_LE(num(p2[1]), 1e-12);

    const Outcome m4 = run({"power", "--nodes", nodes, "--grid", "41", "--truncation", "6", "--order", "4",
                        "--fnorm", "2"});
    ASSERT_EQ(m4.code, cli::kOk) << m4.err;
    const auto pm = column(m4.out, 1), pp = column(m4.out, 2), b = column(m4.out, 3);
    ASSERT_EQ(pm.size(), 41u);
    for (std::size_t i = 0; i < pm.size(); ++i) {
        EXPECT_LE(num(pm[i]), num(pp[i]) + 1e-12);
        EXPECT_DOUBLE_EQ(num(b[i]), 4.0 * num(pm[i]));
    }
    EXPECT_EQ(run({"power", "--nodes", nodes, "--points", write("o.csv", "x1\n3\n")}).code, cli::kOutsideDomain);
}

TEST_F(CliTest, StudyTableAndExitCodes) {
    const Outcome r = run({"study", "--kernel", "trigonometric", "--truncation", "41", "--order", "4", "--counts",
                       "4,8,16", "--seed", "5"});
    ASSERT_EQ(r.code, cli::kOk) << r.err;
    EXPECT_EQ(r.out.substr(0, r.out.find('\n')), "n,h,max_error,max_bound,slope");
    const auto err = column(r.out, 2), bound = column(r.out, 3), slope = column(r.out, 4);
    ASSERT_EQ(err.size(), 3u);
    EXPECT_EQ(slope[0], "");
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_LE(num(err[i]), num(bound[i]));
        if (i) {
            EXPECT_LT(num(err[i]), num(err[i - 1]));
            EXPECT_NE(slope[i], "");
        }
    }
    const Outcome one = run({"study", "--kernel", "trig", "--truncation", "21", "--counts", "4"});
    EXPECT_EQ(one.code, cli::kOk);
    EXPECT_EQ(column(one.out, 4), std::vector<std::string>{""});
    EXPECT_EQ(run({"study", "--counts", "8,4"}).code, cli::kInputError);
    EXPECT_EQ(run({"study", "--counts", "4,4"}).code, cli::kInputError);
}

TEST_F(CliTest, ConfigFileWithFlagOverride) {
    const std::string cfg = write("run.cfg", "# example\nkernel = \"power_series\"\ntruncation = 2\ndecay = 1\norder = 4\n");
    const std::string data = write("d.csv", "x1,y\n0,8\n1,9\n");
    ASSERT_EQ(run({"fit", "--config", cfg, "--data", data, "--out", path("a.json")}).code, cli::kOk);
    ASSERT_EQ(run({"fit", "--config", cfg, "--data", data, "--out", path("b.json"), "--order", "2"}).code, cli::kOk);
    std::ifstream a(path("a.json")), b(path("b.json"));
    EXPECT_EQ(io::parse_json(a, "a")["order"], 4);
    EXPECT_EQ(io::parse_json(b, "b")["order"], 2);
}

TEST_F(CliTest, RoundTripAndDeterminism) {
    std::string csv = "x1,x2,y\n";
    SeededSampler rng(12);
    for (int i = 0; i < 12; ++i)
        csv += io::format_double(rng.uniform(-1, 1)) + "," + io::format_double(rng.uniform(-1, 1)) + "," +
               io::format_double(rng.normal()) + "\n";
    const std::string data = write("d.csv", csv);
    const std::vector<std::string> fit_args{"fit", "--data", data, "--kernel", "trig", "--truncation", "40",
                                            "--order", "6", "--tol", "1e-11", "--seed", "3"};
    auto with_out = [](std::vector<std::string> a, const std::string& o) {
        a.insert(a.end(), {"--out", o});
        return a;
    };
    ASSERT_EQ(run(with_out(fit_args, path("a.json"))).code, cli::kOk);
    ASSERT_EQ(run(with_out(fit_args, path("b.json"))).code, cli::kOk);
    EXPECT_EQ(read(path("a.json")), read(path("b.json")));

    const Outcome e1 = run({"eval", "--interpolant", path("a.json"), "--points", data, "--out", path("e1.csv")});
    const Outcome e2 = run({"eval", "--interpolant", path("b.json"), "--points", data, "--out", path("e2.csv")});
    ASSERT_EQ(e1.code, cli::kOk);
    EXPECT_EQ(read(path("e1.csv")), read(path("e2.csv")));

    std::istringstream din(csv);
    const NodeSet nodes = io::read_data_csv(din, "d");
    const auto s = column(read(path("e1.csv")), 2);
    for (Eigen::Index i = 0; i < nodes.size(); ++i)
        EXPECT_LE(std::abs(num(s[static_cast<std::size_t>(i)]) - nodes.values[i]), 10 * 1e-11);
}

TEST_F(CliTest, CustomTableFit) {
    const std::string table =
        write("t.json", R"({"points": [[0], [0.5], [1]], "features": [[1, 0, 0.5], [0, 1, 0.5], [0.3, 0.3, 1]]})");
    const Outcome r = run({"fit", "--data", write("d.csv", "x1,y\n0,1\n0.5,2\n1,3\n"), "--kernel", "custom_table",
                       "--custom-table", table, "--order", "4", "--out", path("s.json")});
    ASSERT_EQ(r.code, cli::kOk) << r.err;
    const Outcome e = run({"eval", "--interpolant", path("s.json"), "--points", write("p.csv", "x1\n0.5\n0.25\n")});
    EXPECT_EQ(e.code, cli::kOutsideDomain);
    EXPECT_NEAR(num(column(e.out, 1)[0]), 2.0, 1e-9);
    EXPECT_EQ(column(e.out, 2)[1], "outside");
}

TEST_F(CliTest, HelpExitsZero) {
    const Outcome r = run({"--help"});
    EXPECT_EQ(r.code, cli::kOk);
    EXPECT_NE(r.out.find("study"), std::string::npos);
}
