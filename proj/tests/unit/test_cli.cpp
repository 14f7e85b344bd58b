#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "csvae/bench.hpp"
#include "csvae/cli.hpp"
#include "test_util.hpp"

using namespace csvae;

namespace {

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome run(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

nlohmann::json read_json(const std::string& path) {
    std::ifstream in(path);
    return nlohmann::json::parse(in);
}

}  // namespace

TEST(Cli, GenWritesFrames) {
    testutil::TempDir dir;
    const auto r = run({"gen", "--frames", "100", "--seed", "1", "--out", dir.file("train.csf")});
    ASSERT_EQ(r.code, 0) << r.err;
    const FrameSet set = load_frames(dir.file("train.csf"));
    EXPECT_EQ(set.n_frames(), 100);
    EXPECT_EQ(set.n_features(), 204);
}

TEST(Cli, MissingDataFileIsDataError) {
    testutil::TempDir dir;
    const auto r = run({"train", "--data", "missing.csf", "--m", "168", "--out", dir.file("m.json")});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("missing.csf"), std::string::npos);
}

TEST(Cli, UsageErrors) {
    EXPECT_EQ(run({"gen", "--frames", "5", "--bogus", "1", "--out", "x"}).code, 1);
    EXPECT_EQ(run({}).code, 1);
    EXPECT_EQ(run({"gen", "--frames", "five", "--out", "x"}).code, 1);
    EXPECT_EQ(run({"--help"}).code, 0);
}

TEST(Cli, ConfigFileFlagsWinAndUnknownKeysFail) {
    testutil::TempDir dir;
    std::ofstream(dir.file("gen.cfg")) << "# synthetic set\nframes = 7\nseed=3\n";
    ASSERT_EQ(run({"gen", "--config", dir.file("gen.cfg"), "--out", dir.file("a.csf")}).code, 0);
    EXPECT_EQ(load_frames(dir.file("a.csf")).n_frames(), 7);
    ASSERT_EQ(run({"gen", "--config", dir.file("gen.cfg"), "--frames", "9", "--out", dir.file("b.csf")}).code, 0);
    EXPECT_EQ(load_frames(dir.file("b.csf")).n_frames(), 9);
    const RowMatrix expected = gen_synthetic(7, 204, 10, 3).frames.cast<float>().cast<double>();
    EXPECT_EQ(load_frames(dir.file("a.csf")).frames, expected);

    std::ofstream(dir.file("bad.cfg")) << "frames=7\nflavour=mint\n";
    EXPECT_EQ(run({"gen", "--config", dir.file("bad.cfg"), "--out", dir.file("c.csf")}).code, 1);
    std::ofstream(dir.file("broken.cfg")) << "frames 7\n";
    EXPECT_EQ(run({"gen", "--config", dir.file("broken.cfg"), "--out", dir.file("c.csf")}).code, 1);
    EXPECT_EQ(run({"gen", "--config", dir.file("absent.cfg"), "--out", dir.file("c.csf")}).code, 2);
}

TEST(Cli, TrainEvalInterpPipeline) {
    testutil::TempDir dir;
    ASSERT_EQ(run({"gen", "--frames", "200", "--seed", "1", "--out", dir.file("d.csf")}).code, 0);
    auto r = run({"train", "--data", dir.file("d.csf"), "--m", "48", "--epochs", "2", "--sigma-n", "0.001", "--seed",
                  "2", "--matrix-out", dir.file("a.csm"), "--history", dir.file("h.csv"), "--out",
                  dir.file("model.json")});
    ASSERT_EQ(r.code, 0) << r.err;
    r = run({"eval", "--method", "CsVae", "--model", dir.file("model.json"), "--data", dir.file("d.csf"), "--out",
             dir.file("e1.json")});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto e1 = read_json(dir.file("e1.json"));
    EXPECT_EQ(e1["frames"], 200);
    r = run({"eval", "--method", "CsVae", "--model", dir.file("model.json"), "--data", dir.file("d.csf"), "--out",
             dir.file("e2.json")});
    EXPECT_EQ(bench::mask_timing(read_json(dir.file("e2.json"))), bench::mask_timing(e1));

    r = run({"eval", "--method", "LassoNoPt", "--matrix", dir.file("a.csm"), "--data", dir.file("d.csf"), "--frames",
             "5", "--out", dir.file("l.json")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(read_json(dir.file("l.json"))["frames"], 5);
    EXPECT_EQ(run({"eval", "--method", "Lasso", "--data", dir.file("d.csf")}).code, 2);

    const auto other = build_unconstrained_matrix(48, 204, 9);
    save_matrix(other, dir.file("other.csm"));
    r = run({"eval", "--model", dir.file("model.json"), "--matrix", dir.file("other.csm"), "--data", dir.file("d.csf")});
    EXPECT_EQ(r.code, 2);

    r = run({"interp", "--model", dir.file("model.json"), "--data", dir.file("d.csf"), "--frame-a", "0", "--frame-b",
             "5", "--out", dir.file("p.csf")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(load_frames(dir.file("p.csf")).n_frames(), 8);
}

TEST(Cli, CheckMatrixReportsPowerAndSRec) {
    testutil::TempDir dir;
    ASSERT_EQ(run({"gen", "--frames", "300", "--seed", "1", "--out", dir.file("d.csf")}).code, 0);
    ASSERT_EQ(run({"matrix", "--kind", "proposition", "--m", "48", "--data", dir.file("d.csf"), "--out",
                   dir.file("a.csm")})
                  .code,
              0);
    const auto r = run({"check-matrix", "--matrix", dir.file("a.csm"), "--data", dir.file("d.csf"), "--pairs", "200",
                        "--out", dir.file("c.json")});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto doc = read_json(dir.file("c.json"));
    EXPECT_GE(doc["power_satisfied_fraction"].get<double>(), 0.75);
    EXPECT_GE(doc["s_rec"]["satisfied_fraction"].get<double>(), 0.99);
}

TEST(Cli, BenchTwiceGivesIdenticalMaskedReports) {
    testutil::TempDir dir;
    const std::vector<std::string> base{"--method", "CsVae,LassoNoPt", "--m-list", "24", "--seeds", "1",
                                        "--train-frames", "60", "--test-frames", "20", "--epochs", "1",
                                        "--max-iter", "20", "--quiet"};
    auto args = base;
    args.insert(args.begin(), "bench-m");
    auto a = args, b = args;
    a.insert(a.end(), {"--out", dir.file("a.json"), "--csv", dir.file("a.csv")});
    b.insert(b.end(), {"--out", dir.file("b.json")});
    ASSERT_EQ(run(a).code, 0) << run(a).err;
    ASSERT_EQ(run(b).code, 0);
    EXPECT_EQ(bench::mask_timing(read_json(dir.file("a.json"))), bench::mask_timing(read_json(dir.file("b.json"))));
    EXPECT_EQ(read_json(dir.file("a.json"))["rows"].size(), 2u);
    std::ifstream csv(dir.file("a.csv"));
    std::string header;
    std::getline(csv, header);
    EXPECT_EQ(header.rfind("method,m,sigma_n,seed,mse_mean", 0), 0u);
}

#ifdef CSVAE_TOOL_PATH
TEST(Cli, ExecutableExitCodes) {
    testutil::TempDir dir;
    const std::string tool = CSVAE_TOOL_PATH;
    const auto status = [](const std::string& cmd) {
        const int s = std::system((cmd + " >/dev/null 2>&1").c_str());
        return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
    };
    EXPECT_EQ(status(tool + " gen --frames 3 --out " + dir.file("x.csf")), 0);
    EXPECT_EQ(status(tool + " gen --nope"), 1);
    EXPECT_EQ(status(tool + " stats --data " + dir.file("missing.csf")), 2);
}
#endif
