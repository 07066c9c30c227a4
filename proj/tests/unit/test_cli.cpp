#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "flowdistill/cli/checkpoint.hpp"
#include "flowdistill/cli/commands.hpp"
#include "flowdistill/cli/config.hpp"
#include "flowdistill/cli/io.hpp"
#include "flowdistill/rng.hpp"

using namespace flowdistill;
using namespace flowdistill::cli;
namespace fs = std::filesystem;

namespace {

const fs::path kGolden = FLOWDISTILL_GOLDEN_DIR;

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("flowdistill_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run_args(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path write_config(const fs::path& dir, const std::string& name, const std::string& text) {
  const fs::path p = dir / name;
  write_text(p, text);
  return p;
}

const char* kSmallBenchmark =
    "seed = 3\nreproducible = true\n"
    "[generator]\nheight = 8\nwidth = 8\nviews = 4\n"
    "[window]\npreset = texture\n"
    "[emit]\nsvg = false\npgm = false\n";

}  // namespace

TEST(Config, ParsesTextWithSections) {
  const auto c = Config::parse_text(
      "# comment\nseed = 5\n[distill]\nlr = 0.5  # trailing\nlabel = \"label3\"\n\n[window]\npreset=refine\n");
  EXPECT_EQ(c.integer("seed"), 5);
  EXPECT_EQ(c.num("distill.lr"), 0.5);
  EXPECT_EQ(c.str("distill.label"), "label3");
  EXPECT_EQ(c.str("window.preset"), "refine");
}

TEST(Config, JsonMatchesText) {
  const auto j = Config::parse_json(R"({"seed": 5, "distill": {"lr": 0.5, "aux": "ideal"}, "reproducible": true})");
  const auto t = Config::parse_text("seed = 5\nreproducible = true\n[distill]\nlr = 0.5\naux = ideal\n");
  EXPECT_EQ(Config::with_defaults(j).to_text(), Config::with_defaults(t).to_text());
  EXPECT_EQ(Config::with_defaults(j).hash(), Config::with_defaults(t).hash());
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(Config::with_defaults(Config::parse_text("distill.learning_rate = 1\n")), ConfigError);
  EXPECT_THROW(Config::parse_text("no equals sign\n"), ConfigError);
  const auto c = Config::with_defaults(Config::parse_text("seed = abc\n[distill]\nlr = -\n"));
  EXPECT_THROW(c.integer("seed"), ConfigError);
  EXPECT_THROW(c.num("distill.lr"), ConfigError);
  EXPECT_THROW(Config::parse_json("[1, 2]"), ConfigError);
}

TEST(Config, TextRoundTrip) {
  const auto c = Config::with_defaults(Config::parse_text("seed = 11\n[sample]\nsigmas = 3,2,1\n"));
  const auto again = Config::with_defaults(Config::parse_text(c.to_text()));
  EXPECT_EQ(again.values(), c.values());
  EXPECT_EQ(again.num_list("sample.sigmas"), (std::vector<double>{3, 2, 1}));
}

TEST(Checkpoint, SceneRoundTripIsBitExact) {
  Rng rng(1);
  Scene s = Scene::grid({5, 7});
  s.theta = normal_vector(rng, 35);
  s.theta[3] = -0.0;
  s.theta[4] = 1e-310;
  s.stage = "geometry";
  const auto ckpt = scene_checkpoint(s, 0xabcdef, 42);
  const fs::path dir = scratch("ckpt");
  save_checkpoint(dir / "s.ckpt", ckpt);
  const auto back = load_checkpoint(dir / "s.ckpt");
  EXPECT_EQ(back, ckpt);
  const Scene s2 = scene_from_checkpoint(back);
  EXPECT_EQ(s2.shape, s.shape);
  EXPECT_EQ(s2.stage, "geometry");
  EXPECT_EQ(std::memcmp(s2.theta.data(), s.theta.data(), 35 * sizeof(double)), 0);
  EXPECT_EQ(encode_checkpoint(back), encode_checkpoint(ckpt));
}

TEST(Checkpoint, DenoiserRoundTrip) {
  MlpConfig c;
  c.dim = 2;
  c.hidden = {6, 4};
  c.n_labels = 3;
  c.pose_features = true;
  c.zero_init_output = false;
  Rng rng(2);
  const MlpDenoiser net(c, rng);
  const auto back = denoiser_from_checkpoint(decode_checkpoint(encode_checkpoint(denoiser_checkpoint(net, 1))));
  EXPECT_EQ(back->parameters(), net.parameters());
  EXPECT_EQ(back->config().hidden, c.hidden);
  const Vector x = normal_vector(rng, 2);
  const Condition cond{1, 0.5};
  EXPECT_EQ(back->forward(x, 0.3, cond), net.forward(x, 0.3, cond));
}

TEST(Checkpoint, RejectsCorruptInput) {
  const auto bytes = encode_checkpoint(scene_checkpoint(Scene::grid({2, 2}, 1.0), 0));
  EXPECT_THROW(decode_checkpoint("XXXX" + bytes.substr(4)), CheckpointError);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), CheckpointError);
  std::string newer = bytes;
  newer[4] = 9;
  EXPECT_THROW(decode_checkpoint(newer), CheckpointError);
  EXPECT_THROW(denoiser_from_checkpoint(decode_checkpoint(bytes)), CheckpointError);
}

TEST(Io, TrajectoryHeaderMatchesGolden) {
  EXPECT_EQ(read_text(kGolden / "trajectory_header.csv"), std::string(kTrajectoryHeader) + "\n");
  EXPECT_EQ(trajectory_csv({}), std::string(kTrajectoryHeader) + "\n");
}

TEST(Io, TrajectoryRoundTrip) {
  std::vector<TrajectoryRow> rows{{0, "nerf", 1.0, 80.0, 3, 0.1234567890123456789, 1e-300, 2, 0.5},
                                  {1, "nerf", 0.99875, 79.1, 0, 2.0 / 3.0, 5.5, 2, 0.0}};
  const auto back = parse_trajectory_csv(trajectory_csv(rows));
  EXPECT_EQ(back, rows);
  EXPECT_THROW(parse_trajectory_csv("step,loss\n1,2\n"), std::runtime_error);
}

TEST(Io, GoldenTrajectoryParses) {
  const auto rows = read_trajectory_csv(kGolden / "apfo_gauss1d_trajectory.csv");
  ASSERT_EQ(rows.size(), 240u);
  EXPECT_EQ(trajectory_csv(rows), read_text(kGolden / "apfo_gauss1d_trajectory.csv"));
}

TEST(Io, PointsPgmSummaryRoundTrip) {
  const fs::path dir = scratch("io");
  Rng rng(3);
  std::vector<Vector> pts;
  for (int i = 0; i < 10; ++i) pts.push_back(normal_vector(rng, 3));
  write_points_csv(dir / "p.csv", pts);
  EXPECT_EQ(read_points_csv(dir / "p.csv"), pts);

  Vector img(6);
  img << 0.0, 1.0, 0.5, 0.25, 0.75, 1.0;
  write_pgm(dir / "i.pgm", img, {2, 3});
  const auto pgm = read_pgm(dir / "i.pgm");
  EXPECT_EQ(pgm.shape, (GridShape{2, 3}));
  EXPECT_EQ(pgm.pixels, (std::vector<unsigned char>{0, 255, 128, 64, 191, 255}));

  const std::map<std::string, std::string> summary{{"a", "1"}, {"relative_error", "0.5"}};
  write_summary(dir / "s.txt", summary);
  EXPECT_EQ(read_summary(dir / "s.txt"), summary);

  const std::vector<Series> series{{"loss", {3.0, 2.0, 1.0}}};
  const std::string svg = svg_line_plot("t", series, true);
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_EQ(svg.find("<script"), std::string::npos);
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run_args({"distill"}).code, kUsageError);
  EXPECT_EQ(run_args({"distill", "--config", "/nonexistent/file.cfg"}).code, kUsageError);
  EXPECT_EQ(run_args({"frobnicate", "--config", "x"}).code, kUsageError);
  EXPECT_EQ(run_args({}).code, kUsageError);
  const fs::path dir = scratch("usage");
  EXPECT_EQ(run_args({"distill", "--config", write_config(dir, "m.cfg", "method = dreamfusion\n").string(), "--out",
                 (dir / "o").string()})
                .code,
            kUsageError);
  EXPECT_EQ(run_args({"distill", "--config", write_config(dir, "k.cfg", "bogus.key = 1\n").string()}).code, kUsageError);
}

TEST(Cli, BinaryExitCodeForMissingConfig) {
  const std::string cmd = std::string(FLOWDISTILL_BINARY) + " train-prior --config /nonexistent.cfg 2>/dev/null";
  const int status = std::system(cmd.c_str());
  ASSERT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), 2);
}

TEST(Cli, PrintConfig) {
  const auto defaults = run_args({"sample", "--print-config"});
  EXPECT_EQ(defaults.code, kOk);
  EXPECT_NE(defaults.out.find("window.preset"), std::string::npos);
  const fs::path dir = scratch("print");
  const auto resolved =
      run_args({"sample", "--config", write_config(dir, "c.cfg", "seed = 9\n").string(), "--seed", "12", "--print-config"});
  EXPECT_EQ(resolved.code, kOk);
  EXPECT_NE(resolved.out.find("seed = 12"), std::string::npos);
}

TEST(Cli, GoldenDistillRunIsByteIdentical) {
  const fs::path dir = scratch("golden");
  ASSERT_EQ(run_args({"distill", "--config", (kGolden / "apfo_gauss1d.cfg").string(), "--out", dir.string()}).code, kOk);
  EXPECT_EQ(read_text(dir / "trajectory.csv"), read_text(kGolden / "apfo_gauss1d_trajectory.csv"));
}

TEST(Cli, SeededRerunsAreByteIdentical) {
  const fs::path dir = scratch("rerun");
  const auto cfg = write_config(dir, "c.cfg", std::string(kSmallBenchmark) + "[distill]\naux = analytic\n");
  for (const char* sub : {"a", "b"})
    ASSERT_EQ(run_args({"distill", "--config", cfg.string(), "--out", (dir / sub).string()}).code, kOk);
  EXPECT_EQ(read_text(dir / "a" / "trajectory.csv"), read_text(dir / "b" / "trajectory.csv"));
  EXPECT_EQ(read_text(dir / "a" / "final.ckpt"), read_text(dir / "b" / "final.ckpt"));
  EXPECT_EQ(read_text(dir / "a" / "summary.txt"), read_text(dir / "b" / "summary.txt"));
}

TEST(Cli, DistillRowCountAndSummary) {
  const fs::path dir = scratch("rows");
  const auto cfg = write_config(dir, "c.cfg", std::string(kSmallBenchmark) + "[window]\npreset = nerf\n");
  ASSERT_EQ(run_args({"distill", "--config", cfg.string(), "--out", dir.string()}).code, kOk);
  EXPECT_EQ(read_trajectory_csv(dir / "trajectory.csv").size(), 640u * 5u);
  const auto summary = read_summary(dir / "summary.txt");
  EXPECT_EQ(summary.at("status"), "ok");
  EXPECT_LE(std::stod(summary.at("relative_error")), 0.03);
  const Scene final_scene = scene_from_checkpoint(load_checkpoint(dir / "final.ckpt"));
  EXPECT_EQ(final_scene.shape, (GridShape{8, 8}));
}

TEST(Cli, RuntimeFailureExitsOne) {
  const fs::path dir = scratch("fail");
  const auto cfg = write_config(dir, "c.cfg",
                                "method = sds\n" + std::string(kSmallBenchmark) + "[distill]\nlr = 1e308\nweighting = unit\n");
  const auto r = run_args({"distill", "--config", cfg.string(), "--out", dir.string()});
  EXPECT_EQ(r.code, kRuntimeFailure);
  EXPECT_NE(read_summary(dir / "summary.txt").at("status").find("failed"), std::string::npos);
}

TEST(Cli, SingleStagePipelineEqualsDistill) {
  const fs::path dir = scratch("single");
  const auto cfg = write_config(dir, "c.cfg",
                                std::string(kSmallBenchmark) + "[pipeline]\npreset = single\n[distill]\naux = analytic\n");
  ASSERT_EQ(run_args({"distill", "--config", cfg.string(), "--out", (dir / "d").string()}).code, kOk);
  ASSERT_EQ(run_args({"pipeline", "--config", cfg.string(), "--out", (dir / "p").string()}).code, kOk);
  EXPECT_EQ(read_text(dir / "d" / "trajectory.csv"), read_text(dir / "p" / "trajectory.csv"));
  EXPECT_EQ(scene_from_checkpoint(load_checkpoint(dir / "d" / "final.ckpt")).theta,
            scene_from_checkpoint(load_checkpoint(dir / "p" / "final.ckpt")).theta);
}

TEST(Cli, FourStagePipelineMarksStages) {
  const fs::path dir = scratch("four");
  const auto cfg = write_config(dir, "c.cfg",
                                "seed = 1\nreproducible = true\n[generator]\nheight = 16\nwidth = 16\nviews = 4\n"
                                "[pipeline]\ncoarse = 8\n[distill]\naux_pretrain_steps = 50\n"
                                "[emit]\nsvg = false\npgm = false\n");
  ASSERT_EQ(run_args({"pipeline", "--config", cfg.string(), "--out", dir.string()}).code, kOk);
  const auto rows = read_trajectory_csv(dir / "trajectory.csv");
  std::vector<std::string> order;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].step, i);
    if (order.empty() || order.back() != rows[i].stage) order.push_back(rows[i].stage);
  }
  EXPECT_EQ(order, (std::vector<std::string>{"nerf", "geometry", "texture", "refine"}));
  EXPECT_TRUE(fs::exists(dir / "stage0_nerf.ckpt"));
  EXPECT_EQ(scene_from_checkpoint(load_checkpoint(dir / "stage0_nerf.ckpt")).shape, (GridShape{8, 8}));
}

TEST(Cli, CompareIdenticalMethodsGiveIdenticalRows) {
  const fs::path dir = scratch("compare");
  const auto cfg = write_config(dir, "c.cfg",
                                std::string(kSmallBenchmark) + "[compare]\nmethods = vsd,vsd\nseeds = 2\n");
  ASSERT_EQ(run_args({"compare", "--config", cfg.string(), "--out", dir.string()}).code, kOk);
  const std::string table = read_text(dir / "compare.csv");
  std::vector<std::string> lines;
  std::istringstream in(table);
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  ASSERT_EQ(lines.size(), 5u);
  // Rows are ordered method-major; the two vsd entries per seed must agree.
  EXPECT_EQ(lines[1], lines[3]);
  EXPECT_EQ(lines[2], lines[4]);
}

TEST(Cli, TrainPriorIsSeededAndAccurate) {
  const fs::path dir = scratch("train");
  const auto cfg = write_config(dir, "c.cfg", "prior.preset = gauss1d\n[train]\nsteps = 400\neval_samples = 100\n");
  for (const char* sub : {"a", "b"})
    ASSERT_EQ(run_args({"train-prior", "--config", cfg.string(), "--out", (dir / sub).string()}).code, kOk);
  EXPECT_EQ(read_text(dir / "a" / "denoiser.ckpt"), read_text(dir / "b" / "denoiser.ckpt"));
  EXPECT_EQ(read_text(dir / "a" / "eval.csv").substr(0, 29), "sigma,median_relative_error\n0");
  EXPECT_LE(std::stod(read_summary(dir / "a" / "summary.txt").at("median_relative_error")), 0.05);
}

TEST(Cli, SampleFromTrainedCheckpoint) {
  const fs::path dir = scratch("sample_ckpt");
  const auto train = write_config(dir, "t.cfg", "prior.preset = gauss1d\n[train]\nsteps = 400\neval_samples = 50\n");
  ASSERT_EQ(run_args({"train-prior", "--config", train.string(), "--out", (dir / "t").string()}).code, kOk);
  const auto sample = write_config(dir, "s.cfg",
                                   "prior.preset = gauss1d\n[sample]\ncount = 256\nsteps = 50\ncheckpoint = " +
                                       (dir / "t" / "denoiser.ckpt").string() + "\n");
  ASSERT_EQ(run_args({"sample", "--config", sample.string(), "--out", (dir / "s").string()}).code, kOk);
  EXPECT_EQ(read_points_csv(dir / "s" / "samples.csv").size(), 256u);
}

TEST(Cli, SampleSingleLevelEchoesInput) {
  const fs::path dir = scratch("echo");
  const auto cfg = write_config(dir, "c.cfg", "prior.preset = gmm2d\n[sample]\nsigmas = 1.5\ncount = 3\n");
  ASSERT_EQ(run_args({"sample", "--config", cfg.string(), "--out", dir.string()}).code, kOk);
  const std::string traj = read_text(dir / "trajectory.csv");
  std::istringstream in(traj);
  std::string header, row, extra;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_FALSE(static_cast<bool>(std::getline(in, extra)));
  const auto samples = read_points_csv(dir / "samples.csv");
  EXPECT_EQ(row, "0,1.5," + format_double(samples[0][0]) + "," + format_double(samples[0][1]));
}

TEST(Cli, SampleGmmSlicedW2) {
  const fs::path dir = scratch("gmm");
  const auto cfg = write_config(dir, "c.cfg", "prior.preset = gmm2d\n[emit]\nsvg = false\n");
  ASSERT_EQ(run_args({"sample", "--config", cfg.string(), "--out", dir.string()}).code, kOk);
  EXPECT_LE(std::stod(read_summary(dir / "summary.txt").at("sliced_w2")), 0.05);
  EXPECT_EQ(read_points_csv(dir / "samples.csv").size(), 4096u);
}

TEST(Cli, SampleModes) {
  const fs::path dir = scratch("modes");
  for (const char* mode : {"sde", "sdedit"}) {
    const auto cfg = write_config(dir, std::string(mode) + ".cfg",
                                  std::string("prior.preset = gauss1d\n[sample]\ncount = 64\nsteps = 40\nmode = ") +
                                      mode + "\nsource = 0.25\n");
    ASSERT_EQ(run_args({"sample", "--config", cfg.string(), "--out", (dir / mode).string()}).code, kOk) << mode;
    EXPECT_EQ(read_points_csv(dir / mode / "samples.csv").size(), 64u);
  }
}

TEST(Cli, EvalSummarizesTrajectoryAndCheckpoint) {
  const fs::path dir = scratch("eval");
  const auto cfg = write_config(dir, "c.cfg", kSmallBenchmark);
  ASSERT_EQ(run_args({"distill", "--config", cfg.string(), "--out", (dir / "d").string()}).code, kOk);
  const auto eval = write_config(dir, "e.cfg",
                                 "[eval]\ntrajectory = " + (dir / "d" / "trajectory.csv").string() +
                                     "\ncheckpoint = " + (dir / "d" / "final.ckpt").string() + "\n[emit]\npgm = false\n");
  ASSERT_EQ(run_args({"eval", "--config", eval.string(), "--out", (dir / "e").string()}).code, kOk);
  const auto s = read_summary(dir / "e" / "summary.txt");
  const auto d = read_summary(dir / "d" / "summary.txt");
  EXPECT_EQ(s.at("rows"), d.at("rows"));
  EXPECT_EQ(s.at("loss_spearman_rho"), d.at("loss_spearman_rho"));
  EXPECT_EQ(s.at("denoiser_evals"), d.at("denoiser_evals"));
  EXPECT_EQ(run_args({"eval", "--config", write_config(dir, "none.cfg", "seed = 1\n").string(), "--out",
                 (dir / "n").string()})
                .code,
            kUsageError);
}
