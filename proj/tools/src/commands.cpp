#include "flowdistill/cli/commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <ostream>

#include "CLI11.hpp"
#include "flowdistill/cli/checkpoint.hpp"
#include "flowdistill/cli/experiments.hpp"
#include "flowdistill/cli/io.hpp"
#include "flowdistill/dsm.hpp"
#include "flowdistill/error.hpp"
#include "flowdistill/parallel.hpp"
#include "flowdistill/pipeline.hpp"
#include "flowdistill/sampler.hpp"

namespace flowdistill::cli {

namespace fs = std::filesystem;

namespace {

using Summary = std::map<std::string, std::string>;

void finish(const fs::path& out, const Summary& summary, std::ostream& log) {
  write_summary(out / "summary.txt", summary);
  for (const auto& [k, v] : summary) log << k << "=" << v << "\n";
}

std::uint64_t seed_of(const Config& cfg) { return static_cast<std::uint64_t>(cfg.integer("seed")); }

GaussianMixturePrior point_prior(const Config& cfg) {
  const std::string preset = cfg.str("prior.preset");
  const double s = resolved_prior_scale(cfg);
  if (preset == "gauss1d") return gauss1d_prior(cfg.num("prior.mean"), s);
  if (preset == "gmm2d") return gmm2d_prior(cfg.num("prior.separation"), s);
  throw ConfigError("prior.preset '" + preset + "' is not a point-cloud prior (use gauss1d or gmm2d)");
}

GridShape grid_of(const Config& cfg) { return {cfg.count("generator.height"), cfg.count("generator.width")}; }

std::vector<double> column(std::span<const TrajectoryRow> rows, double TrajectoryRow::*field) {
  std::vector<double> out;
  for (const auto& r : rows) out.push_back(r.*field);
  return out;
}

void add_trend(Summary& s, const std::string& prefix, const std::vector<double>& series) {
  if (series.size() < 3) return;
  const auto t = trend_stats(series);
  s[prefix + "_spearman_rho"] = format_double(t.spearman_rho);
  s[prefix + "_fraction_increasing"] = format_double(t.fraction_increasing);
}

// A distillation problem assembled from the prior / generator sections.
struct Problem {
  std::unique_ptr<Generator> generator;
  Scene initial;
  std::vector<ViewTarget> targets;
  std::optional<Scene> truth;
};

Problem make_problem(const Config& cfg) {
  Problem p;
  const std::string preset = cfg.str("prior.preset");
  const std::string kind = cfg.str("generator.kind");
  if (preset == "benchmark" || preset == "labels") {
    if (kind != "multiview") throw ConfigError(preset + " preset needs generator.kind = multiview");
    const GridShape shape = grid_of(cfg);
    const double s = resolved_prior_scale(cfg);
    if (preset == "benchmark") {
      auto b = make_grid_benchmark(shape, cfg.count("generator.views"), s);
      p.generator = std::move(b.generator);
      p.targets = std::move(b.targets);
      p.truth = std::move(b.truth);
    } else {
      auto b = make_label_benchmark(shape, cfg.count("generator.views"), cfg.count("prior.labels"), s);
      const std::string label = cfg.str("distill.label");
      const auto it = std::find(b.labels.begin(), b.labels.end(), label);
      if (it == b.labels.end()) throw ConfigError("labels preset needs distill.label set to one of label0..");
      p.truth = b.truths[static_cast<std::size_t>(it - b.labels.begin())];
      p.generator = std::move(b.generator);
      p.targets = std::move(b.targets);
    }
    p.initial = Scene::grid(shape);
    return p;
  }
  const auto prior = point_prior(cfg);
  const auto set = single_prior_set(prior);
  std::vector<CameraPose> poses;
  if (kind == "identity") {
    p.generator = std::make_unique<IdentityGenerator>(prior.dim());
    poses.push_back({});
    p.initial = Scene::flat(Vector::Zero(static_cast<Eigen::Index>(prior.dim())));
  } else if (kind == "particle") {
    const std::size_t n = cfg.count("generator.particles");
    p.generator = std::make_unique<ParticleGenerator>(n, prior.dim());
    for (std::size_t i = 0; i < n; ++i) poses.push_back({0.0, 0.0, 0.0, i});
    Rng rng = make_rng(seed_of(cfg), 0, 99);
    p.initial = Scene::flat(normal_vector(rng, static_cast<Eigen::Index>(n * prior.dim())));
  } else {
    throw ConfigError("generator.kind '" + kind + "' does not fit a point-cloud prior (use identity or particle)");
  }
  p.targets = shared_prior_targets(poses, set);
  return p;
}

void emit_record(const Config& cfg, const fs::path& out, const TrajectoryRecord& record, const Problem& problem,
                 Summary& summary) {
  if (cfg.flag("emit.csv")) write_trajectory_csv(out / "trajectory.csv", record.rows);
  if (cfg.flag("emit.checkpoints"))
    save_checkpoint(out / "final.ckpt", scene_checkpoint(record.final_scene, cfg.hash(), record.rows.size()));
  if (cfg.flag("emit.svg") && !record.rows.empty()) {
    const std::vector<Series> loss{{"loss", column(record.rows, &TrajectoryRow::loss)}};
    const std::vector<Series> grad{{"grad_norm", column(record.rows, &TrajectoryRow::grad_norm)}};
    write_svg(out / "loss.svg", svg_line_plot("loss per update", loss, true));
    write_svg(out / "grad_norm.svg", svg_line_plot("gradient norm per update", grad, true));
  }
  if (cfg.flag("emit.pgm") && record.final_scene.is_grid()) {
    write_pgm(out / "final.pgm", record.final_scene.theta, record.final_scene.shape);
    if (problem.truth) write_pgm(out / "truth.pgm", problem.truth->theta, problem.truth->shape);
  }
  summary["rows"] = std::to_string(record.rows.size());
  summary["denoiser_evals"] = std::to_string(record.total_evals());
  if (!record.rows.empty()) {
    summary["initial_loss"] = format_double(record.rows.front().loss);
    summary["final_loss"] = format_double(record.rows.back().loss);
  }
  add_trend(summary, "loss", column(record.rows, &TrajectoryRow::loss));
  add_trend(summary, "grad_norm", column(record.rows, &TrajectoryRow::grad_norm));
  if (problem.truth && problem.truth->theta.size() == record.final_scene.theta.size()) {
    const auto e = scene_error(record.final_scene.theta, problem.truth->theta);
    summary["relative_error"] = format_double(e.relative_l2);
    summary["psnr_db"] = std::isinf(e.psnr_db) ? "inf" : format_double(e.psnr_db);
  }
  summary["status"] = record.ok() ? "ok" : "failed: " + *record.failure;
}

}  // namespace

int cmd_train_prior(const Config& cfg, const fs::path& out, std::ostream& log) {
  const auto prior = point_prior(cfg);
  TrainConfig tc;
  tc.net.dim = prior.dim();
  tc.net.hidden.clear();
  for (double h : cfg.num_list("train.hidden")) {
    if (!(h >= 1.0) || h != std::floor(h)) throw ConfigError("train.hidden must list positive integers");
    tc.net.hidden.push_back(static_cast<std::size_t>(h));
  }
  tc.net.n_frequencies = cfg.count("train.frequencies");
  tc.dsm.weighting = parse_weighting(cfg.str("train.weighting"));
  tc.dsm.batch_size = cfg.count("train.batch");
  tc.dsm.adam.learning_rate = cfg.num("train.lr");
  tc.dsm.sigma_min = cfg.num("schedule.sigma_min");
  tc.dsm.sigma_max = cfg.num("schedule.sigma_max");
  tc.seed = seed_of(cfg);
  const std::size_t steps = cfg.count("train.steps");
  const std::size_t every = std::max<std::size_t>(1, cfg.count("train.log_every"));

  std::string train_csv = "step,loss\n";
  const auto net = std::make_shared<MlpDenoiser>(train_prior_net(prior, steps, tc, [&](std::size_t step, double loss) {
    if (step % every == 0 || step + 1 == steps) train_csv += std::to_string(step) + "," + format_double(loss) + "\n";
  }));

  const auto sigmas = log_spaced(0.01, 10.0, std::max<std::size_t>(1, cfg.count("train.eval_sigmas")));
  const NetDenoiser model(net);
  const auto err = denoiser_error(model, prior, sigmas, std::max<std::size_t>(1, cfg.count("train.eval_samples")),
                                  derive_seed(tc.seed, 3));
  std::string eval_csv = "sigma,median_relative_error\n";
  for (std::size_t i = 0; i < err.sigmas.size(); ++i)
    eval_csv += format_double(err.sigmas[i]) + "," + format_double(err.median_relative[i]) + "\n";

  if (cfg.flag("emit.csv")) {
    write_text(out / "train.csv", train_csv);
    write_text(out / "eval.csv", eval_csv);
  }
  save_checkpoint(out / "denoiser.ckpt", denoiser_checkpoint(*net, cfg.hash(), steps));
  Summary s{{"experiment", cfg.str("experiment")},
            {"command", "train-prior"},
            {"steps", std::to_string(steps)},
            {"parameters", std::to_string(net->num_parameters())},
            {"median_relative_error", format_double(err.median_relative_overall)},
            {"worst_sigma_median_relative_error",
             format_double(*std::max_element(err.median_relative.begin(), err.median_relative.end()))}};
  finish(out, s, log);
  return kOk;
}

int cmd_sample(const Config& cfg, const fs::path& out, std::ostream& log) {
  const auto prior = point_prior(cfg);
  const auto set = single_prior_set(prior);
  const std::uint64_t seed = seed_of(cfg);
  NoiseSchedule schedule = schedule_from(cfg);
  schedule.n_steps = cfg.count("sample.steps");
  schedule.validate();

  OdeRunConfig run;
  run.sigmas = cfg.str("sample.sigmas").empty() ? sampling_grid(schedule) : cfg.num_list("sample.sigmas");
  run.solver = parse_solver(cfg.str("sample.solver"));
  run.guidance = cfg.num("distill.guidance");
  if (const auto label = cfg.str("distill.label"); !label.empty()) run.label = label;
  run.seed = seed;
  run.validate();

  std::unique_ptr<Denoiser> denoiser;
  if (const auto path = cfg.str("sample.checkpoint"); !path.empty()) {
    auto net = denoiser_from_checkpoint(load_checkpoint(path));
    if (net->dim() != prior.dim()) throw ConfigError("sample.checkpoint dimension does not match the prior");
    denoiser = std::make_unique<NetDenoiser>(std::move(net));
  } else {
    denoiser = make_run_denoiser(set, run);
  }

  const std::string mode = cfg.str("sample.mode");
  const std::size_t count = cfg.count("sample.count");
  if (count == 0) throw ConfigError("sample.count must be positive");
  const auto dim = static_cast<Eigen::Index>(prior.dim());
  Vector source = Vector::Zero(dim);
  if (mode == "sdedit" && !cfg.str("sample.source").empty()) {
    const auto v = cfg.num_list("sample.source");
    if (static_cast<Eigen::Index>(v.size()) != dim) throw ConfigError("sample.source has the wrong dimension");
    source = Eigen::Map<const Vector>(v.data(), dim);
  }
  if (mode != "ode" && mode != "sde" && mode != "sdedit") throw ConfigError("sample.mode must be ode, sde or sdedit");
  const double eta = cfg.num("sample.eta");
  const double t_start = cfg.num("sample.t_start");

  std::vector<Vector> samples(count);
  std::vector<Vector> trajectory;
  parallel_for(count, [&](std::size_t i) {
    Rng init = make_rng(seed, i, 1);
    Rng noise = make_rng(seed, i, 2);
    if (mode == "sdedit") {
      samples[i] = sdedit_translate(*denoiser, source, t_start, schedule, run.solver, noise);
      return;
    }
    const Vector x = normal_vector(init, dim, run.sigmas.front());
    if (mode == "ode") {
      auto path = pf_ode_sample(*denoiser, run, x);
      samples[i] = path.back();
      if (i == 0) trajectory = std::move(path);
    } else {
      samples[i] = reverse_sde_sample(*denoiser, run, noise, x, eta);
    }
  });

  Rng direct_rng = make_rng(seed, 0, 3);
  const auto direct = prior.sample(direct_rng, count);
  Summary s{{"experiment", cfg.str("experiment")},
            {"command", "sample"},
            {"mode", mode},
            {"count", std::to_string(count)},
            {"grid_levels", std::to_string(run.sigmas.size())}};
  if (mode != "sdedit")
    s["sliced_w2"] = format_double(sliced_w2(samples, direct, cfg.count("metrics.projections"), seed));
  Vector mean = Vector::Zero(dim);
  for (const auto& x : samples) mean += x;
  mean /= static_cast<double>(count);
  for (Eigen::Index j = 0; j < dim; ++j) s["mean_x" + std::to_string(j)] = format_double(mean[j]);

  if (cfg.flag("emit.csv")) {
    write_points_csv(out / "samples.csv", samples);
    write_points_csv(out / "direct.csv", direct);
    if (!trajectory.empty()) {
      std::string csv = "step,sigma";
      for (Eigen::Index j = 0; j < dim; ++j) csv += ",x" + std::to_string(j);
      csv += "\n";
      for (std::size_t k = 0; k < trajectory.size(); ++k) {
        csv += std::to_string(k) + "," + format_double(run.sigmas[k]);
        for (Eigen::Index j = 0; j < dim; ++j) csv += "," + format_double(trajectory[k][j]);
        csv += "\n";
      }
      write_text(out / "trajectory.csv", csv);
    }
  }
  if (cfg.flag("emit.svg") && !trajectory.empty()) {
    std::vector<Series> series;
    for (Eigen::Index j = 0; j < dim; ++j) {
      Series sr{"x" + std::to_string(j), {}};
      for (const auto& x : trajectory) sr.y.push_back(x[j]);
      series.push_back(std::move(sr));
    }
    write_svg(out / "trajectory.svg", svg_line_plot("sample 0 trajectory", series, false));
  }
  finish(out, s, log);
  return kOk;
}

int cmd_distill(const Config& cfg, const fs::path& out, std::ostream& log) {
  const DistillConfig dc = distill_config_from(cfg);
  const Problem problem = make_problem(cfg);
  const auto record =
      distill_on(*problem.generator, problem.initial, problem.targets, dc, cfg.count("distill.aux_pretrain_steps"));
  Summary s{{"experiment", cfg.str("experiment")},
            {"command", "distill"},
            {"method", std::string(to_string(dc.method))},
            {"planned_updates", std::to_string(planned_updates(dc))}};
  emit_record(cfg, out, record, problem, s);
  finish(out, s, log);
  return record.ok() ? kOk : kRuntimeFailure;
}

int cmd_pipeline(const Config& cfg, const fs::path& out, std::ostream& log) {
  if (cfg.str("prior.preset") != "benchmark") throw ConfigError("pipeline runs on the benchmark preset");
  const DistillConfig base = distill_config_from(cfg);
  const GridShape fine = grid_of(cfg);
  const double scale = resolved_prior_scale(cfg);
  StagePlan plan;
  const std::string preset = cfg.str("pipeline.preset");
  if (preset == "four-stage") {
    const std::size_t c = cfg.count("pipeline.coarse");
    plan = preset_plan({c, c}, fine);
  } else if (preset == "single") {
    StageSpec stage;
    stage.name = window_name(cfg);
    stage.window = base.window;
    stage.resolution = fine;
    stage.aux = base.aux;
    stage.prior_scale = scale;
    stage.lora_pretrain_steps = cfg.count("distill.aux_pretrain_steps");
    plan.stages.push_back(stage);
  } else {
    throw ConfigError("pipeline.preset must be four-stage or single");
  }

  const Scene truth = benchmark_truth(fine);
  const auto poses = uniform_poses(cfg.count("generator.views"));
  const auto result = run_pipeline(plan, benchmark_prior_factory(truth, poses), base, base.seed);

  std::vector<TrajectoryRow> rows;
  for (const auto& r : result.records) rows.insert(rows.end(), r.rows.begin(), r.rows.end());
  if (cfg.flag("emit.csv")) write_trajectory_csv(out / "trajectory.csv", rows);
  if (cfg.flag("emit.checkpoints")) {
    for (std::size_t k = 0; k < result.stage_scenes.size(); ++k)
      save_checkpoint(out / ("stage" + std::to_string(k) + "_" + plan.stages[k].name + ".ckpt"),
                      scene_checkpoint(result.stage_scenes[k], cfg.hash(), k));
    save_checkpoint(out / "final.ckpt", scene_checkpoint(result.final_scene, cfg.hash(), rows.size()));
  }
  if (cfg.flag("emit.pgm")) {
    write_pgm(out / "final.pgm", result.final_scene.theta, result.final_scene.shape);
    write_pgm(out / "truth.pgm", truth.theta, truth.shape);
  }
  if (cfg.flag("emit.svg") && !rows.empty())
    write_svg(out / "loss.svg",
              svg_line_plot("loss per update", std::vector<Series>{{"loss", column(rows, &TrajectoryRow::loss)}}, true));

  Summary s{{"experiment", cfg.str("experiment")},
            {"command", "pipeline"},
            {"stages", std::to_string(plan.stages.size())},
            {"stages_completed", std::to_string(result.stage_scenes.size())},
            {"rows", std::to_string(rows.size())}};
  std::size_t evals = 0;
  for (const auto& r : result.records) evals += r.total_evals();
  s["denoiser_evals"] = std::to_string(evals);
  for (std::size_t k = 0; k < result.records.size(); ++k)
    s["stage" + std::to_string(k) + "_" + plan.stages[k].name + "_rows"] = std::to_string(result.records[k].rows.size());
  if (result.final_scene.shape == truth.shape) {
    const auto e = scene_error(result.final_scene.theta, truth.theta);
    s["relative_error"] = format_double(e.relative_l2);
    s["psnr_db"] = std::isinf(e.psnr_db) ? "inf" : format_double(e.psnr_db);
  }
  s["status"] = result.ok() ? "ok" : "failed: " + *result.failure;
  finish(out, s, log);
  return result.ok() ? kOk : kRuntimeFailure;
}

int cmd_compare(const Config& cfg, const fs::path& out, std::ostream& log) {
  if (cfg.str("prior.preset") != "benchmark") throw ConfigError("compare runs on the benchmark preset");
  const DistillConfig base = distill_config_from(cfg);
  const auto methods = cfg.list("compare.methods");
  if (methods.size() < 2) throw ConfigError("compare.methods needs at least two entries");
  for (const auto& m : methods)
    if (m != "sds" && m != "vsd" && m != "vsd-anneal" && m != "apfo")
      throw ConfigError("unknown compare method '" + m + "'");
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < cfg.count("compare.seeds"); ++i) seeds.push_back(base.seed + i);
  OptimizerConfig score_opt;
  score_opt.kind = parse_inner_optimizer(cfg.str("compare.vsd_optimizer"));
  score_opt.learning_rate = cfg.num("compare.vsd_lr");

  const Benchmark bench = make_grid_benchmark(grid_of(cfg), cfg.count("generator.views"), resolved_prior_scale(cfg));
  const auto runs = run_compare(bench, base, methods, seeds, score_opt, cfg.count("distill.aux_pretrain_steps"));

  std::string table = "method,seed,loss_spearman_rho,loss_fraction_increasing,grad_spearman_rho,initial_loss,"
                      "final_loss,denoiser_evals,relative_error\n";
  std::map<std::string, std::vector<double>> rhos;
  std::vector<Series> overlay;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& r = runs[i];
    const double first = r.record.rows.empty() ? 0.0 : r.record.rows.front().loss;
    const double last = r.record.rows.empty() ? 0.0 : r.record.rows.back().loss;
    table += r.method + "," + std::to_string(r.seed) + "," + format_double(r.loss_trend.spearman_rho) + "," +
             format_double(r.loss_trend.fraction_increasing) + "," + format_double(r.grad_trend.spearman_rho) + "," +
             format_double(first) + "," + format_double(last) + "," + std::to_string(r.record.total_evals()) + "," +
             format_double(r.relative_error) + "\n";
    rhos[r.method].push_back(r.loss_trend.spearman_rho);
    if (cfg.flag("emit.csv"))
      write_trajectory_csv(out / ("compare_" + r.method + "_seed" + std::to_string(r.seed) + ".csv"), r.record.rows);
    if (r.seed == seeds.front()) overlay.push_back({r.method, column(r.record.rows, &TrajectoryRow::loss)});
  }
  if (cfg.flag("emit.csv")) write_text(out / "compare.csv", table);
  if (cfg.flag("emit.svg")) write_svg(out / "compare_loss.svg", svg_line_plot("loss per update, first seed", overlay, true));

  Summary s{{"experiment", cfg.str("experiment")},
            {"command", "compare"},
            {"seeds", std::to_string(seeds.size())},
            {"updates_per_run", std::to_string(runs.front().record.rows.size())}};
  for (const auto& [m, v] : rhos) s["median_rho_" + m] = format_double(median(v));
  if (rhos.count("apfo") && rhos.count("vsd"))
    s["rho_gap_vsd_minus_apfo"] = format_double(median(rhos["vsd"]) - median(rhos["apfo"]));
  finish(out, s, log);
  return kOk;
}

int cmd_eval(const Config& cfg, const fs::path& out, std::ostream& log) {
  Summary s{{"experiment", cfg.str("experiment")}, {"command", "eval"}};
  bool did = false;
  if (const auto path = cfg.str("eval.trajectory"); !path.empty()) {
    const auto rows = read_trajectory_csv(path);
    s["rows"] = std::to_string(rows.size());
    std::size_t evals = 0;
    for (const auto& r : rows) evals += r.denoiser_evals;
    s["denoiser_evals"] = std::to_string(evals);
    add_trend(s, "loss", column(rows, &TrajectoryRow::loss));
    add_trend(s, "grad_norm", column(rows, &TrajectoryRow::grad_norm));
    did = true;
  }
  if (const auto path = cfg.str("eval.checkpoint"); !path.empty()) {
    const Scene scene = scene_from_checkpoint(load_checkpoint(path));
    if (cfg.str("prior.preset") == "benchmark" && scene.is_grid()) {
      const Scene truth = benchmark_truth(scene.shape);
      const auto e = scene_error(scene.theta, truth.theta);
      s["relative_error"] = format_double(e.relative_l2);
      s["psnr_db"] = std::isinf(e.psnr_db) ? "inf" : format_double(e.psnr_db);
    }
    if (cfg.flag("emit.pgm") && scene.is_grid()) write_pgm(out / "scene.pgm", scene.theta, scene.shape);
    did = true;
  }
  if (!did && cfg.str("prior.preset") == "labels") {
    const auto bench = make_label_benchmark(grid_of(cfg), cfg.count("generator.views"), cfg.count("prior.labels"),
                                            resolved_prior_scale(cfg));
    const auto result = run_retrieval(bench, distill_config_from(cfg), cfg.count("distill.aux_pretrain_steps"));
    s["retrieval_precision"] = format_double(result.precision);
    s["labels"] = std::to_string(bench.labels.size());
    did = true;
  }
  if (!did) throw ConfigError("eval needs eval.trajectory, eval.checkpoint or the labels preset");
  finish(out, s, log);
  return kOk;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"flowdistill: scheduled probability-flow distillation experiments", "flowdistill"};
  app.require_subcommand(1);
  std::string config_path;
  std::optional<long long> seed;
  std::string out_dir;
  bool print_config = false;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"train-prior", "fit a neural denoiser to an analytic prior"},
      {"sample", "PF-ODE / reverse-SDE / SDEdit sampling"},
      {"distill", "optimize a scene with sds, vsd or apfo"},
      {"pipeline", "multi-stage coarse-to-fine run"},
      {"compare", "matched-budget method comparison over seeds"},
      {"eval", "summarize trajectories, score checkpoints, retrieval"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "config file (key = value text or JSON)");
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_flag("--print-config", print_config, "print the resolved configuration and exit");
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << app.help();
    return kUsageError;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  Config cfg;
  try {
    Config overrides;
    if (!config_path.empty())
      overrides = Config::load(config_path);
    else if (!print_config)
      throw ConfigError("--config is required");
    if (seed) overrides.set("seed", std::to_string(*seed));
    if (!out_dir.empty()) overrides.set("out", out_dir);
    cfg = Config::with_defaults(overrides);
    cfg.integer("seed");
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kUsageError;
  }
  if (print_config) {
    out << (config_path.empty() ? schema_text() : cfg.to_text());
    return kOk;
  }

  try {
    const fs::path dir = cfg.str("out");
    fs::create_directories(dir);
    if (command == "train-prior") return cmd_train_prior(cfg, dir, out);
    if (command == "sample") return cmd_sample(cfg, dir, out);
    if (command == "distill") return cmd_distill(cfg, dir, out);
    if (command == "pipeline") return cmd_pipeline(cfg, dir, out);
    if (command == "compare") return cmd_compare(cfg, dir, out);
    return cmd_eval(cfg, dir, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kUsageError;
  } catch (const ParameterError& e) {
    err << "config error: " << e.what() << "\n";
    return kUsageError;
  } catch (const NumericalError& e) {
    err << "runtime failure at step " << e.step() << ": " << e.what() << "\n";
    return kRuntimeFailure;
  } catch (const std::exception& e) {
    err << "runtime failure: " << e.what() << "\n";
    return kRuntimeFailure;
  }
}

}  // namespace flowdistill::cli
