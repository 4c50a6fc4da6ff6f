// Harness tests: benchmark task construction, matrix enumeration, the
// parallel runner's determinism and failure isolation, and report
// serialization round trips.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "latentbridge/latentbridge.hpp"

namespace lb = latentbridge;
namespace fs = std::filesystem;

namespace {

lb::MixtureVideoWorld small_world() {
    return lb::make_moving_blob_world(3, 3, 8, 8, 0.05, 5).world;
}

// Fast end-to-end matrix config: tiny world, short schedule, few steps.
lb::RunConfig tiny_config() {
    lb::RunConfig cfg;
    cfg.schedule.t_train = 80;
    cfg.world.k = 2;
    cfg.world.frames = 2;
    cfg.world.height = 4;
    cfg.world.width = 4;
    cfg.world.sigma = 0.1;
    cfg.world.seed = 11;
    cfg.ddim.t_infer = 8;
    cfg.ddim.invert_mode = lb::InvertMode::fixed_point;
    cfg.ablation.tasks = {"generation"};
    cfg.ablation.strategies = {"Sequential"};
    cfg.ablation.alphas = {0.25};
    cfg.seeds = {3};
    return cfg;
}

// Squared distance between a clip and one component's mean stack.
double dist2_to_component(const lb::LatentClip& clip, const lb::MixtureVideoWorld& world, int k) {
    const auto& mu = world.components[size_t(k)].frame_means;
    double d2 = 0.0;
    for (size_t i = 0; i < clip.values.size(); ++i) {
        const double d = clip.values[i] - mu[i];
        d2 += d * d;
    }
    return d2;
}

int nearest_component(const lb::LatentClip& clip, const lb::MixtureVideoWorld& world) {
    int best = 0;
    double best_d2 = dist2_to_component(clip, world, 0);
    for (int k = 1; k < int(world.components.size()); ++k) {
        const double d2 = dist2_to_component(clip, world, k);
        if (d2 < best_d2) {
            best_d2 = d2;
            best = k;
        }
    }
    return best;
}

fs::path temp_dir(const std::string& tag) {
    const fs::path dir = fs::temp_directory_path() / ("lb_harness_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string read_all(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// Scoped LATENT_BRIDGE_THREADS override.
struct ThreadEnv {
    std::string saved;
    bool had = false;

    explicit ThreadEnv(const char* value) {
        if (const char* old = std::getenv("LATENT_BRIDGE_THREADS")) {
            saved = old;
            had = true;
        }
        setenv("LATENT_BRIDGE_THREADS", value, 1);
    }
    ~ThreadEnv() {
        if (had) {
            setenv("LATENT_BRIDGE_THREADS", saved.c_str(), 1);
        } else {
            unsetenv("LATENT_BRIDGE_THREADS");
        }
    }
};

void expect_metrics_eq(const lb::ClipMetrics& a, const lb::ClipMetrics& b) {
    EXPECT_EQ(a.frame_consistency, b.frame_consistency);
    EXPECT_EQ(a.switch_rate, b.switch_rate);
    EXPECT_EQ(a.control_match_error, b.control_match_error);
    EXPECT_EQ(a.latent_corr, b.latent_corr);
    EXPECT_EQ(a.latent_corr_degenerate, b.latent_corr_degenerate);
    EXPECT_EQ(a.gaussianity.mean_abs, b.gaussianity.mean_abs);
    EXPECT_EQ(a.gaussianity.var_dev, b.gaussianity.var_dev);
    EXPECT_EQ(a.gaussianity.cov_offdiag, b.gaussianity.cov_offdiag);
}

}  // namespace

TEST(TaskIds, CellIdsFollowEnumOrder) {
    EXPECT_EQ(lb::task_cell_id(lb::TaskKind::generation), 0u);
    EXPECT_EQ(lb::task_cell_id(lb::TaskKind::control), 1u);
    EXPECT_EQ(lb::task_cell_id(lb::TaskKind::edit), 2u);
    EXPECT_EQ(lb::task_cell_id(lb::TaskKind::inpaint), 3u);
    EXPECT_EQ(lb::task_cell_id(lb::TaskKind::outpaint), 4u);
}

TEST(TaskIds, DefaultAlphasPerTask) {
    EXPECT_EQ(lb::default_task_alphas(lb::TaskKind::generation), std::vector<double>{0.25});
    EXPECT_EQ(lb::default_task_alphas(lb::TaskKind::control), std::vector<double>{1.0});
    EXPECT_EQ(lb::default_task_alphas(lb::TaskKind::edit), (std::vector<double>{1.0, 0.25}));
    EXPECT_EQ(lb::default_task_alphas(lb::TaskKind::inpaint), std::vector<double>{0.1});
    EXPECT_EQ(lb::default_task_alphas(lb::TaskKind::outpaint), std::vector<double>{0.1});
}

TEST(BuildTask, DeterministicPerKindAndSeed) {
    const lb::MixtureVideoWorld world = small_world();
    for (const lb::TaskKind kind :
         {lb::TaskKind::generation, lb::TaskKind::control, lb::TaskKind::edit,
          lb::TaskKind::inpaint, lb::TaskKind::outpaint}) {
        const lb::Task a = lb::build_benchmark_task(kind, world, 42);
        const lb::Task b = lb::build_benchmark_task(kind, world, 42);
        EXPECT_EQ(a.kind, kind);
        EXPECT_TRUE(a.idm_cond == b.idm_cond);
        EXPECT_TRUE(a.vdm_cond == b.vdm_cond);
        EXPECT_EQ(a.source.has_value(), b.source.has_value());
        if (a.source.has_value()) EXPECT_EQ(a.source->values, b.source->values);
        EXPECT_EQ(a.mask_known, b.mask_known);
    }
    // Content randomness moves with the seed.
    const lb::Task c1 = lb::build_benchmark_task(lb::TaskKind::control, world, 1);
    const lb::Task c2 = lb::build_benchmark_task(lb::TaskKind::control, world, 2);
    EXPECT_FALSE(c1.idm_cond == c2.idm_cond);
}

TEST(BuildTask, GenerationIsUnconditional) {
    const lb::MixtureVideoWorld world = small_world();
    const lb::Task task = lb::build_benchmark_task(lb::TaskKind::generation, world, 9);
    EXPECT_EQ(task.idm_cond.kind, lb::Condition::Kind::null_cond);
    EXPECT_EQ(task.vdm_cond.kind, lb::Condition::Kind::null_cond);
    EXPECT_FALSE(task.source.has_value());
    EXPECT_TRUE(task.mask_known.empty());
}

TEST(BuildTask, ControlTargetsTrackOneComponent) {
    const lb::MixtureVideoWorld world = small_world();
    for (uint64_t seed : {1ull, 2ull, 3ull, 4ull}) {
        const lb::Task task = lb::build_benchmark_task(lb::TaskKind::control, world, seed);
        ASSERT_EQ(task.idm_cond.kind, lb::Condition::Kind::control);
        ASSERT_EQ(task.vdm_cond.kind, lb::Condition::Kind::component);
        const int k_star = task.vdm_cond.component_index;
        ASSERT_GE(k_star, 0);
        ASSERT_LT(k_star, int(world.components.size()));

        const lb::LatentClip& targets = task.idm_cond.control_targets;
        ASSERT_EQ(targets.frames, world.frames);
        ASSERT_EQ(targets.height, world.height);
        ASSERT_EQ(targets.width, world.width);

        // Targets are the chosen component's means plus small jitter: that
        // component must be the nearest one, with a bounded per-coordinate gap.
        EXPECT_EQ(nearest_component(targets, world), k_star);
        const auto& mu = world.components[size_t(k_star)].frame_means;
        double max_gap = 0.0;
        for (size_t i = 0; i < targets.values.size(); ++i) {
            max_gap = std::max(max_gap, std::fabs(targets.values[i] - mu[i]));
        }
        EXPECT_GT(max_gap, 0.0);
        EXPECT_LT(max_gap, 1.5);
    }
}

TEST(BuildTask, EditPairsSourceWithNextComponent) {
    const lb::MixtureVideoWorld world = small_world();
    const int k_count = int(world.components.size());
    for (uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull}) {
        const lb::Task task = lb::build_benchmark_task(lb::TaskKind::edit, world, seed);
        ASSERT_EQ(task.idm_cond.kind, lb::Condition::Kind::edit);
        ASSERT_EQ(task.vdm_cond.kind, lb::Condition::Kind::component);
        ASSERT_TRUE(task.source.has_value());
        EXPECT_EQ(task.idm_cond.component_index, task.vdm_cond.component_index);
        EXPECT_EQ(task.idm_cond.source.values, task.source->values);

        const int k_source = nearest_component(*task.source, world);
        EXPECT_EQ(task.vdm_cond.component_index, (k_source + 1) % k_count);
    }
}

TEST(BuildTask, MaskGeometry) {
    const lb::MixtureVideoWorld world = small_world();
    const lb::Task in = lb::build_benchmark_task(lb::TaskKind::inpaint, world, 6);
    const lb::Task out = lb::build_benchmark_task(lb::TaskKind::outpaint, world, 6);
    const int cols = std::max(1, world.width / 4);

    ASSERT_EQ(int(in.mask_known.size()), world.clip_dim());
    ASSERT_EQ(int(out.mask_known.size()), world.clip_dim());
    size_t idx = 0;
    for (int f = 0; f < world.frames; ++f) {
        for (int y = 0; y < world.height; ++y) {
            for (int x = 0; x < world.width; ++x, ++idx) {
                EXPECT_EQ(in.mask_known[idx], uint8_t(x < cols ? 1 : 0));
                EXPECT_EQ(int(in.mask_known[idx]) + int(out.mask_known[idx]), 1);
            }
        }
    }
    EXPECT_TRUE(in.source.has_value());
    EXPECT_TRUE(out.source.has_value());
    EXPECT_EQ(in.idm_cond.kind, lb::Condition::Kind::null_cond);
    EXPECT_EQ(in.vdm_cond.kind, lb::Condition::Kind::null_cond);
}

TEST(EnumerateCells, DefaultMatrixShapeAndOrder) {
    const lb::RunConfig cfg;  // 4 tasks x 5 strategies x per-task alphas x 20 seeds
    const auto cells = lb::detail::enumerate_cells(cfg);
    ASSERT_EQ(cells.size(), 500u);

    EXPECT_EQ(cells[0].task, lb::TaskKind::generation);
    EXPECT_EQ(cells[0].strategy, lb::Strategy::idm_only);
    EXPECT_EQ(cells[0].alpha, 0.25);
    EXPECT_EQ(cells[0].seed, 1u);
    EXPECT_EQ(cells[1].seed, 2u);
    EXPECT_EQ(cells[20].strategy, lb::Strategy::vdm_only);

    // Edit carries two default alphas, so its block is 5 * 2 * 20 = 200 cells.
    size_t edit_cells = 0;
    for (const auto& c : cells) edit_cells += c.task == lb::TaskKind::edit ? 1 : 0;
    EXPECT_EQ(edit_cells, 200u);

    // Explicit alpha lists override the per-task defaults everywhere.
    lb::RunConfig explicit_cfg;
    explicit_cfg.ablation.alphas = {0.1, 0.9};
    EXPECT_EQ(lb::detail::enumerate_cells(explicit_cfg).size(), 800u);
}

TEST(EnumerateCells, CellDirNames) {
    lb::detail::CellSpec spec;
    spec.task = lb::TaskKind::generation;
    spec.strategy = lb::Strategy::sequential;
    spec.alpha = 0.25;
    spec.seed = 3;
    EXPECT_EQ(lb::detail::cell_dir_name(spec), "generation_Sequential_a0.25_s3");
    spec.task = lb::TaskKind::edit;
    spec.strategy = lb::Strategy::idm_only;
    spec.alpha = 1.0;
    spec.seed = 17;
    EXPECT_EQ(lb::detail::cell_dir_name(spec), "edit_IdmOnly_a1_s17");
}

TEST(RunBenchmark, SingleCellAggregatesMatchRecord) {
    const lb::RunConfig cfg = tiny_config();
    const lb::RunReport report = lb::run_benchmark(cfg, false);

    ASSERT_EQ(report.records.size(), 1u);
    const lb::CellRecord& rec = report.records[0];
    EXPECT_EQ(rec.task, "generation");
    EXPECT_EQ(rec.strategy, "Sequential");
    EXPECT_EQ(rec.alpha, 0.25);
    EXPECT_EQ(rec.seed, 3u);
    EXPECT_TRUE(rec.error.empty()) << rec.error;
    EXPECT_GE(rec.wall_time_ms, 0.0);

    ASSERT_EQ(report.aggregates.size(), 1u);
    const lb::AggregateRow& agg = report.aggregates[0];
    EXPECT_EQ(agg.n, 1);
    expect_metrics_eq(agg.mean, rec.metrics);
    EXPECT_EQ(agg.stddev.frame_consistency, 0.0);
    EXPECT_EQ(agg.stddev.switch_rate, 0.0);
    EXPECT_EQ(agg.stddev.latent_corr, 0.0);

    EXPECT_EQ(report.global_seed, cfg.world.seed);
    EXPECT_FALSE(report.tool_version.empty());
}

TEST(RunBenchmark, WorkerCountDoesNotChangeRecords) {
    lb::RunConfig cfg = tiny_config();
    cfg.ablation.strategies = {"IdmOnly", "Sequential"};
    cfg.seeds = {3, 4};

    lb::RunReport serial, pooled;
    {
        ThreadEnv env("1");
        serial = lb::run_benchmark(cfg, false);
    }
    {
        ThreadEnv env("3");
        pooled = lb::run_benchmark(cfg, false);
    }
    ASSERT_EQ(serial.records.size(), 4u);
    ASSERT_EQ(pooled.records.size(), serial.records.size());
    for (size_t i = 0; i < serial.records.size(); ++i) {
        const auto& a = serial.records[i];
        const auto& b = pooled.records[i];
        EXPECT_EQ(a.task, b.task);
        EXPECT_EQ(a.strategy, b.strategy);
        EXPECT_EQ(a.alpha, b.alpha);
        EXPECT_EQ(a.seed, b.seed);
        EXPECT_EQ(a.error, b.error);
        expect_metrics_eq(a.metrics, b.metrics);
    }
}

TEST(RunBenchmark, CellFailuresAreIsolated) {
    lb::RunConfig cfg = tiny_config();
    cfg.ablation.strategies = {"IdmOnly", "Sequential"};
    // A one-iteration budget with an unreachable tolerance makes every
    // fixed-point inversion throw; only strategies that invert are affected.
    cfg.ddim.fp_tol = 1e-30;
    cfg.ddim.fp_max_iter = 1;

    const lb::RunReport report = lb::run_benchmark(cfg, false);
    ASSERT_EQ(report.records.size(), 2u);

    const auto& idm_rec = report.records[0];
    ASSERT_EQ(idm_rec.strategy, "IdmOnly");
    EXPECT_TRUE(idm_rec.error.empty()) << idm_rec.error;

    const auto& seq_rec = report.records[1];
    ASSERT_EQ(seq_rec.strategy, "Sequential");
    EXPECT_FALSE(seq_rec.error.empty());
    EXPECT_NE(seq_rec.error.find("image branch"), std::string::npos) << seq_rec.error;

    ASSERT_EQ(report.aggregates.size(), 2u);
    EXPECT_EQ(report.aggregates[0].n, 1);
    EXPECT_EQ(report.aggregates[1].n, 0);
}

TEST(RunBenchmark, InvalidConfigRejectedUpFront) {
    lb::RunConfig cfg = tiny_config();
    cfg.seeds.clear();
    EXPECT_THROW(lb::run_benchmark(cfg, false), lb::ConfigError);
}

TEST(Report, WriteLoadRoundTripAndArtifacts) {
    lb::RunConfig cfg = tiny_config();
    cfg.seeds = {3, 4};
    const fs::path dir = temp_dir("roundtrip");

    const lb::RunReport run = lb::run_benchmark(cfg, true, dir.string());
    for (const auto& rec : run.records) EXPECT_TRUE(rec.error.empty()) << rec.error;

    EXPECT_TRUE(fs::exists(dir / "report.json"));
    EXPECT_TRUE(fs::exists(dir / "report.csv"));
    const fs::path cell = dir / "cells" / "generation_Sequential_a0.25_s3";
    ASSERT_TRUE(fs::exists(cell / "clip.raw"));
    EXPECT_TRUE(fs::exists(cell / "frame_000.pgm"));
    EXPECT_TRUE(fs::exists(cell / "frame_001.pgm"));
    const lb::LatentClip dumped = lb::read_clip_raw((cell / "clip.raw").string());
    EXPECT_EQ(dumped.frames, cfg.world.frames);
    EXPECT_EQ(dumped.height, cfg.world.height);
    EXPECT_EQ(dumped.width, cfg.world.width);

    const lb::RunReport loaded = lb::load_report((dir / "report.json").string());
    EXPECT_EQ(lb::report_to_json(loaded), lb::report_to_json(run));

    // Re-serializing the loaded report reproduces the file byte for byte.
    const fs::path echo_dir = temp_dir("roundtrip_echo");
    lb::write_report(loaded, echo_dir.string());
    EXPECT_EQ(read_all(echo_dir / "report.json"), read_all(dir / "report.json"));
    EXPECT_EQ(read_all(echo_dir / "report.csv"), read_all(dir / "report.csv"));

    const std::string csv = read_all(dir / "report.csv");
    EXPECT_EQ(csv.rfind("task,strategy,alpha,n,frame_consistency_mean,", 0), 0u);

    fs::remove_all(dir);
    fs::remove_all(echo_dir);
}

TEST(Report, TamperedAggregatesRejected) {
    const lb::RunConfig cfg = tiny_config();
    const fs::path dir = temp_dir("tamper");
    lb::run_benchmark(cfg, true, dir.string());

    lb::json j;
    {
        std::ifstream in(dir / "report.json");
        in >> j;
    }
    j["aggregates"][0]["mean"]["frame_consistency"] =
        j["aggregates"][0]["mean"]["frame_consistency"].get<double>() + 0.5;
    const fs::path bad = dir / "tampered.json";
    {
        std::ofstream out(bad);
        out << j.dump(2) << "\n";
    }
    EXPECT_THROW(lb::load_report(bad.string()), lb::IoError);

    const fs::path garbled = dir / "garbled.json";
    {
        std::ofstream out(garbled);
        out << "{ not json";
    }
    EXPECT_THROW(lb::load_report(garbled.string()), lb::IoError);
    EXPECT_THROW(lb::load_report((dir / "absent.json").string()), lb::IoError);

    fs::remove_all(dir);
}

TEST(MetricsJson, RoundTrip) {
    lb::ClipMetrics m;
    m.frame_consistency = -0.25;
    m.switch_rate = 0.9375;
    m.control_match_error = 1.5e-3;
    m.latent_corr = 0.125;
    m.latent_corr_degenerate = true;
    m.gaussianity.mean_abs = 0.01;
    m.gaussianity.var_dev = 0.02;
    m.gaussianity.cov_offdiag = 0.03;

    const lb::ClipMetrics back = lb::metrics_from_json(lb::metrics_to_json(m));
    expect_metrics_eq(back, m);
}
