// Acceptance runner: one PASS/FAIL line per criterion.
//
//   acceptance [--only 1,2,3] --unit-dir <dir> --work-dir <dir> [--python ... --cli-test ...]
//
// Criteria 1 and 10 execute the unit test binaries; the rest run in-process.

#include "compsplat/checkpoint.hpp"
#include "compsplat/datagen.hpp"
#include "compsplat/losses.hpp"
#include "compsplat/rasterizer.hpp"
#include "compsplat/scene_io.hpp"
#include "compsplat/trainer.hpp"
#include "compsplat/workflow.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <iterator>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace compsplat;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v, int precision = 3) {
    std::ostringstream s;
    s << std::setprecision(precision) << v;
    return s.str();
}

std::string fixed(double v, int decimals = 2) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(decimals) << v;
    return s.str();
}

double max_abs_diff(const Image& a, const Image& b) {
    if (a.data.size() != b.data.size()) return std::numeric_limits<double>::infinity();
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

struct Options {
    std::vector<int> only;
    std::string unit_dir;
    std::vector<std::string> unit_tests;
    std::string python;
    std::string cli_test;
    std::string cli_binary;
    std::string schemas;
    std::string work_dir;
    std::string report;
};

// ---------------------------------------------------------------------------
// Unit-suite execution shared by criteria 1 and 10.

struct SuiteRun {
    bool ran = false;
    double wall_seconds = 0.0;
    double cli_seconds = 0.0;
    bool cli_ran = false;
    bool cli_ok = false;
    /// "Suite.Name" -> (passed, seconds)
    std::map<std::string, std::pair<bool, double>> tests;
    std::vector<std::string> crashed;
};

double parse_gtest_seconds(const json& t) {
    const std::string s = t.value("time", "0s");
    return std::stod(s.substr(0, s.size() - 1));
}

SuiteRun run_unit_suites(const Options& opt) {
    SuiteRun run;
    run.ran = true;
    const fs::path out_dir = fs::path(opt.work_dir) / "unit";
    fs::create_directories(out_dir);
    const auto t0 = Clock::now();
    for (const auto& name : opt.unit_tests) {
        const fs::path bin = fs::path(opt.unit_dir) / ("test_" + name);
        const fs::path report = out_dir / (name + ".json");
        fs::remove(report);
        const std::string cmd = "\"" + bin.string() + "\" --gtest_output=json:\"" + report.string() + "\" > \"" +
                                (out_dir / (name + ".log")).string() + "\" 2>&1";
        // failures are read from the JSON report; a missing report means a crash
        [[maybe_unused]] const int rc = std::system(cmd.c_str());
        if (!fs::exists(report)) {
            run.crashed.push_back(name);
            continue;
        }
        const json j = json::parse(slurp(report));
        for (const auto& suite : j["testsuites"]) {
            for (const auto& t : suite["testsuite"]) {
                const bool ok = !t.contains("failures") && t.value("result", "") == "COMPLETED";
                run.tests[suite["name"].get<std::string>() + "." + t["name"].get<std::string>()] = {
                    ok, parse_gtest_seconds(t)};
            }
        }
    }
    if (!opt.python.empty() && !opt.cli_test.empty()) {
        const auto c0 = Clock::now();
        const std::string cmd = "\"" + opt.python + "\" \"" + opt.cli_test + "\" \"" + opt.cli_binary + "\" \"" +
                                opt.schemas + "\" > \"" + (out_dir / "cli.log").string() + "\" 2>&1";
        run.cli_ran = true;
        run.cli_ok = std::system(cmd.c_str()) == 0;
        run.cli_seconds = seconds_since(c0);
    }
    run.wall_seconds = seconds_since(t0);
    return run;
}

// ---------------------------------------------------------------------------
// Scenes.

SyntheticSpec small_spec() {
    SyntheticSpec s;
    s.width = s.height = 40;
    s.timestamps = 4;
    s.supersample = 2;
    s.ground_points = 600;
    s.box_points = 80;
    s.actors[0].points = 120;
    return s;
}

const SceneDataset& load_or_generate(const SyntheticSpec& spec, const fs::path& dir) {
    static std::map<std::string, SceneDataset> cache;
    const std::string key = dir.string();
    if (auto it = cache.find(key); it != cache.end()) return it->second;
    fs::remove_all(dir);
    generate_scene(spec, dir);
    return cache.emplace(key, load_scene(dir)).first->second;
}

TrainConfig small_config() {
    TrainConfig c;
    c.iterations = 150;
    c.densify.start = 30;
    c.densify.stop = 120;
    c.densify.interval = 30;
    return c;
}

/// The benchmark setting for the trend and pose criteria: default synthetic
/// scene (96×96, ±20% gain jitter), 2000 iterations. The densify window has
/// to close inside the run, so it stops at 1500.
TrainConfig benchmark_config() {
    TrainConfig c;
    c.iterations = 2000;
    c.densify.stop = 1500;
    c.threads = 1;
    return c;
}

std::vector<std::size_t> all_frames(const SceneDataset& d) {
    std::vector<std::size_t> v(d.frames.size());
    std::iota(v.begin(), v.end(), 0);
    return v;
}

// ---------------------------------------------------------------------------
// Criteria.

struct GradientCoverage {
    const char* op;
    std::vector<const char*> tests;
};

Outcome criterion_gradients(const SuiteRun& run) {
    const std::vector<GradientCoverage> coverage{
        {"covariance", {"Covariance.BackwardMatchesFiniteDifferences"}},
        {"projection", {"Projection.BackwardMatchesFiniteDifferences"}},
        {"SH", {"SphericalHarmonics.BackwardMatchesFiniteDifferences"}},
        {"blending", {"RasterizeBackward.MatchesFiniteDifferences"}},
        {"hash grid", {"HashGrid.BackwardMatchesFiniteDifferences", "ClassHash.BackwardMatchesFiniteDifferences"}},
        {"MLPs", {"Mlp.BackwardMatchesFiniteDifferences", "SinEncode.ComponentLayoutAndGradient"}},
        {"SSIM", {"Ssim.GradientMatchesFiniteDifferences", "Loss.GradientMatchesFiniteDifferences"}},
        {"global/local", {"GlobalRefine.BackwardMatchesFiniteDifferences", "LocalRefine.BackwardMatchesFiniteDifferences"}},
        {"deformation",
         {"Deform.BackwardMatchesFiniteDifferences", "Deform.ClassHashBackwardMatchesFiniteDifferences"}},
        {"poses",
         {"ActorToWorld.BackwardMatchesFiniteDifferences", "InterpolatePose.BackwardMatchesFiniteDifferences",
          "Quaternion.BackwardsMatchFiniteDifferences"}},
        {"cubemap", {"Sky.BackwardTouchesAtMostFourTexels"}},
        {"pipeline",
         {"RenderBackward.FullPipelineMatchesFiniteDifferences",
          "RenderBackward.ClassHashPipelineMatchesFiniteDifferences"}},
    };
    double secs = 0.0;
    std::size_t checks = 0;
    std::vector<std::string> problems;
    for (const auto& c : coverage) {
        for (const char* name : c.tests) {
            const auto it = run.tests.find(name);
            if (it == run.tests.end()) {
                problems.push_back(std::string(c.op) + ": missing " + name);
                continue;
            }
            ++checks;
            secs += it->second.second;
            if (!it->second.first) problems.push_back(std::string(c.op) + ": " + name + " failed");
        }
    }
    for (const auto& c : run.crashed) problems.push_back("test_" + c + " produced no report");
    Outcome o;
    o.pass = problems.empty() && secs < 120.0;
    o.detail = std::to_string(checks) + " finite-difference checks over " + std::to_string(coverage.size()) +
               " op groups, " + fixed(secs) + " s (limit 120 s)";
    for (const auto& p : problems) o.detail += "; " + p;
    return o;
}

std::vector<Splat> random_splats(std::mt19937_64& rng, int count, int width, int height) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> depths(static_cast<std::size_t>(count));
    std::iota(depths.begin(), depths.end(), 1.0);
    std::shuffle(depths.begin(), depths.end(), rng);
    std::vector<Splat> out;
    for (int i = 0; i < count; ++i) {
        const double sx = 0.5 + 4.0 * u(rng);
        const double sy = 0.5 + 4.0 * u(rng);
        const double rho = 0.8 * (2.0 * u(rng) - 1.0);
        Mat2 cov;
        cov << sx * sx, rho * sx * sy, rho * sx * sy, sy * sy;
        out.push_back(make_splat(Vec2((width + 8) * u(rng) - 4, (height + 8) * u(rng) - 4), cov, u(rng),
                                 Vec3(u(rng), u(rng), u(rng)), 0.5 + 0.1 * depths[static_cast<std::size_t>(i)],
                                 u(rng) < 0.3 ? 1 : kBackgroundTag));
    }
    return out;
}

Outcome criterion_oracle() {
    const auto t0 = Clock::now();
    double worst = 0.0;
    int max_count = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(1000 + seed);
        const int count = 1 + static_cast<int>(rng() % 200);
        max_count = std::max(max_count, count);
        const auto splats = random_splats(rng, count, 32, 32);
        Image background(32, 32, 3);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (double& v : background.data) v = u(rng);
        const RasterResult fast = rasterize_forward(splats, 32, 32, background);
        const RenderOutput slow = brute_force_blend_oracle(splats, 32, 32, background);
        worst = std::max({worst, max_abs_diff(fast.output.rgb, slow.rgb),
                          max_abs_diff(fast.output.acc_alpha, slow.acc_alpha),
                          max_abs_diff(fast.output.actor_alpha, slow.actor_alpha),
                          max_abs_diff(fast.output.depth, slow.depth)});
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-6 && secs < 60.0, "20 seeds, up to " + std::to_string(max_count) +
                                              " splats at 32x32, max channel diff " + fmt(worst) + " (limit 1e-6), " +
                                              fixed(secs) + " s (limit 60 s)"};
}

Outcome criterion_identity(const SceneDataset& scene) {
    const Trainer t = make_trainer(scene, small_config());
    RenderSettings off;
    off.refine = RefinementSwitches{false, false, false};
    double worst = 0.0;
    for (const auto& f : scene.frames) {
        const RenderOutput a = render_novel(t.scene(), f.camera, f.camera_index, f.timestamp);
        const RenderOutput b = render_novel(t.scene(), f.camera, f.camera_index, f.timestamp, off);
        worst = std::max(worst, max_abs_diff(a.rgb, b.rgb));
    }
    return {worst <= 1e-6, std::to_string(scene.frames.size()) + " frames, max pixel diff full vs refinements off " +
                               fmt(worst) + " (limit 1e-6)"};
}

Outcome criterion_loss_units() {
    const Image half(8, 8, 1, 0.5);
    const Image mask(8, 8, 1, 1.0);
    const double bce = sky_bce(half, mask);
    Image extremes(8, 8, 1, 0.0);
    for (std::size_t i = 0; i < extremes.data.size(); i += 2) extremes.data[i] = 1.0;
    const double entropy = alpha_entropy(extremes);
    std::mt19937_64 rng(3);
    Image img(16, 16, 3);
    std::uniform_real_distribution<double> u(0.2, 0.8);
    for (double& v : img.data) v = u(rng);
    const double s = ssim(img, img);
    Image shifted = img;
    for (double& v : shifted.data) v += 0.1;
    const double p = psnr(shifted, img);
    const double e1 = std::abs(bce - std::log(2.0));
    const double e2 = std::abs(entropy);
    const double e3 = std::abs(s - 1.0);
    const double e4 = std::abs(p - 20.0);
    // alpha is clamped to [1e-6, 1 - 1e-6] before the entropy, which puts a
    // floor of H(1e-6) under the extremes
    const double floor = -(1e-6 * std::log(1e-6) + (1.0 - 1e-6) * std::log1p(-1e-6));
    return {std::max({e1, e2, e3, e4}) <= 1e-6, "BCE(0.5) - ln2 = " + fmt(e1) + ", entropy{0,1} = " + fmt(e2) +
                                                    " (clamp floor " + fmt(floor) + "), 1 - SSIM(x,x) = " + fmt(e3) +
                                                    ", PSNR(MSE 0.01) - 20 = " + fmt(e4) + " (limit 1e-6)"};
}

/// A briefly trained small model so the refinement nets are non-trivial.
Trainer& trained_small(const SceneDataset& scene) {
    static std::optional<Trainer> t;
    if (!t) {
        t.emplace(make_trainer(scene, small_config()));
        run_training(*t, small_config().iterations);
    }
    return *t;
}

Outcome criterion_decomposition(const SceneDataset& scene) {
    const Trainer& t = trained_small(scene);
    RenderSettings bg;
    bg.mode = RenderMode::background;
    RenderSettings act;
    act.mode = RenderMode::actors;
    double worst = 0.0;
    double bound = 0.0;  // how far full leaves [max(bg, act), bg + act]
    std::size_t overlap = 0;
    for (const auto& f : scene.frames) {
        const RenderOutput full = render_novel(t.scene(), f.camera, f.camera_index, f.timestamp);
        const RenderOutput b = render_novel(t.scene(), f.camera, f.camera_index, f.timestamp, bg);
        const RenderOutput a = render_novel(t.scene(), f.camera, f.camera_index, f.timestamp, act);
        for (std::size_t i = 0; i < full.acc_alpha.data.size(); ++i) {
            const double af = full.acc_alpha.data[i];
            const double ab = b.acc_alpha.data[i];
            const double aa = a.acc_alpha.data[i];
            worst = std::max(worst, std::abs((1.0 - af) - (1.0 - ab) * (1.0 - aa)));
            bound = std::max({bound, std::max(ab, aa) - af, af - (ab + aa)});
            overlap += (ab > 1e-3 && aa > 1e-3);
        }
    }
    return {worst <= 1e-6 && bound <= 1e-6,
            "transmittance factorization error " + fmt(worst) + " (limit 1e-6), bounds violation " + fmt(bound) +
                ", " + std::to_string(overlap) + " pixels covered by both layers"};
}

Outcome criterion_round_trip(const SceneDataset& scene, const fs::path& work) {
    const Trainer& t = trained_small(scene);
    const fs::path ck_dir = work / "checkpoint";
    fs::remove_all(ck_dir);
    save_checkpoint(ck_dir, t.scene(), t.config(), t.iteration());
    const Checkpoint ck = load_checkpoint(ck_dir);
    double drift = 0.0;
    for (const auto& f : scene.frames) {
        const RenderOutput a = render_novel(t.scene(), f.camera, f.camera_index, f.timestamp);
        const RenderOutput b = render_novel(ck.scene, f.camera, f.camera_index, f.timestamp);
        drift = std::max({drift, max_abs_diff(a.rgb, b.rgb), max_abs_diff(a.depth, b.depth)});
    }
    const SyntheticSpec spec = small_spec();
    const fs::path g1 = work / "gen_a";
    const fs::path g2 = work / "gen_b";
    fs::remove_all(g1);
    fs::remove_all(g2);
    generate_scene(spec, g1);
    generate_scene(spec, g2);
    std::size_t files = 0;
    std::size_t differing = 0;
    for (const auto& e : fs::recursive_directory_iterator(g1)) {
        if (!e.is_regular_file()) continue;
        ++files;
        differing += slurp(e.path()) != slurp(g2 / fs::relative(e.path(), g1));
    }
    return {drift <= 1e-7 && differing == 0 && files > 0,
            "save/load/render drift " + fmt(drift) + " (limit 1e-7); generator " + std::to_string(files) + " files, " +
                std::to_string(differing) + " differ"};
}

struct TrendResults {
    std::map<std::string, EvalSummary> variants;
    double seconds = 0.0;
};

TrendResults run_trends(const SceneDataset& scene) {
    TrendResults r;
    const auto t0 = Clock::now();
    const std::vector<std::pair<std::string, RefinementSwitches>> variants{
        {"full", {true, true, true}},
        {"no-local", {false, true, true}},
        {"no-global", {true, false, true}},
        {"no-actor", {true, true, false}},
    };
    for (const auto& [name, refine] : variants) {
        const auto v0 = Clock::now();
        TrainConfig cfg = benchmark_config();
        cfg.refine = refine;
        Trainer t = make_trainer(scene, cfg);
        run_training(t, cfg.iterations);
        RenderSettings settings;
        settings.refine = refine;
        r.variants[name] = evaluate_frames(t.scene(), scene, all_frames(scene), settings);
        std::cerr << "  trained " << name << " in " << fixed(seconds_since(v0), 1) << " s: psnr "
                  << fixed(r.variants[name].psnr) << ", actor psnr " << fixed(r.variants[name].actor_psnr) << '\n';
    }
    r.seconds = seconds_since(t0);
    return r;
}

Outcome criterion_appearance_trend(const TrendResults& r) {
    const double full = r.variants.at("full").psnr;
    const double no_local = r.variants.at("no-local").psnr;
    const double no_global = r.variants.at("no-global").psnr;
    return {full >= no_local + 1.0 && full >= no_global + 0.3,
            "train PSNR full " + fixed(full) + ", no-local " + fixed(no_local) + " (margin " +
                fixed(full - no_local) + ", need 1.0), no-global " + fixed(no_global) + " (margin " +
                fixed(full - no_global) + ", need 0.3)"};
}

Outcome criterion_actor_trend(const TrendResults& r) {
    const double full = r.variants.at("full").actor_psnr;
    const double no_actor = r.variants.at("no-actor").actor_psnr;
    return {full >= no_actor + 0.5, "masked actor PSNR full " + fixed(full) + ", no-actor " + fixed(no_actor) +
                                        " (margin " + fixed(full - no_actor) + ", need 0.5)"};
}

double mean_translation_error(const SceneModel& model, const SceneDataset& scene) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t a = 0; a < model.actors.size(); ++a) {
        const ActorModel& m = model.actors[a];
        const ActorTrack& truth = scene.actors[a];
        for (std::size_t k = 0; k < m.keyframe_count(); ++k) {
            sum += (m.key_translations.row(static_cast<Eigen::Index>(k)).transpose() - truth.translations[k]).norm();
            ++n;
        }
    }
    return n ? sum / static_cast<double>(n) : 0.0;
}

Outcome criterion_pose(const SceneDataset& scene) {
    TrainConfig cfg = benchmark_config();
    // Each keyframe only moves on the steps whose frames bracket it (about
    // one in twelve), so the default rate cannot cover 0.2 m in 2000 steps.
    cfg.lr.pose_translation = 3e-3;
    Trainer t = make_trainer(scene, cfg);
    // 0.2 m along a random direction for every keyframe of every actor
    std::mt19937_64 rng(99);
    std::normal_distribution<double> n01(0.0, 1.0);
    for (ActorModel& a : t.scene().actors) {
        for (Eigen::Index k = 0; k < a.key_translations.rows(); ++k) {
            const Vec3 dir = Vec3(n01(rng), n01(rng), n01(rng)).normalized();
            a.key_translations.row(k) += 0.2 * dir.transpose();
        }
        a.snap();
    }
    const double before = mean_translation_error(t.scene(), scene);
    run_training(t, cfg.iterations);
    const double after = mean_translation_error(t.scene(), scene);
    const double reduction = 1.0 - after / before;
    return {reduction >= 0.5, "pose lr " + fmt(cfg.lr.pose_translation) + ", mean key translation error " + fixed(before, 4) + " m -> " + fixed(after, 4) +
                                  " m (reduction " + fixed(100.0 * reduction, 1) + "%, need 50%)"};
}

}  // namespace

int main(int argc, char** argv) {
    Options opt;
    CLI::App app{"Acceptance criteria runner"};
    app.add_option("--only", opt.only, "Criteria to run (default all)")->delimiter(',')->check(CLI::Range(1, 10));
    app.add_option("--unit-dir", opt.unit_dir, "Directory holding the test_* binaries");
    app.add_option("--unit-tests", opt.unit_tests, "Unit test names (test_<name>)")->delimiter(',');
    app.add_option("--python", opt.python, "Python interpreter for the CLI suite");
    app.add_option("--cli-test", opt.cli_test, "CLI test script");
    app.add_option("--cli", opt.cli_binary, "compsplat binary");
    app.add_option("--schemas", opt.schemas, "JSON schema directory");
    app.add_option("--work-dir", opt.work_dir, "Scratch directory")->required();
    app.add_option("--report", opt.report, "Write a JSON summary here");
    CLI11_PARSE(app, argc, argv);
    if (opt.only.empty()) {
        opt.only.resize(10);
        std::iota(opt.only.begin(), opt.only.end(), 1);
    }
    const std::set<int> want(opt.only.begin(), opt.only.end());
    fs::create_directories(opt.work_dir);
    const fs::path work = opt.work_dir;

    std::map<int, Outcome> results;
    std::map<int, double> timing;
    auto run = [&](int id, const std::function<Outcome()>& fn) {
        if (!want.count(id)) return;
        const auto t0 = Clock::now();
        try {
            results[id] = fn();
        } catch (const std::exception& e) {
            results[id] = {false, std::string("exception: ") + e.what()};
        }
        timing[id] = seconds_since(t0);
    };

    SuiteRun suites;
    if (want.count(1) || want.count(10)) {
        if (opt.unit_dir.empty() || opt.unit_tests.empty()) {
            std::cerr << "criteria 1 and 10 need --unit-dir and --unit-tests\n";
            return 2;
        }
        suites = run_unit_suites(opt);
    }
    run(1, [&] { return criterion_gradients(suites); });
    run(2, [&] { return criterion_oracle(); });

    const bool need_small = want.count(3) || want.count(7) || want.count(8);
    const SceneDataset* small = need_small ? &load_or_generate(small_spec(), work / "small_scene") : nullptr;
    run(3, [&] { return criterion_identity(*small); });
    run(6, [&] { return criterion_loss_units(); });
    run(7, [&] { return criterion_decomposition(*small); });
    run(8, [&] { return criterion_round_trip(*small, work); });

    const bool need_bench = want.count(4) || want.count(5) || want.count(9);
    const SceneDataset* bench = need_bench ? &load_or_generate(SyntheticSpec{}, work / "benchmark_scene") : nullptr;
    run(9, [&] { return criterion_pose(*bench); });

    std::optional<TrendResults> trends;
    if (want.count(4) || want.count(5)) {
        const auto t0 = Clock::now();
        try {
            trends = run_trends(*bench);
        } catch (const std::exception& e) {
            results[4] = results[5] = {false, std::string("exception: ") + e.what()};
        }
        timing[4] = seconds_since(t0);
    }
    if (trends) {
        run(4, [&] { return criterion_appearance_trend(*trends); });
        run(5, [&] { return criterion_actor_trend(*trends); });
    }

    run(10, [&] {
        double core = suites.wall_seconds;
        for (const auto& [id, s] : timing)
            if (id != 4 && id != 5 && id != 10) core += s;
        std::string detail = "unit suites " + fixed(suites.wall_seconds, 1) + " s";
        if (suites.cli_ran) detail += " (CLI suite " + fixed(suites.cli_seconds, 1) + " s)";
        else detail += " (CLI suite not run)";
        detail += ", suite excluding 4-5 " + fixed(core, 1) + " s (limit 600 s)";
        bool ok = core < 600.0 && suites.crashed.empty() && (!suites.cli_ran || suites.cli_ok);
        for (const auto& [name, r] : suites.tests) ok = ok && r.first;
        if (suites.cli_ran && !suites.cli_ok) detail += "; CLI suite failed";
        if (!ok && core < 600.0) detail += "; some unit tests failed";
        if (trends) {
            detail += ", criteria 4-5 " + fixed(trends->seconds, 1) + " s (limit 1800 s)";
            ok = ok && trends->seconds < 1800.0;
        } else {
            detail += ", criteria 4-5 not run";
        }
        return Outcome{ok, detail};
    });

    bool all = true;
    json report = json::object();
    for (const auto& [id, o] : results) {
        std::cout << "criterion " << std::setw(2) << id << "  " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail
                  << std::endl;
        all = all && o.pass;
        report[std::to_string(id)] = {{"pass", o.pass}, {"detail", o.detail}, {"seconds", timing[id]}};
    }
    if (!opt.report.empty()) std::ofstream(opt.report) << report.dump(2) << '\n';
    return all ? 0 : 1;
}
