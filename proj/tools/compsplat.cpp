// Command-line front end: gen-scene, train, render, eval, ablate.

#include "compsplat/checkpoint.hpp"
#include "compsplat/config.hpp"
#include "compsplat/datagen.hpp"
#include "compsplat/image_io.hpp"
#include "compsplat/parallel.hpp"
#include "compsplat/ply.hpp"
#include "compsplat/scene_io.hpp"
#include "compsplat/trainer.hpp"
#include "compsplat/workflow.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace compsplat;

namespace {

/// COMPSPLAT_LOG: 0 quiet, 1 progress (default), 2 per-step echo.
int log_level() {
    static const int level = [] {
        const char* v = std::getenv("COMPSPLAT_LOG");
        return v ? std::atoi(v) : 1;
    }();
    return level;
}

void info(const std::string& msg) {
    if (log_level() >= 1) std::cerr << "[compsplat] " << msg << '\n';
}

/// Failure with an exit code and a machine-readable category.
struct CliFailure {
    int code;
    std::string kind;
    std::string message;
    json detail;
};

void emit(const json& j, const std::string& out_file) {
    if (!out_file.empty()) {
        std::ofstream out(out_file, std::ios::trunc);
        if (!out) throw IoError(out_file + ": cannot open for writing");
        out << j.dump(2) << '\n';
    }
    std::cout << j.dump(2) << std::endl;
}

struct GlobalOptions {
    std::string config_file;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    bool show_config = false;
};

TrainConfig resolve(const GlobalOptions& g, const json* base = nullptr) {
    std::vector<std::string> overrides = g.overrides;
    if (g.seed) overrides.push_back("seed=" + std::to_string(*g.seed));
    if (g.threads) overrides.push_back("threads=" + std::to_string(*g.threads));
    TrainConfig cfg;
    if (base) {
        json j = *base;
        for (const auto& o : overrides) apply_override(j, o);
        cfg = config_from_json(j);
    } else {
        const fs::path file = g.config_file;
        cfg = resolve_config(g.config_file.empty() ? nullptr : &file, overrides);
    }
    cfg.validate();
    set_num_threads(cfg.threads);
    return cfg;
}

std::vector<std::size_t> select_frames(const std::string& which, std::size_t n, int every) {
    if (which == "all") {
        std::vector<std::size_t> all(n);
        for (std::size_t i = 0; i < n; ++i) all[i] = i;
        return all;
    }
    if (which == "train") return train_indices(n, every);
    if (which == "test") return test_indices(n, every);
    throw InvalidParameter("--frames must be all, train or test");
}

// ---------------------------------------------------------------------------

int cmd_gen_scene(const std::string& spec_file, const std::string& out, bool show_spec) {
    SyntheticSpec spec;
    if (!spec_file.empty()) {
        std::ifstream in(spec_file);
        if (!in) throw IoError(spec_file + ": cannot open spec file");
        const json j = json::parse(in, nullptr, false);
        if (j.is_discarded()) throw InvalidParameter(spec_file + ": spec is not valid JSON");
        spec = spec_from_json(j);
    }
    if (show_spec) {
        std::cout << spec_to_json(spec).dump(2) << std::endl;
        return 0;
    }
    if (out.empty()) throw InvalidParameter("gen-scene requires --out");
    const auto t0 = std::chrono::steady_clock::now();
    generate_scene(spec, out);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    info("wrote " + std::to_string(synthetic_frame_count(spec)) + " frames to " + out);
    emit({{"command", "gen-scene"}, {"scene", out}, {"frames", synthetic_frame_count(spec)}, {"seconds", secs}}, "");
    return 0;
}

int cmd_train(const GlobalOptions& g, const std::string& scene_dir, const std::string& out, const std::string& resume,
              std::string log_path, int log_every) {
    const SceneDataset scene = load_scene(scene_dir);
    std::optional<Trainer> trainer;
    TrainConfig cfg;
    if (!resume.empty()) {
        Checkpoint ck = load_checkpoint(resume);
        const json base = config_to_json(ck.config);
        cfg = resolve(g, &base);
        const auto train = train_indices(scene.frames.size(), cfg.holdout_every);
        std::vector<CameraFrame> frames;
        for (const std::size_t i : train) frames.push_back(scene.frames[i]);
        trainer.emplace(std::move(ck.scene), std::move(frames), cfg);
        restore_training_state(resume, *trainer);
        info("resumed at iteration " + std::to_string(trainer->iteration()));
    } else {
        cfg = resolve(g);
        trainer.emplace(make_trainer(scene, cfg));
    }
    fs::create_directories(out);
    if (log_path.empty()) log_path = (fs::path(out) / "train_log.jsonl").string();
    std::ofstream log(log_path, resume.empty() ? std::ios::trunc : std::ios::app);
    if (!log) throw IoError(log_path + ": cannot open log");

    const auto t0 = std::chrono::steady_clock::now();
    StepReport last;
    try {
        while (trainer->iteration() < cfg.iterations) {
            last = trainer->step();
            if (last.iteration % log_every == 0 || last.densified || trainer->iteration() == cfg.iterations) {
                const json line = to_json(last);
                log << line.dump() << '\n';
                if (log_level() >= 2) std::cerr << line.dump() << '\n';
            }
            if (log_level() >= 1 && trainer->iteration() % 100 == 0) {
                std::ostringstream msg;
                msg << "iter " << trainer->iteration() << "/" << cfg.iterations << " loss " << last.loss.total
                    << " psnr " << last.psnr << " gaussians " << last.gaussians;
                info(msg.str());
            }
        }
    } catch (const TrainingDiverged& e) {
        log.flush();
        std::ofstream diag(fs::path(out) / "diverged.json");
        diag << e.diagnostic.dump(2) << '\n';
        throw CliFailure{3, "training_diverged", e.what(), e.diagnostic};
    }
    save_training_state(out, *trainer);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    emit({{"command", "train"},
          {"checkpoint", out},
          {"log", log_path},
          {"iterations", trainer->iteration()},
          {"gaussians", trainer->scene().gaussian_count()},
          {"final_loss", last.loss.total},
          {"seconds", secs}},
         "");
    return 0;
}

int cmd_render(const GlobalOptions& g, const std::string& ckpt, const std::string& scene_dir, const std::string& out,
               const std::string& mode, double shift, const std::string& which) {
    const Checkpoint ck = load_checkpoint(ckpt);
    const json base = config_to_json(ck.config);
    const TrainConfig cfg = resolve(g, &base);
    const SceneDataset scene = load_scene(scene_dir, false);
    RenderSettings settings;
    settings.mode = parse_render_mode(mode);
    settings.refine = cfg.refine;
    settings.raster = cfg.raster;
    fs::create_directories(out);
    json images = json::array();
    for (const std::size_t i : select_frames(which, scene.frames.size(), cfg.holdout_every)) {
        const CameraFrame& f = scene.frames[i];
        const RenderOutput r = render_novel(ck.scene, f.camera, f.camera_index, f.timestamp, settings, shift);
        const fs::path file = fs::path(out) / (f.image_path.stem().string() + ".png");
        write_png(file, clamp01(r.rgb));
        images.push_back({{"index", i}, {"path", file.string()}});
    }
    emit({{"command", "render"}, {"mode", mode}, {"shift", shift}, {"images", images}}, "");
    return 0;
}

json split_json(const SceneModel& model, const SceneDataset& scene, int every, const RenderSettings& settings,
                bool per_frame) {
    const auto train = train_indices(scene.frames.size(), every);
    const auto test = test_indices(scene.frames.size(), every);
    json j;
    j["split"] = every;
    j["train_frames"] = train.size();
    j["test_frames"] = test.size();
    j["train"] = to_json(evaluate_frames(model, scene, train, settings), per_frame);
    j["test"] = to_json(evaluate_frames(model, scene, test, settings), per_frame);
    return j;
}

int cmd_eval(const GlobalOptions& g, const std::string& ckpt, const std::string& scene_dir, int split,
             const std::string& out_file) {
    if (split < 1) throw InvalidParameter("--split must be >= 1");
    const Checkpoint ck = load_checkpoint(ckpt);
    const json base = config_to_json(ck.config);
    const TrainConfig cfg = resolve(g, &base);
    const SceneDataset scene = load_scene(scene_dir);
    RenderSettings settings;
    settings.refine = cfg.refine;
    settings.raster = cfg.raster;
    json j = split_json(ck.scene, scene, split, settings, true);
    j["command"] = "eval";
    j["checkpoint"] = ckpt;
    j["iteration"] = ck.iteration;
    emit(j, out_file);
    return 0;
}

int cmd_ablate(const GlobalOptions& g, const std::string& scene_dir, const std::string& ckpt,
               const std::vector<std::string>& disable, int split, const std::string& out_file) {
    std::set<std::string> seen;
    for (const auto& d : disable) {
        if (d != "local" && d != "global" && d != "actor") {
            throw InvalidParameter("--disable accepts local, global, actor (got '" + d + "')");
        }
        if (!seen.insert(d).second) throw InvalidParameter("--disable lists '" + d + "' twice");
    }
    const SceneDataset scene = load_scene(scene_dir);
    std::optional<Checkpoint> ck;
    TrainConfig cfg;
    if (!ckpt.empty()) {
        ck = load_checkpoint(ckpt);
        const json base = config_to_json(ck->config);
        cfg = resolve(g, &base);
    } else {
        cfg = resolve(g);
    }
    const int every = split > 0 ? split : cfg.holdout_every;

    struct Variant {
        std::string name;
        std::vector<std::string> off;
    };
    std::vector<Variant> variants{{"full", {}}};
    for (const auto& d : disable) variants.push_back({"no-" + d, {d}});
    if (disable.size() > 1) variants.push_back({"no-" + [&] {
                                                    std::string s;
                                                    for (const auto& d : disable) s += (s.empty() ? "" : "+") + d;
                                                    return s;
                                                }(),
                                                disable});

    json rows = json::array();
    for (const auto& v : variants) {
        TrainConfig vc = cfg;
        for (const auto& d : v.off) {
            if (d == "local") vc.refine.local = false;
            if (d == "global") vc.refine.global = false;
            if (d == "actor") vc.refine.actor = false;
        }
        RenderSettings settings;
        settings.refine = vc.refine;
        settings.raster = vc.raster;
        json row;
        row["name"] = v.name;
        row["disabled"] = v.off;
        if (ck) {
            row["trained_iterations"] = ck->iteration;
            row["metrics"] = split_json(ck->scene, scene, every, settings, false);
        } else {
            info("training variant " + v.name);
            vc.holdout_every = every;
            Trainer t = make_trainer(scene, vc);
            run_training(t, vc.iterations);
            row["trained_iterations"] = t.iteration();
            row["metrics"] = split_json(t.scene(), scene, every, settings, false);
        }
        rows.push_back(row);
    }
    emit({{"command", "ablate"}, {"split", every}, {"variants", rows}}, out_file);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Composite Gaussian splatting with multi-level appearance refinement"};
    app.set_version_flag("--version", "compsplat 0.1.0");
    GlobalOptions g;
    app.add_option("--config", g.config_file, "JSON configuration file")->check(CLI::ExistingFile);
    app.add_option("--set", g.overrides, "Override a configuration key (key.path=value), repeatable");
    app.add_option("--seed", g.seed, "Random seed");
    app.add_option("--threads", g.threads, "Worker threads (1 = serial, deterministic)")->check(CLI::Range(1, 256));
    app.add_flag("--show-config", g.show_config, "Print the resolved configuration and exit");

    std::string scene_dir, out, ckpt, spec_file, resume, log_path, mode = "full", frames = "all", out_file;
    double shift = 0.0;
    int split = 4, log_every = 1, ablate_split = 0;
    bool show_spec = false;
    std::vector<std::string> disable;

    auto* gen = app.add_subcommand("gen-scene", "Generate a synthetic scene dataset");
    gen->add_option("--spec", spec_file, "Scene spec JSON (defaults when omitted)")->check(CLI::ExistingFile);
    gen->add_option("--out", out, "Output scene directory");
    gen->add_flag("--show-spec", show_spec, "Print the resolved spec and exit");

    auto* train = app.add_subcommand("train", "Train a model on a scene");
    train->add_option("--scene", scene_dir, "Scene directory")->required();
    train->add_option("--out", out, "Checkpoint directory")->required();
    train->add_option("--resume", resume, "Resume from a checkpoint directory");
    train->add_option("--log", log_path, "JSONL training log (default <out>/train_log.jsonl)");
    train->add_option("--log-every", log_every, "Log every N iterations")->check(CLI::PositiveNumber);

    auto* render = app.add_subcommand("render", "Render dataset cameras from a checkpoint");
    render->add_option("--checkpoint", ckpt, "Checkpoint directory")->required();
    render->add_option("--scene", scene_dir, "Scene directory providing cameras")->required();
    render->add_option("--out", out, "Output image directory")->required();
    render->add_option("--mode", mode, "full | background | actors | raw")
        ->check(CLI::IsMember({"full", "background", "actors", "raw"}));
    render->add_option("--shift", shift, "Lateral camera offset in meters (positive = right)");
    render->add_option("--frames", frames, "all | train | test")->check(CLI::IsMember({"all", "train", "test"}));

    auto* eval = app.add_subcommand("eval", "Score a checkpoint on train/test splits");
    eval->add_option("--checkpoint", ckpt, "Checkpoint directory")->required();
    eval->add_option("--scene", scene_dir, "Scene directory")->required();
    eval->add_option("--split", split, "Every Nth frame is a test frame");
    eval->add_option("--out", out_file, "Also write the metrics JSON here");

    auto* ablate = app.add_subcommand("ablate", "Compare refinement variants");
    ablate->add_option("--scene", scene_dir, "Scene directory")->required();
    ablate->add_option("--checkpoint", ckpt, "Evaluate this checkpoint instead of training each variant");
    ablate->add_option("--disable", disable, "Components to ablate: local,global,actor")->delimiter(',')->required();
    ablate->add_option("--split", ablate_split, "Every Nth frame is a test frame (default: config holdout)");
    ablate->add_option("--out", out_file, "Also write the table JSON here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << json{{"error", {{"kind", "invalid_argument"}, {"message", e.what()}}}}.dump() << std::endl;
        return 2;
    }

    try {
        if (g.show_config) {
            std::cout << config_to_json(resolve(g)).dump(2) << std::endl;
            return 0;
        }
        if (*gen) return cmd_gen_scene(spec_file, out, show_spec);
        if (*train) return cmd_train(g, scene_dir, out, resume, log_path, log_every);
        if (*render) return cmd_render(g, ckpt, scene_dir, out, mode, shift, frames);
        if (*eval) return cmd_eval(g, ckpt, scene_dir, split, out_file);
        if (*ablate) return cmd_ablate(g, scene_dir, ckpt, disable, ablate_split, out_file);
        std::cerr << app.help() << std::endl;
        return 2;
    } catch (const CliFailure& f) {
        std::cerr << json{{"error", {{"kind", f.kind}, {"message", f.message}, {"detail", f.detail}}}}.dump()
                  << std::endl;
        return f.code;
    } catch (const SceneValidationError& e) {
        std::cerr << json{{"error", {{"kind", "scene_validation"}, {"message", e.what()}, {"detail", e.problems}}}}
                         .dump()
                  << std::endl;
        return 4;
    } catch (const InvalidParameter& e) {
        std::cerr << json{{"error", {{"kind", "invalid_argument"}, {"message", e.what()}}}}.dump() << std::endl;
        return 2;
    } catch (const std::exception& e) {
        std::cerr << json{{"error", {{"kind", "runtime"}, {"message", e.what()}}}}.dump() << std::endl;
        return 1;
    }
}
