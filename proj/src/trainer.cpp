#include "compsplat/trainer.hpp"

#include "compsplat/parallel.hpp"
#include "compsplat/quaternion.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace compsplat {

using nlohmann::json;

namespace {

std::span<double> span_of(RowMatrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
std::span<const double> span_of(const RowMatrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
template <typename M>
std::span<double> mspan(M& m) {
    return {m.data(), static_cast<std::size_t>(m.size())};
}
template <typename M>
std::span<const double> cspan(const M& m) {
    return {m.data(), static_cast<std::size_t>(m.size())};
}

std::vector<Adam> dense_for(const Mlp& mlp) {
    std::vector<Adam> out;
    for (const auto& p : mlp.params) out.emplace_back(static_cast<std::size_t>(p.size()), 1);
    return out;
}

void step_mlp(std::vector<Adam>& adams, Mlp& mlp, const std::vector<RowMatrix>& grads, double lr) {
    for (std::size_t i = 0; i < mlp.params.size(); ++i) adams[i].step(span_of(mlp.params[i]), span_of(grads[i]), lr);
}

void normalize_rows(MatX4& q) {
    for (Eigen::Index i = 0; i < q.rows(); ++i) {
        const double n = q.row(i).norm();
        if (n > 0.0) q.row(i) /= n;
    }
}

}  // namespace

GaussianSetOptim::GaussianSetOptim(std::size_t n, int sh_dimension)
    : means(n * 3, 3), rotations(n * 4, 4), log_scales(n * 3, 3), opacity(n, 1),
      sh(n * static_cast<std::size_t>(sh_dimension), static_cast<std::size_t>(sh_dimension)) {}

void GaussianSetOptim::select_rows(std::span<const std::size_t> keep) {
    means.select_rows(keep);
    rotations.select_rows(keep);
    log_scales.select_rows(keep);
    opacity.select_rows(keep);
    sh.select_rows(keep);
}

void GaussianSetOptim::append_rows(std::size_t count) {
    means.append_rows(count);
    rotations.append_rows(count);
    log_scales.append_rows(count);
    opacity.append_rows(count);
    sh.append_rows(count);
}

OptimizerState::OptimizerState(const SceneModel& scene)
    : background(scene.background.size(), scene.background.sh_dimension()),
      sky(scene.sky.texels.size(), 3),
      hash(static_cast<std::size_t>(scene.nets.hash.tables.size()),
           static_cast<std::size_t>(scene.nets.hash.tables.cols())),
      frames(static_cast<std::size_t>(scene.nets.frames.table.size()),
             static_cast<std::size_t>(scene.nets.frames.table.cols())),
      local(dense_for(scene.nets.local)),
      global(dense_for(scene.nets.global)),
      encoder(dense_for(scene.nets.encoder)),
      head(dense_for(scene.nets.head)),
      classes(static_cast<std::size_t>(scene.nets.classes.table.size()),
              static_cast<std::size_t>(scene.nets.classes.table.cols())),
      class_encoder(dense_for(scene.nets.class_encoder.encoder)) {
    for (const auto& a : scene.actors) {
        actors.emplace_back(a.gaussians.size(), a.gaussians.sh_dimension());
        key_rotations.emplace_back(static_cast<std::size_t>(a.key_rotations.size()), 4);
        key_translations.emplace_back(static_cast<std::size_t>(a.key_translations.size()), 3);
    }
}

std::vector<Adam*> OptimizerState::all() {
    std::vector<Adam*> out;
    const auto add_set = [&](GaussianSetOptim& s) {
        for (Adam* a : {&s.means, &s.rotations, &s.log_scales, &s.opacity, &s.sh}) out.push_back(a);
    };
    add_set(background);
    for (std::size_t k = 0; k < actors.size(); ++k) {
        add_set(actors[k]);
        out.push_back(&key_rotations[k]);
        out.push_back(&key_translations[k]);
    }
    for (Adam* a : {&sky, &hash, &frames}) out.push_back(a);
    for (auto* group : {&local, &global, &encoder, &head}) {
        for (auto& a : *group) out.push_back(&a);
    }
    out.push_back(&classes);
    for (auto& a : class_encoder) out.push_back(&a);
    return out;
}

void DensifyStats::reset(const SceneModel& scene) {
    grad_sum.assign(1 + scene.actors.size(), {});
    count.assign(1 + scene.actors.size(), {});
    position_grad.assign(1 + scene.actors.size(), MatX3());
    for (std::size_t s = 0; s <= scene.actors.size(); ++s) {
        const std::size_t n = s == 0 ? scene.background.size() : scene.actors[s - 1].gaussians.size();
        grad_sum[s].assign(n, 0.0);
        count[s].assign(n, 0);
        position_grad[s] = MatX3::Zero(static_cast<Eigen::Index>(n), 3);
    }
}

json to_json(const StepReport& r) {
    json j;
    j["iteration"] = r.iteration;
    j["frame"] = r.frame;
    j["loss"] = r.loss.total;
    j["l1"] = r.loss.rgb;
    j["ssim_loss"] = r.loss.ssim;
    j["depth_loss"] = r.loss.has_depth ? json(r.loss.depth) : json(nullptr);
    j["sky_loss"] = r.loss.has_sky ? json(r.loss.sky) : json(nullptr);
    j["entropy_loss"] = r.loss.has_entropy ? json(r.loss.entropy) : json(nullptr);
    j["psnr"] = std::isfinite(r.psnr) ? json(r.psnr) : json(nullptr);
    j["gaussians"] = r.gaussians;
    j["lr_position"] = r.lr_position;
    j["ms"] = r.millis;
    if (r.densified) {
        j["densify"] = {{"before", r.densify.before},
                        {"clones", r.densify.clones},
                        {"splits", r.densify.splits},
                        {"pruned", r.densify.pruned},
                        {"after", r.densify.after}};
    }
    return j;
}

double camera_extent(const std::vector<CameraFrame>& frames) {
    if (frames.empty()) return 1.0;
    Vec3 mean = Vec3::Zero();
    for (const auto& f : frames) mean += f.camera.center();
    mean /= static_cast<double>(frames.size());
    double radius = 0.0;
    for (const auto& f : frames) radius = std::max(radius, (f.camera.center() - mean).norm());
    return radius > 1e-9 ? 1.1 * radius : 1.0;
}

Image clamp01(const Image& img) {
    Image out = img;
    for (double& v : out.data) v = std::clamp(v, 0.0, 1.0);
    return out;
}

Trainer::Trainer(SceneModel scene, std::vector<CameraFrame> frames, TrainConfig config)
    : scene_(std::move(scene)), frames_(std::move(frames)), config_(std::move(config)), rng_(config_.seed) {
    config_.validate();
    if (frames_.empty()) throw InvalidParameter("Trainer: no training frames");
    if (frames_.size() != scene_.nets.frames.rows()) {
        throw InvalidParameter("Trainer: frame count does not match the embedding table");
    }
    for (const auto& f : frames_) {
        if (f.rgb.width != f.camera.width || f.rgb.height != f.camera.height || f.rgb.channels != 3) {
            throw InvalidParameter("Trainer: every training frame needs a loaded RGB image");
        }
    }
    optim_ = OptimizerState(scene_);
    stats_.reset(scene_);
    extent_ = camera_extent(frames_);
}

RenderSettings Trainer::render_settings() const {
    RenderSettings s;
    s.mode = RenderMode::full;
    s.refine = config_.refine;
    s.raster = config_.raster;
    return s;
}

StepReport Trainer::step() {
    std::uniform_int_distribution<std::size_t> pick(0, frames_.size() - 1);
    return step_on(pick(rng_));
}

StepReport Trainer::step_on(std::size_t f) {
    if (f >= frames_.size()) throw InvalidParameter("step_on: frame index out of range");
    const auto t0 = std::chrono::steady_clock::now();
    const CameraFrame& frame = frames_[f];
    PipelineCache cache;
    const RenderOutput out = render(scene_, frame.camera, frame.timestamp, f, render_settings(), &cache);

    LossTargets targets;
    targets.rgb = &frame.rgb;
    if (!frame.depth.data.empty()) targets.depth = &frame.depth;
    if (!frame.sky.data.empty()) targets.sky_mask = &frame.sky;
    targets.actor_entropy = !scene_.actors.empty();
    LossGrads lg;
    StepReport report;
    report.iteration = iteration_;
    report.frame = f;
    report.loss = loss_total(out, targets, config_.loss, &lg);
    if (!std::isfinite(report.loss.total)) {
        json diag;
        diag["iteration"] = iteration_;
        diag["frame"] = f;
        diag["terms"] = {{"rgb", report.loss.rgb}, {"ssim", report.loss.ssim}, {"depth", report.loss.depth},
                         {"sky", report.loss.sky}, {"entropy", report.loss.entropy}};
        diag["gaussians"] = scene_.gaussian_count();
        std::size_t bad = 0;
        for (const double v : out.rgb.data) bad += std::isfinite(v) ? 0 : 1;
        diag["nonfinite_pixels"] = bad;
        throw TrainingDiverged("non-finite loss at iteration " + std::to_string(iteration_), diag);
    }

    ModelGrads grads = zero_grads(scene_);
    render_backward(scene_, cache, lg, grads);
    apply_gradients(grads);
    accumulate_stats(grads);
    ++iteration_;

    const DensifyConfig& dc = config_.densify;
    if (dc.enabled && iteration_ >= dc.start && iteration_ < dc.stop && iteration_ % dc.interval == 0) {
        report.densify = densify_and_prune();
        report.densified = true;
    }
    report.psnr = psnr(clamp01(out.rgb), frame.rgb);
    report.gaussians = scene_.gaussian_count();
    report.lr_position = exponential_lr(iteration_ - 1, config_.lr.position_init, config_.lr.position_final,
                                        config_.lr.position_decay_steps) *
                         (config_.lr.position_scale_by_extent ? extent_ : 1.0);
    report.millis = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

void Trainer::apply_gradients(const ModelGrads& g) {
    const LearningRates& lr = config_.lr;
    const double pos_lr = exponential_lr(iteration_, lr.position_init, lr.position_final, lr.position_decay_steps) *
                          (lr.position_scale_by_extent ? extent_ : 1.0);
    const double nets_lr = exponential_lr(iteration_, lr.nets_init, lr.nets_final, config_.iterations);

    const auto step_set = [&](GaussianSet& set, GaussianSetOptim& o, const GaussianSet& gs) {
        o.means.step(mspan(set.means), cspan(gs.means), pos_lr);
        o.rotations.step(mspan(set.rotations), cspan(gs.rotations), lr.rotation);
        o.log_scales.step(mspan(set.log_scales), cspan(gs.log_scales), lr.scale);
        o.opacity.step(mspan(set.opacity_logits), cspan(gs.opacity_logits), lr.opacity);
        o.sh.step(mspan(set.sh), cspan(gs.sh), lr.sh);
        set.normalize_rotations();
    };
    step_set(scene_.background, optim_.background, g.background);
    for (std::size_t k = 0; k < scene_.actors.size(); ++k) {
        ActorModel& a = scene_.actors[k];
        step_set(a.gaussians, optim_.actors[k], g.actors[k]);
        optim_.key_rotations[k].step_sparse_rows(mspan(a.key_rotations), cspan(g.key_rotations[k]),
                                                 lr.pose_rotation);
        optim_.key_translations[k].step_sparse_rows(mspan(a.key_translations), cspan(g.key_translations[k]),
                                                    lr.pose_translation);
        normalize_rows(a.key_rotations);
    }
    optim_.sky.step_sparse_rows(scene_.sky.texels, g.sky, lr.sky);
    AppearanceNets& nets = scene_.nets;
    optim_.hash.step_sparse_rows(span_of(nets.hash.tables), span_of(g.hash), nets_lr);
    optim_.frames.step_sparse_rows(span_of(nets.frames.table), span_of(g.frames), nets_lr);
    step_mlp(optim_.local, nets.local, g.local, nets_lr);
    step_mlp(optim_.global, nets.global, g.global, nets_lr);
    step_mlp(optim_.encoder, nets.encoder, g.encoder, nets_lr);
    step_mlp(optim_.head, nets.head, g.head, nets_lr);
    if (scene_.config.deform.class_hash_encoding) {
        optim_.classes.step_sparse_rows(span_of(nets.classes.table), span_of(g.classes), nets_lr);
        step_mlp(optim_.class_encoder, nets.class_encoder.encoder, g.class_encoder, nets_lr);
    }
    scene_.snap();
}

void Trainer::accumulate_stats(const ModelGrads& g) {
    for (std::size_t s = 0; s < stats_.grad_sum.size(); ++s) {
        const GaussianSet& gs = s == 0 ? g.background : g.actors[s - 1];
        for (std::size_t i = 0; i < stats_.grad_sum[s].size(); ++i) {
            if (!g.visible[s][i]) continue;
            stats_.grad_sum[s][i] += g.screen_grad[s][i];
            stats_.count[s][i] += 1;
            stats_.position_grad[s].row(static_cast<Eigen::Index>(i)) += gs.means.row(static_cast<Eigen::Index>(i));
        }
    }
}

DensifyReport Trainer::densify_and_prune() {
    const DensifyConfig& dc = config_.densify;
    DensifyReport report;
    report.before = scene_.gaussian_count();
    const double split_limit = dc.percent_dense * extent_;

    struct Candidate {
        std::size_t set;
        std::size_t row;
        double score;
        bool split;
    };
    std::vector<Candidate> candidates;
    for (std::size_t s = 0; s < stats_.grad_sum.size(); ++s) {
        const GaussianSet& set = s == 0 ? scene_.background : scene_.actors[s - 1].gaussians;
        for (std::size_t i = 0; i < set.size(); ++i) {
            const std::uint32_t c = stats_.count[s][i];
            if (c == 0) continue;
            const double avg = stats_.grad_sum[s][i] / c;
            if (!(avg >= dc.grad_threshold)) continue;
            const double max_scale = set.log_scales.row(static_cast<Eigen::Index>(i)).array().exp().maxCoeff();
            candidates.push_back({s, i, avg, max_scale > split_limit});
        }
    }
    // Both operations add one Gaussian net; respect the global cap.
    const std::size_t room = dc.max_gaussians > report.before ? dc.max_gaussians - report.before : 0;
    if (candidates.size() > room) {
        std::stable_sort(candidates.begin(), candidates.end(),
                         [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
        candidates.resize(room);
        std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
            return a.set < b.set || (a.set == b.set && a.row < b.row);
        });
    }

    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t s = 0; s < stats_.grad_sum.size(); ++s) {
        GaussianSet& set = s == 0 ? scene_.background : scene_.actors[s - 1].gaussians;
        GaussianSetOptim& opt = s == 0 ? optim_.background : optim_.actors[s - 1];
        std::vector<std::uint8_t> is_split(set.size(), 0);
        std::vector<Gaussian> added;
        for (const auto& c : candidates) {
            if (c.set != s) continue;
            const Gaussian g = set.at(c.row);
            const Vec3 scale = g.log_scale.array().exp();
            if (!c.split) {
                Gaussian clone = g;
                const Vec3 pg = stats_.position_grad[s].row(static_cast<Eigen::Index>(c.row)).transpose();
                if (pg.norm() > 0.0) clone.mean -= 0.5 * scale.mean() * pg.normalized();
                added.push_back(clone);
                ++report.clones;
            } else {
                is_split[c.row] = 1;
                const Mat3 r = quat::to_rotation(g.rotation);
                for (int child = 0; child < 2; ++child) {
                    Gaussian ch = g;
                    const Vec3 z(normal(rng_), normal(rng_), normal(rng_));
                    ch.mean = g.mean + r * scale.cwiseProduct(z);
                    ch.log_scale = (scale / dc.split_factor).array().log();
                    added.push_back(ch);
                }
                ++report.splits;
            }
        }
        std::vector<std::size_t> keep;
        for (std::size_t i = 0; i < set.size(); ++i) {
            if (!is_split[i]) keep.push_back(i);
        }
        GaussianSet next = set.select(keep);
        for (const auto& g : added) next.append(g);
        opt.select_rows(keep);
        opt.append_rows(added.size());

        std::vector<std::size_t> survivors;
        for (std::size_t i = 0; i < next.size(); ++i) {
            if (sigmoid(next.opacity_logits[static_cast<Eigen::Index>(i)]) >= dc.prune_opacity) survivors.push_back(i);
        }
        report.pruned += next.size() - survivors.size();
        if (survivors.size() != next.size()) {
            next = next.select(survivors);
            opt.select_rows(survivors);
        }
        set = std::move(next);
        set.snap();
    }
    stats_.reset(scene_);
    report.after = scene_.gaussian_count();
    return report;
}

RenderOutput render_novel(const SceneModel& scene, const Camera& cam, int camera_index, double timestamp,
                          const RenderSettings& settings, double lateral_shift) {
    const std::size_t row = lookup_embedding(camera_index, timestamp, scene.frames);
    return render(scene, cam.shifted_laterally(lateral_shift), timestamp, row, settings);
}

}  // namespace compsplat
