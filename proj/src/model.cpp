#include "compsplat/model.hpp"

#include "compsplat/parallel.hpp"
#include "compsplat/quaternion.hpp"

#include <algorithm>
#include <cmath>

namespace compsplat {

AppearanceNets::AppearanceNets(const ModelConfig& cfg, std::size_t frame_count, std::size_t class_count,
                               std::mt19937_64& rng)
    : hash(cfg.hash, rng), frames(frame_count, cfg.embedding_dim, rng) {
    const int w = cfg.hidden_width;
    const int d = sh_dim(cfg.sh_degree);
    local = Mlp({cfg.hash.output_dim() + cfg.embedding_dim + 3, w, w, 6}, rng, true);
    global = Mlp({cfg.embedding_dim + 6, w, w, w, 12}, rng, true);
    encoder = Mlp({deform_input_dim(cfg.deform, d, &cfg.class_hash), w, w}, rng, false, true);
    head = Mlp({w, w, 3 + (cfg.deform.deform_all_sh_bands ? d : 3)}, rng, true);
    classes = EmbeddingTable(std::max<std::size_t>(class_count, 1), cfg.class_embedding_dim, rng);
    if (cfg.deform.class_hash_encoding) {
        class_encoder = ClassHashEncoder(cfg.class_hash, cfg.class_embedding_dim, w, rng);
    }
}

std::size_t SceneModel::gaussian_count() const {
    std::size_t n = background.size();
    for (const auto& a : actors) n += a.gaussians.size();
    return n;
}

std::size_t SceneModel::class_count() const {
    int m = 0;
    for (const auto& a : actors) m = std::max(m, a.class_id + 1);
    return static_cast<std::size_t>(m);
}

void SceneModel::snap() {
    background.snap();
    for (auto& a : actors) a.snap();
    sky.snap();
    snap_to_storage(nets.hash.tables);
    snap_to_storage(nets.frames.table);
    nets.local.snap();
    nets.global.snap();
    nets.encoder.snap();
    nets.head.snap();
    snap_to_storage(nets.classes.table);
    nets.class_encoder.encoder.snap();
}

const char* to_string(RenderMode mode) {
    switch (mode) {
        case RenderMode::full: return "full";
        case RenderMode::background: return "background";
        case RenderMode::actors: return "actors";
        case RenderMode::raw: return "raw";
    }
    return "full";
}

RenderMode parse_render_mode(const std::string& s) {
    if (s == "full") return RenderMode::full;
    if (s == "background") return RenderMode::background;
    if (s == "actors") return RenderMode::actors;
    if (s == "raw") return RenderMode::raw;
    throw InvalidParameter("unknown render mode '" + s + "' (expected full, background, actors or raw)");
}

Image sky_background(const SkyCubemap& sky, const Camera& cam) {
    Image bg(cam.width, cam.height, 3);
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            const Vec3 c = sky_color(cam.pixel_ray(x, y), sky);
            for (int ch = 0; ch < 3; ++ch) bg.at(x, y, ch) = c[ch];
        }
    }
    return bg;
}

namespace {

ClassEncoding class_encoding_for(const SceneModel& scene, const ActorModel& actor) {
    ClassEncoding enc;
    enc.encoder = &scene.nets.class_encoder;
    enc.embedding = scene.nets.classes.row(static_cast<std::size_t>(actor.class_id));
    return enc;
}

GaussianSet zero_set(std::size_t n, int degree) {
    GaussianSet g(n, degree);
    g.rotations.setZero();
    return g;
}

}  // namespace

RenderOutput render(const SceneModel& scene, const Camera& cam_in, double timestamp, std::size_t embedding_row,
                    const RenderSettings& settings, PipelineCache* cache) {
    if (!cam_in.valid()) throw InvalidParameter("render: invalid camera");
    if (embedding_row >= scene.nets.frames.rows()) throw InvalidParameter("render: embedding row out of range");
    Camera cam = cam_in;
    cam.near_plane = scene.config.near_plane;
    const ModelConfig& cfg = scene.config;
    const int degree = scene.background.sh_degree;
    const int d = sh_dim(degree);
    const bool raw = settings.mode == RenderMode::raw;
    const bool use_local = !raw && settings.refine.local;
    const bool use_global = !raw && settings.refine.global;
    const bool use_deform = !raw && settings.refine.actor;
    const bool with_background = settings.mode != RenderMode::actors;
    const bool with_actors = settings.mode != RenderMode::background;
    const bool use_sky = settings.mode != RenderMode::actors;

    PipelineCache local_cache;
    PipelineCache& c = cache ? *cache : local_cache;
    c = PipelineCache{};
    c.camera = cam;
    c.timestamp = timestamp;
    c.embedding_row = embedding_row;
    c.settings = settings;
    c.use_local = use_local;
    c.use_global = use_global;
    c.use_deform = use_deform;
    c.use_sky = use_sky;

    // Merge order: actors by id, then the background.
    std::size_t n = with_background ? scene.background.size() : 0;
    if (with_actors) {
        for (const auto& a : scene.actors) n += a.gaussians.size();
    }
    const auto ni = static_cast<Eigen::Index>(n);
    c.means.resize(ni, 3);
    c.rotations.resize(ni, 4);
    c.scales.resize(ni, 3);
    c.opacities.resize(ni);
    c.sh.resize(ni, d);
    c.owner_set.resize(n);
    c.owner_row.resize(n);

    Eigen::Index offset = 0;
    c.actor_offset.assign(scene.actors.size(), 0);
    c.deform.resize(scene.actors.size());
    c.deformed.resize(scene.actors.size());
    c.poses.resize(scene.actors.size());
    if (with_actors) {
        for (std::size_t k = 0; k < scene.actors.size(); ++k) {
            const ActorModel& actor = scene.actors[k];
            const GaussianSet& gs = actor.gaussians;
            const auto nk = static_cast<Eigen::Index>(gs.size());
            c.included_sets.push_back(static_cast<int>(k) + 1);
            c.actor_offset[k] = static_cast<std::size_t>(offset);
            c.poses[k] = interpolate_pose(actor, timestamp);
            if (use_deform) {
                ClassEncoding enc;
                const bool class_hash = cfg.deform.class_hash_encoding;
                if (class_hash) enc = class_encoding_for(scene, actor);
                c.deformed[k] = deform_actor(actor, timestamp, scene.nets.encoder, scene.nets.head, cfg.deform,
                                             class_hash ? &enc : nullptr, &c.deform[k]);
            } else {
                c.deformed[k].means = gs.means;
                c.deformed[k].sh = gs.sh;
            }
            MatX3 wm;
            MatX4 wr;
            actor_to_world(c.deformed[k].means, gs.rotations, c.poses[k].rotation, c.poses[k].translation, wm, wr);
            c.means.middleRows(offset, nk) = wm;
            c.rotations.middleRows(offset, nk) = wr;
            c.scales.middleRows(offset, nk) = gs.log_scales.array().exp().matrix();
            c.opacities.segment(offset, nk) = gs.opacity_logits;
            c.sh.middleRows(offset, nk) = c.deformed[k].sh;
            for (Eigen::Index i = 0; i < nk; ++i) {
                c.owner_set[static_cast<std::size_t>(offset + i)] = static_cast<int>(k) + 1;
                c.owner_row[static_cast<std::size_t>(offset + i)] = static_cast<std::size_t>(i);
            }
            offset += nk;
        }
    }
    if (with_background) {
        const GaussianSet& gs = scene.background;
        const auto nb = static_cast<Eigen::Index>(gs.size());
        c.included_sets.push_back(0);
        c.means.middleRows(offset, nb) = gs.means;
        c.rotations.middleRows(offset, nb) = gs.rotations;
        c.scales.middleRows(offset, nb) = gs.log_scales.array().exp().matrix();
        c.opacities.segment(offset, nb) = gs.opacity_logits;
        c.sh.middleRows(offset, nb) = gs.sh;
        for (Eigen::Index i = 0; i < nb; ++i) {
            c.owner_set[static_cast<std::size_t>(offset + i)] = 0;
            c.owner_row[static_cast<std::size_t>(offset + i)] = static_cast<std::size_t>(i);
        }
    }

    c.cov.resize(n);
    c.projected.resize(n);
    c.view_dirs.resize(ni, 3);
    c.colors.resize(ni, 3);
    c.base_colors.resize(ni, 3);
    const Vec3 center = cam.center();
    parallel_for(n, [&](std::size_t begin, std::size_t end, int) {
        for (std::size_t i = begin; i < end; ++i) {
            const auto r = static_cast<Eigen::Index>(i);
            const Vec3 mean = c.means.row(r).transpose();
            c.cov[i] = build_covariance(c.rotations.row(r).transpose(), c.scales.row(r).transpose());
            c.projected[i] = project_gaussian(mean, c.cov[i], cam);
            const Vec3 v = mean - center;
            const double len = v.norm();
            const Vec3 dir = len > 0.0 ? Vec3(v / len) : Vec3(0.0, 0.0, 1.0);
            c.view_dirs.row(r) = dir.transpose();
            const std::span<const double> sh(c.sh.row(r).data(), static_cast<std::size_t>(d));
            c.colors.row(r) = eval_sh_color(sh, dir, degree).transpose();
            for (int ch = 0; ch < 3; ++ch) c.base_colors(r, ch) = 0.5 + kShC0 * c.sh(r, ch);
        }
    });

    // Only Gaussians whose footprint reaches the image are refined and blended.
    c.splats.reserve(n);
    c.splat_source.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Projected2D& p = c.projected[i];
        if (p.culled) continue;
        const auto r = static_cast<Eigen::Index>(i);
        const int tag = c.owner_set[i] == 0 ? kBackgroundTag : c.owner_set[i] - 1;
        Splat s = make_splat(p.center, p.cov2d, sigmoid(c.opacities[r]), Vec3::Zero(), p.depth, tag);
        if (!(s.radius > 0.0) || !s.center.allFinite()) continue;
        if (s.center.x() + s.radius < 0.0 || s.center.y() + s.radius < 0.0 || s.center.x() - s.radius > cam.width ||
            s.center.y() - s.radius > cam.height)
            continue;
        c.splats.push_back(s);
        c.splat_source.push_back(i);
    }
    const auto na = static_cast<Eigen::Index>(c.splats.size());
    c.active_colors.resize(na, 3);
    MatX3 active_base(na, 3);
    for (Eigen::Index a = 0; a < na; ++a) {
        const auto r = static_cast<Eigen::Index>(c.splat_source[static_cast<std::size_t>(a)]);
        c.active_colors.row(a) = c.colors.row(r);
        active_base.row(a) = c.base_colors.row(r);
    }
    MatX3 blend_colors;
    if (use_local) {
        const Vec3 size = scene.aabb_max - scene.aabb_min;
        c.positions01.resize(na, 3);
        for (Eigen::Index a = 0; a < na; ++a) {
            const auto r = static_cast<Eigen::Index>(c.splat_source[static_cast<std::size_t>(a)]);
            c.positions01.row(a) =
                ((c.means.row(r) - scene.aabb_min.transpose()).array() / size.transpose().array()).matrix();
        }
        blend_colors = local_refine(c.active_colors, active_base, c.positions01, scene.nets.frames.row(embedding_row),
                                    scene.nets.hash, scene.nets.local, &c.local);
    } else {
        blend_colors = c.active_colors;
    }
    for (Eigen::Index a = 0; a < na; ++a) c.splats[static_cast<std::size_t>(a)].color = blend_colors.row(a).transpose();

    c.background = use_sky ? sky_background(scene.sky, cam) : Image(cam.width, cam.height, 3);
    RasterResult rr = rasterize_forward(c.splats, cam.width, cam.height, c.background, settings.raster);
    c.bins = std::move(rr.bins);
    c.raster_totals = std::move(rr.totals);
    RenderOutput out = std::move(rr.output);
    if (use_global) {
        c.transform = global_transform(scene.nets.frames.row(embedding_row), camera_viewpoint_code(cam),
                                       scene.nets.global, &c.global);
        c.composited = out.rgb;
        out.rgb = global_refine(out.rgb, c.transform);
    } else if (cache) {
        c.composited = out.rgb;
    }
    return out;
}

ModelGrads zero_grads(const SceneModel& scene) {
    ModelGrads g;
    const int degree = scene.background.sh_degree;
    g.background = zero_set(scene.background.size(), degree);
    g.screen_grad.emplace_back(scene.background.size(), 0.0);
    g.visible.emplace_back(scene.background.size(), 0);
    for (const auto& a : scene.actors) {
        g.actors.push_back(zero_set(a.gaussians.size(), degree));
        g.key_rotations.push_back(MatX4::Zero(a.key_rotations.rows(), 4));
        g.key_translations.push_back(MatX3::Zero(a.key_translations.rows(), 3));
        g.screen_grad.emplace_back(a.gaussians.size(), 0.0);
        g.visible.emplace_back(a.gaussians.size(), 0);
    }
    g.sky.assign(scene.sky.texels.size(), 0.0);
    g.hash = RowMatrix::Zero(scene.nets.hash.tables.rows(), scene.nets.hash.tables.cols());
    g.frames = RowMatrix::Zero(scene.nets.frames.table.rows(), scene.nets.frames.table.cols());
    g.local = scene.nets.local.zero_grads();
    g.global = scene.nets.global.zero_grads();
    g.encoder = scene.nets.encoder.zero_grads();
    g.head = scene.nets.head.zero_grads();
    g.classes = RowMatrix::Zero(scene.nets.classes.table.rows(), scene.nets.classes.table.cols());
    g.class_encoder = scene.nets.class_encoder.encoder.zero_grads();
    return g;
}

void render_backward(const SceneModel& scene, const PipelineCache& c, const LossGrads& upstream, ModelGrads& grads) {
    const Camera& cam = c.camera;
    const int degree = scene.background.sh_degree;
    const int d = sh_dim(degree);
    const std::size_t n = c.owner_set.size();
    const auto ni = static_cast<Eigen::Index>(n);

    // Global refinement.
    RasterUpstream up;
    if (c.use_global) {
        const GlobalRefineGrads gr =
            global_refine_backward(c.global, c.composited, c.transform, scene.nets.global, upstream.d_rgb, grads.global);
        grads.frames.row(static_cast<Eigen::Index>(c.embedding_row)) += gr.d_embedding.transpose();
        up.d_rgb = gr.d_image;
    } else {
        up.d_rgb = upstream.d_rgb;
    }
    up.d_acc_alpha = upstream.d_acc_alpha;
    up.d_actor_alpha = upstream.d_actor_alpha;
    up.d_depth = upstream.d_depth;

    const RasterGrads rg =
        rasterize_backward(c.splats, c.bins, cam.width, cam.height, c.background, up, c.settings.raster,
                           &c.raster_totals);

    if (c.use_sky) {
        for (int y = 0; y < cam.height; ++y) {
            for (int x = 0; x < cam.width; ++x) {
                const Vec3 dc(rg.d_background.at(x, y, 0), rg.d_background.at(x, y, 1), rg.d_background.at(x, y, 2));
                if (dc.isZero(0.0)) continue;
                sky_color_backward(cam.pixel_ray(x, y), scene.sky, dc, grads.sky);
            }
        }
    }

    // Per-splat screen-space gradients back to per-Gaussian buffers.
    const auto na = static_cast<Eigen::Index>(c.splats.size());
    MatX3 d_blend = MatX3::Zero(na, 3);
    MatX3 d_means = MatX3::Zero(ni, 3);
    MatX4 d_rotations = MatX4::Zero(ni, 4);
    MatX3 d_log_scales = MatX3::Zero(ni, 3);
    VecX d_opacities = VecX::Zero(ni);
    RowMatrix d_sh = RowMatrix::Zero(ni, d);
    std::vector<Mat3> d_cov(n, Mat3::Zero());
    const double half_w = 0.5 * cam.width;
    const double half_h = 0.5 * cam.height;
    parallel_for(c.splats.size(), [&](std::size_t begin, std::size_t end, int) {
        for (std::size_t s = begin; s < end; ++s) {
            const std::size_t i = c.splat_source[s];
            const auto r = static_cast<Eigen::Index>(i);
            const Splat& sp = c.splats[s];
            d_blend.row(static_cast<Eigen::Index>(s)) = rg.d_color[s].transpose();
            const double op = sp.opacity;
            d_opacities[r] = rg.d_opacity[s] * op * (1.0 - op);
            const Mat2 d_cov2d = -sp.conic.transpose() * rg.d_conic[s] * sp.conic.transpose();
            const ProjectionGrad pg = project_gaussian_backward(c.means.row(r).transpose(), c.cov[i], cam,
                                                                rg.d_center[s], d_cov2d, rg.d_depth[s]);
            d_means.row(r) = pg.d_mean.transpose();
            d_cov[i] = pg.d_cov;
        }
    });
    for (std::size_t s = 0; s < c.splats.size(); ++s) {
        const std::size_t i = c.splat_source[s];
        const auto set = static_cast<std::size_t>(c.owner_set[i]);
        const Vec2 ndc(rg.d_center[s].x() * half_w, rg.d_center[s].y() * half_h);
        grads.screen_grad[set][c.owner_row[i]] += ndc.norm();
        grads.visible[set][c.owner_row[i]] = 1;
    }

    // Local refinement (active rows only), scattered back to all Gaussians.
    MatX3 d_colors = MatX3::Zero(ni, 3);
    MatX3 d_base = MatX3::Zero(ni, 3);
    if (c.use_local) {
        const LocalRefineGrads lg = local_refine_backward(c.local, c.active_colors, scene.nets.hash,
                                                          scene.nets.local, d_blend, grads.hash, grads.local);
        const Vec3 size = scene.aabb_max - scene.aabb_min;
        for (Eigen::Index a = 0; a < na; ++a) {
            const auto r = static_cast<Eigen::Index>(c.splat_source[static_cast<std::size_t>(a)]);
            d_colors.row(r) = lg.d_colors.row(a);
            d_base.row(r) = lg.d_base_colors.row(a);
            d_means.row(r) += (lg.d_positions.row(a).array() / size.transpose().array()).matrix();
        }
        grads.frames.row(static_cast<Eigen::Index>(c.embedding_row)) += lg.d_embedding.transpose();
    } else {
        for (Eigen::Index a = 0; a < na; ++a) {
            d_colors.row(static_cast<Eigen::Index>(c.splat_source[static_cast<std::size_t>(a)])) = d_blend.row(a);
        }
    }

    // SH color, view direction, covariance.
    const Vec3 center = cam.center();
    parallel_for(n, [&](std::size_t begin, std::size_t end, int) {
        for (std::size_t i = begin; i < end; ++i) {
            const auto r = static_cast<Eigen::Index>(i);
            const Vec3 dir = c.view_dirs.row(r).transpose();
            const std::span<const double> sh(c.sh.row(r).data(), static_cast<std::size_t>(d));
            const std::span<double> dsh(d_sh.row(r).data(), static_cast<std::size_t>(d));
            const Vec3 d_dir = eval_sh_color_backward(sh, dir, degree, d_colors.row(r).transpose(), dsh);
            for (int ch = 0; ch < 3; ++ch) d_sh(r, ch) += kShC0 * d_base(r, ch);
            const double len = (c.means.row(r).transpose() - center).norm();
            if (len > 0.0) d_means.row(r) += ((d_dir - dir * dir.dot(d_dir)) / len).transpose();
            if (!d_cov[i].isZero(0.0)) {
                const Vec3 scale = c.scales.row(r).transpose();
                const CovarianceGrad cg = build_covariance_backward(c.rotations.row(r).transpose(), scale, d_cov[i]);
                d_rotations.row(r) = cg.d_rotation.transpose();
                d_log_scales.row(r) = cg.d_scale.cwiseProduct(scale).transpose();
            }
        }
    });

    // Scatter into the owning sets.
    for (const int set : c.included_sets) {
        if (set == 0) {
            const auto nb = static_cast<Eigen::Index>(scene.background.size());
            const Eigen::Index off = ni - nb;
            grads.background.means += d_means.middleRows(off, nb);
            grads.background.rotations += d_rotations.middleRows(off, nb);
            grads.background.log_scales += d_log_scales.middleRows(off, nb);
            grads.background.opacity_logits += d_opacities.segment(off, nb);
            grads.background.sh += d_sh.middleRows(off, nb);
            continue;
        }
        const auto k = static_cast<std::size_t>(set - 1);
        const ActorModel& actor = scene.actors[k];
        const auto nk = static_cast<Eigen::Index>(actor.gaussians.size());
        const auto off = static_cast<Eigen::Index>(c.actor_offset[k]);
        GaussianSet& ga = grads.actors[k];
        const ActorToWorldGrads aw =
            actor_to_world_backward(c.deformed[k].means, actor.gaussians.rotations, c.poses[k].rotation,
                                    d_means.middleRows(off, nk), d_rotations.middleRows(off, nk));
        interpolate_pose_backward(actor, c.poses[k], aw.d_pose_rotation, aw.d_pose_translation,
                                  grads.key_rotations[k], grads.key_translations[k]);
        ga.rotations += aw.d_rotations;
        ga.log_scales += d_log_scales.middleRows(off, nk);
        ga.opacity_logits += d_opacities.segment(off, nk);
        const RowMatrix d_sh_obj = d_sh.middleRows(off, nk);
        if (c.use_deform) {
            const bool class_hash = scene.config.deform.class_hash_encoding;
            ClassEncoding enc;
            if (class_hash) enc = class_encoding_for(scene, actor);
            const DeformGrads dg = deform_actor_backward(actor, c.deform[k], scene.nets.encoder, scene.nets.head,
                                                         scene.config.deform, aw.d_means, d_sh_obj, grads.encoder,
                                                         grads.head, class_hash ? &enc : nullptr,
                                                         class_hash ? &grads.class_encoder : nullptr);
            ga.means += dg.d_means;
            ga.sh += dg.d_sh;
            if (class_hash) grads.classes.row(actor.class_id) += dg.d_class_embedding.transpose();
        } else {
            ga.means += aw.d_means;
            ga.sh += d_sh_obj;
        }
    }
}

}  // namespace compsplat
