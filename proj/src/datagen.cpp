#include "compsplat/datagen.hpp"

#include "compsplat/image_io.hpp"
#include "compsplat/parallel.hpp"
#include "compsplat/quaternion.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <random>
#include <set>

namespace compsplat {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kDeg = kPi / 180.0;

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec_from(const json& j, const std::string& key) {
    if (!j.is_array() || j.size() != 3 || !j[0].is_number() || !j[1].is_number() || !j[2].is_number()) {
        throw InvalidParameter("spec: '" + key + "' must be an array of 3 numbers");
    }
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

void reject_unknown(const json& j, const json& defaults, const std::string& where) {
    if (!j.is_object()) throw InvalidParameter("spec: " + where + " must be an object");
    for (const auto& [k, v] : j.items()) {
        if (!defaults.contains(k)) throw InvalidParameter("spec: unknown key '" + where + k + "'");
    }
}

template <typename T>
void read_num(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    if (!j[key].is_number()) throw InvalidParameter(std::string("spec: '") + key + "' must be a number");
    out = j[key].get<T>();
}

json box_json(const SyntheticBox& b) {
    return {{"center", vec_json(b.center)}, {"size", vec_json(b.size)}, {"color", vec_json(b.color)}};
}

json actor_json(const SyntheticActor& a) {
    return {{"class", a.class_name},      {"size", vec_json(a.size)},  {"color", vec_json(a.color)},
            {"start", vec_json(a.start)}, {"end", vec_json(a.end)},    {"yaw_start", a.yaw_start},
            {"yaw_end", a.yaw_end},       {"pulse", a.pulse},          {"points", a.points}};
}

/// An oriented box with its albedo; rotation maps box axes to world.
struct Solid {
    Vec3 center;
    Mat3 rotation;
    Vec3 half;
    Vec3 color;
};

struct Hit {
    double t = std::numeric_limits<double>::infinity();
    Vec3 point = Vec3::Zero();
    Vec3 albedo = Vec3::Zero();
    Vec3 normal = Vec3::Zero();
};

const Vec3 kLight = Vec3(-0.4, -1.0, -0.3).normalized();

double shade(const Vec3& n) { return 0.55 + 0.45 * std::max(0.0, n.dot(kLight)); }

void intersect_box(const Solid& s, const Vec3& o, const Vec3& d, Hit& best) {
    const Vec3 lo = s.rotation.transpose() * (o - s.center);
    const Vec3 ld = s.rotation.transpose() * d;
    double t0 = -std::numeric_limits<double>::infinity();
    double t1 = std::numeric_limits<double>::infinity();
    int axis = -1;
    double sign = 0.0;
    for (int a = 0; a < 3; ++a) {
        if (std::abs(ld[a]) < 1e-12) {
            if (std::abs(lo[a]) > s.half[a]) return;
            continue;
        }
        double ta = (-s.half[a] - lo[a]) / ld[a];
        double tb = (s.half[a] - lo[a]) / ld[a];
        double entry_sign = -1.0;
        if (ta > tb) {
            std::swap(ta, tb);
            entry_sign = 1.0;
        }
        if (ta > t0) {
            t0 = ta;
            axis = a;
            sign = entry_sign;
        }
        t1 = std::min(t1, tb);
    }
    if (axis < 0 || t0 > t1 || t0 <= 1e-6 || t0 >= best.t) return;
    Vec3 ln = Vec3::Zero();
    ln[axis] = sign;
    best.t = t0;
    best.point = o + t0 * d;
    best.normal = s.rotation * ln;
    best.albedo = s.color;
}

struct SceneAt {
    const SyntheticSpec* spec;
    std::vector<Solid> solids;
};

Mat3 yaw_rotation(double degrees) { return quat::to_rotation_unit(quat::from_axis_angle(Vec3::UnitY(), degrees * kDeg)); }

Vec3 actor_albedo(const SyntheticActor& a, double t) { return a.color * (1.0 + a.pulse * std::sin(2.0 * kPi * t)); }

SceneAt scene_at(const SyntheticSpec& spec, double t) {
    SceneAt s{&spec, {}};
    for (const auto& b : spec.boxes) s.solids.push_back({b.center, Mat3::Identity(), 0.5 * b.size, b.color});
    for (const auto& a : spec.actors) {
        const Vec3 c = (1.0 - t) * a.start + t * a.end;
        const double yaw = (1.0 - t) * a.yaw_start + t * a.yaw_end;
        s.solids.push_back({c, yaw_rotation(yaw), 0.5 * a.size, actor_albedo(a, t)});
    }
    return s;
}

Hit trace(const SceneAt& scene, const Vec3& o, const Vec3& d) {
    Hit best;
    const SyntheticSpec& spec = *scene.spec;
    if (d.y() > 1e-12) {
        const double t = (spec.ground_height - o.y()) / d.y();
        const Vec3 p = o + t * d;
        if (t > 1e-6 && p.x() >= spec.aabb_min.x() && p.x() <= spec.aabb_max.x() && p.z() >= spec.aabb_min.z() &&
            p.z() <= spec.aabb_max.z()) {
            best.t = t;
            best.point = p;
            best.normal = Vec3(0.0, -1.0, 0.0);
            const auto cell = static_cast<long long>(std::floor(p.x() / spec.checker_size)) +
                              static_cast<long long>(std::floor(p.z() / spec.checker_size));
            best.albedo = (cell % 2 == 0) ? spec.ground_color_a : spec.ground_color_b;
        }
    }
    for (const auto& s : scene.solids) intersect_box(s, o, d, best);
    return best;
}

Vec3 camera_ray(const Camera& cam, double u, double v) {
    const Vec3 local((u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0);
    return (cam.rotation_camera_to_world() * local).normalized();
}

double timestamp_of(const SyntheticSpec& spec, int ti) {
    return spec.timestamps > 1 ? static_cast<double>(ti) / (spec.timestamps - 1) : 0.0;
}

std::string frame_stem(int ti, int ci) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "t%03d_c%d", ti, ci);
    return buf;
}

/// Samples points uniformly over the five visible faces of a box (the face
/// resting on the ground, local +y, is skipped).
void sample_box_surface(const Solid& s, int count, std::mt19937_64& rng, PointCloud& cloud) {
    struct Face {
        int axis;
        double sign;
        double area;
    };
    std::vector<Face> faces;
    double total = 0.0;
    for (int a = 0; a < 3; ++a) {
        const double area = 4.0 * s.half[(a + 1) % 3] * s.half[(a + 2) % 3];
        for (const double sign : {-1.0, 1.0}) {
            if (a == 1 && sign > 0.0) continue;
            faces.push_back({a, sign, area});
            total += area;
        }
    }
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (int i = 0; i < count; ++i) {
        double pick = u01(rng) * total;
        std::size_t f = 0;
        while (f + 1 < faces.size() && pick > faces[f].area) {
            pick -= faces[f].area;
            ++f;
        }
        Vec3 local;
        local[faces[f].axis] = faces[f].sign * s.half[faces[f].axis];
        for (int k = 1; k <= 2; ++k) {
            const int a = (faces[f].axis + k) % 3;
            local[a] = (2.0 * u01(rng) - 1.0) * s.half[a];
        }
        Vec3 n = Vec3::Zero();
        n[faces[f].axis] = faces[f].sign;
        cloud.positions.push_back(s.center + s.rotation * local);
        cloud.colors.push_back(s.color * shade(s.rotation * n));
    }
}

}  // namespace

void SyntheticSpec::validate() const {
    std::vector<std::string> problems;
    if (width <= 0 || height <= 0) problems.emplace_back("image size must be positive");
    if (timestamps < 1) problems.emplace_back("timestamps must be >= 1");
    if (cameras < 1) problems.emplace_back("cameras must be >= 1");
    if (!(focal_factor > 0.0)) problems.emplace_back("focal_factor must be positive");
    if (!(gain_jitter >= 0.0 && gain_jitter < 1.0)) problems.emplace_back("gain_jitter must be in [0, 1)");
    if (!(tint >= 0.0 && tint < 1.0)) problems.emplace_back("tint must be in [0, 1)");
    if (supersample < 1) problems.emplace_back("supersample must be >= 1");
    if (!(checker_size > 0.0)) problems.emplace_back("checker_size must be positive");
    if (ground_points < 0 || box_points < 0) problems.emplace_back("point counts must be non-negative");
    if ((aabb_max - aabb_min).minCoeff() <= 0.0) problems.emplace_back("aabb max must exceed min");
    for (const auto& b : boxes) {
        if (b.size.minCoeff() <= 0.0) problems.emplace_back("box sizes must be positive");
    }
    for (const auto& a : actors) {
        if (a.size.minCoeff() <= 0.0) problems.emplace_back("actor sizes must be positive");
        if (a.points < 0) problems.emplace_back("actor point counts must be non-negative");
    }
    if (!problems.empty()) {
        std::string msg = "invalid synthetic spec:";
        for (const auto& p : problems) msg += "\n  - " + p;
        throw InvalidParameter(msg);
    }
}

json spec_to_json(const SyntheticSpec& s) {
    json j;
    j["seed"] = s.seed;
    j["width"] = s.width;
    j["height"] = s.height;
    j["timestamps"] = s.timestamps;
    j["cameras"] = s.cameras;
    j["focal_factor"] = s.focal_factor;
    j["camera_yaw"] = s.camera_yaw;
    j["camera_pitch"] = s.camera_pitch;
    j["camera_baseline"] = s.camera_baseline;
    j["ego_travel"] = s.ego_travel;
    j["ground_height"] = s.ground_height;
    j["ground_color_a"] = vec_json(s.ground_color_a);
    j["ground_color_b"] = vec_json(s.ground_color_b);
    j["checker_size"] = s.checker_size;
    j["sky_color"] = vec_json(s.sky_color);
    j["boxes"] = json::array();
    for (const auto& b : s.boxes) j["boxes"].push_back(box_json(b));
    j["actors"] = json::array();
    for (const auto& a : s.actors) j["actors"].push_back(actor_json(a));
    j["gain_jitter"] = s.gain_jitter;
    j["tint"] = s.tint;
    j["supersample"] = s.supersample;
    j["ground_points"] = s.ground_points;
    j["box_points"] = s.box_points;
    j["aabb_min"] = vec_json(s.aabb_min);
    j["aabb_max"] = vec_json(s.aabb_max);
    return j;
}

SyntheticSpec spec_from_json(const json& j) {
    SyntheticSpec s;
    reject_unknown(j, spec_to_json(s), "");
    read_num(j, "seed", s.seed);
    read_num(j, "width", s.width);
    read_num(j, "height", s.height);
    read_num(j, "timestamps", s.timestamps);
    read_num(j, "cameras", s.cameras);
    read_num(j, "focal_factor", s.focal_factor);
    read_num(j, "camera_yaw", s.camera_yaw);
    read_num(j, "camera_pitch", s.camera_pitch);
    read_num(j, "camera_baseline", s.camera_baseline);
    read_num(j, "ego_travel", s.ego_travel);
    read_num(j, "ground_height", s.ground_height);
    read_num(j, "checker_size", s.checker_size);
    read_num(j, "gain_jitter", s.gain_jitter);
    read_num(j, "tint", s.tint);
    read_num(j, "supersample", s.supersample);
    read_num(j, "ground_points", s.ground_points);
    read_num(j, "box_points", s.box_points);
    for (const char* key : {"ground_color_a", "ground_color_b", "sky_color", "aabb_min", "aabb_max"}) {
        if (!j.contains(key)) continue;
        const Vec3 v = vec_from(j[key], key);
        const std::string k = key;
        if (k == "ground_color_a") s.ground_color_a = v;
        if (k == "ground_color_b") s.ground_color_b = v;
        if (k == "sky_color") s.sky_color = v;
        if (k == "aabb_min") s.aabb_min = v;
        if (k == "aabb_max") s.aabb_max = v;
    }
    if (j.contains("boxes")) {
        if (!j["boxes"].is_array()) throw InvalidParameter("spec: 'boxes' must be an array");
        s.boxes.clear();
        for (const auto& bj : j["boxes"]) {
            SyntheticBox b;
            reject_unknown(bj, box_json(b), "boxes.");
            if (bj.contains("center")) b.center = vec_from(bj["center"], "boxes.center");
            if (bj.contains("size")) b.size = vec_from(bj["size"], "boxes.size");
            if (bj.contains("color")) b.color = vec_from(bj["color"], "boxes.color");
            s.boxes.push_back(b);
        }
    }
    if (j.contains("actors")) {
        if (!j["actors"].is_array()) throw InvalidParameter("spec: 'actors' must be an array");
        s.actors.clear();
        for (const auto& aj : j["actors"]) {
            SyntheticActor a;
            reject_unknown(aj, actor_json(a), "actors.");
            if (aj.contains("class")) {
                if (!aj["class"].is_string()) throw InvalidParameter("spec: 'actors.class' must be a string");
                a.class_name = aj["class"].get<std::string>();
            }
            if (aj.contains("size")) a.size = vec_from(aj["size"], "actors.size");
            if (aj.contains("color")) a.color = vec_from(aj["color"], "actors.color");
            if (aj.contains("start")) a.start = vec_from(aj["start"], "actors.start");
            if (aj.contains("end")) a.end = vec_from(aj["end"], "actors.end");
            read_num(aj, "yaw_start", a.yaw_start);
            read_num(aj, "yaw_end", a.yaw_end);
            read_num(aj, "pulse", a.pulse);
            read_num(aj, "points", a.points);
            s.actors.push_back(a);
        }
    }
    s.validate();
    return s;
}

std::vector<FrameAppearance> frame_appearance(const SyntheticSpec& spec) {
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<FrameAppearance> out(synthetic_frame_count(spec));
    for (auto& a : out) {
        a.gain = 1.0 + spec.gain_jitter * u(rng);
        for (int c = 0; c < 3; ++c) a.tint[c] = spec.tint * u(rng);
    }
    return out;
}

std::size_t synthetic_frame_count(const SyntheticSpec& spec) {
    return static_cast<std::size_t>(spec.timestamps) * static_cast<std::size_t>(spec.cameras);
}

Camera synthetic_camera(const SyntheticSpec& spec, int ti, int ci) {
    const double t = timestamp_of(spec, ti);
    const double spread = spec.cameras > 1 ? 2.0 * ci / (spec.cameras - 1) - 1.0 : 0.0;
    const double yaw = spec.camera_yaw * spread * kDeg;
    const double pitch = spec.camera_pitch * kDeg;
    const Vec3 forward(std::sin(yaw) * std::cos(pitch), std::sin(pitch), std::cos(yaw) * std::cos(pitch));
    const Vec3 right = Vec3::UnitY().cross(forward).normalized();
    const Vec3 down = forward.cross(right);
    Camera cam;
    cam.width = spec.width;
    cam.height = spec.height;
    cam.fx = cam.fy = spec.focal_factor * spec.width;
    cam.cx = 0.5 * spec.width;
    cam.cy = 0.5 * spec.height;
    cam.world_from_camera.setIdentity();
    cam.world_from_camera.block<3, 1>(0, 0) = right;
    cam.world_from_camera.block<3, 1>(0, 1) = down;
    cam.world_from_camera.block<3, 1>(0, 2) = forward;
    const double offset = spec.camera_baseline * (ci - 0.5 * (spec.cameras - 1));
    cam.world_from_camera.block<3, 1>(0, 3) = Vec3(offset, 0.0, spec.ego_travel * t);
    return cam;
}

std::vector<ActorTrack> synthetic_tracks(const SyntheticSpec& spec) {
    std::vector<ActorTrack> tracks;
    for (std::size_t k = 0; k < spec.actors.size(); ++k) {
        const SyntheticActor& a = spec.actors[k];
        ActorTrack tr;
        tr.id = static_cast<int>(k);
        tr.class_name = a.class_name;
        tr.size = a.size;
        for (int ti = 0; ti < spec.timestamps; ++ti) {
            const double t = timestamp_of(spec, ti);
            tr.times.push_back(t);
            tr.rotations.push_back(
                quat::from_axis_angle(Vec3::UnitY(), ((1.0 - t) * a.yaw_start + t * a.yaw_end) * kDeg));
            tr.translations.push_back((1.0 - t) * a.start + t * a.end);
        }
        tracks.push_back(std::move(tr));
    }
    return tracks;
}

SyntheticFrame render_synthetic_frame(const SyntheticSpec& spec, std::size_t index,
                                      const std::optional<FrameAppearance>& appearance) {
    if (index >= synthetic_frame_count(spec)) throw InvalidParameter("render_synthetic_frame: index out of range");
    SyntheticFrame f;
    f.timestamp_index = static_cast<int>(index / static_cast<std::size_t>(spec.cameras));
    f.camera_index = static_cast<int>(index % static_cast<std::size_t>(spec.cameras));
    f.timestamp = timestamp_of(spec, f.timestamp_index);
    f.camera = synthetic_camera(spec, f.timestamp_index, f.camera_index);
    f.appearance = appearance ? *appearance : frame_appearance(spec)[index];
    const SceneAt scene = scene_at(spec, f.timestamp);
    const Vec3 origin = f.camera.center();
    const int ss = spec.supersample;
    f.rgb = Image(spec.width, spec.height, 3);
    f.depth = Image(spec.width, spec.height, 1);
    f.sky = Image(spec.width, spec.height, 1);
    const Vec3 forward = f.camera.optical_axis();
    for (int y = 0; y < spec.height; ++y) {
        for (int x = 0; x < spec.width; ++x) {
            Vec3 sum = Vec3::Zero();
            for (int sy = 0; sy < ss; ++sy) {
                for (int sx = 0; sx < ss; ++sx) {
                    const Vec3 d = camera_ray(f.camera, x + (sx + 0.5) / ss, y + (sy + 0.5) / ss);
                    const Hit h = trace(scene, origin, d);
                    if (!std::isfinite(h.t)) {
                        sum += spec.sky_color;
                        continue;
                    }
                    const Vec3 tint = Vec3::Ones() + f.appearance.tint * std::tanh(0.5 * h.point.x());
                    sum += (h.albedo * shade(h.normal)).cwiseProduct(tint);
                }
            }
            const Vec3 c = f.appearance.gain * sum / static_cast<double>(ss * ss);
            for (int ch = 0; ch < 3; ++ch) f.rgb.at(x, y, ch) = std::clamp(c[ch], 0.0, 1.0);
            const Vec3 d = camera_ray(f.camera, x + 0.5, y + 0.5);
            const Hit h = trace(scene, origin, d);
            const bool sky = !std::isfinite(h.t);
            f.sky.at(x, y) = sky ? 1.0 : 0.0;
            f.depth.at(x, y) = sky ? 0.0 : h.t * d.dot(forward);
        }
    }
    return f;
}

void generate_scene(const SyntheticSpec& spec, const fs::path& dir) {
    spec.validate();
    for (const char* sub : {"images", "depth", "sky"}) fs::create_directories(dir / sub);
    const std::size_t n = synthetic_frame_count(spec);
    const std::vector<FrameAppearance> looks = frame_appearance(spec);
    std::vector<SyntheticFrame> frames(n);
    parallel_for(n, [&](std::size_t begin, std::size_t end, int) {
        for (std::size_t i = begin; i < end; ++i) frames[i] = render_synthetic_frame(spec, i, looks[i]);
    });

    SceneDataset ds;
    ds.root = dir;
    ds.aabb_min = spec.aabb_min;
    ds.aabb_max = spec.aabb_max;
    ds.actors = synthetic_tracks(spec);
    json gains = json::array();
    json tints = json::array();
    for (std::size_t i = 0; i < n; ++i) {
        const SyntheticFrame& f = frames[i];
        const std::string stem = frame_stem(f.timestamp_index, f.camera_index);
        CameraFrame cf;
        cf.camera = f.camera;
        cf.camera_index = f.camera_index;
        cf.timestamp = f.timestamp;
        cf.image_path = fs::path("images") / (stem + ".png");
        cf.depth_path = fs::path("depth") / (stem + ".pfm");
        cf.sky_path = fs::path("sky") / (stem + ".png");
        write_png(dir / cf.image_path, f.rgb);
        write_pfm(dir / cf.depth_path, f.depth);
        write_png(dir / cf.sky_path, f.sky);
        ds.frames.push_back(std::move(cf));
        gains.push_back(f.appearance.gain);
        tints.push_back(vec_json(f.appearance.tint));
    }
    ds.generator = {{"seed", spec.seed}, {"gains", gains}, {"tints", tints}, {"spec", spec_to_json(spec)}};

    std::mt19937_64 rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    PointCloud cloud;
    // Ground samples cover the region the rig can see rather than the whole box.
    const double x0 = std::max(spec.aabb_min.x(), -12.0);
    const double x1 = std::min(spec.aabb_max.x(), 12.0);
    const double z0 = std::max(spec.aabb_min.z(), 0.0);
    const double z1 = std::min(spec.aabb_max.z(), spec.ego_travel + 26.0);
    for (int i = 0; i < spec.ground_points; ++i) {
        const Vec3 p(x0 + (x1 - x0) * u01(rng), spec.ground_height, z0 + (z1 - z0) * u01(rng));
        const auto cell = static_cast<long long>(std::floor(p.x() / spec.checker_size)) +
                          static_cast<long long>(std::floor(p.z() / spec.checker_size));
        cloud.positions.push_back(p);
        cloud.colors.push_back(((cell % 2 == 0) ? spec.ground_color_a : spec.ground_color_b) *
                               shade(Vec3(0.0, -1.0, 0.0)));
    }
    const SceneAt first = scene_at(spec, 0.0);
    for (std::size_t b = 0; b < spec.boxes.size(); ++b) sample_box_surface(first.solids[b], spec.box_points, rng, cloud);
    for (std::size_t a = 0; a < spec.actors.size(); ++a) {
        Solid s = first.solids[spec.boxes.size() + a];
        s.half *= 0.99;  // stay strictly inside the tracked box
        sample_box_surface(s, spec.actors[a].points, rng, cloud);
    }
    for (auto& c : cloud.colors) c = c.cwiseMax(0.0).cwiseMin(1.0);
    write_point_cloud(dir / "points.ply", cloud);
    write_scene_json(ds, dir / "scene.json");
}

RenderOutput brute_force_blend_oracle(std::span<const Splat> splats, int width, int height, const Image& background) {
    RenderOutput out(width, height);
    std::vector<std::size_t> order(splats.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return splats[a].depth < splats[b].depth; });
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const Vec2 p(x + 0.5, y + 0.5);
            double transmittance = 1.0;
            Vec3 rgb = Vec3::Zero();
            double acc = 0.0;
            double actor = 0.0;
            double depth = 0.0;
            for (const std::size_t i : order) {
                const Splat& s = splats[i];
                if (!s.center.allFinite()) continue;
                const Vec2 d = p - s.center;
                const double q = d.x() * (s.conic(0, 0) * d.x() + s.conic(0, 1) * d.y()) +
                                 d.y() * (s.conic(1, 0) * d.x() + s.conic(1, 1) * d.y());
                if (q < 0.0) continue;
                double alpha = s.opacity * std::exp(-0.5 * q);
                if (alpha < 1.0 / 255.0) continue;
                alpha = std::min(alpha, 0.99);
                const double w = alpha * transmittance;
                rgb += w * s.color;
                acc += w;
                if (s.actor != kBackgroundTag) actor += w;
                depth += w * s.depth;
                transmittance *= 1.0 - alpha;
            }
            for (int c = 0; c < 3; ++c) {
                const double bg = background.data.empty() ? 0.0 : background.at(x, y, c);
                out.rgb.at(x, y, c) = rgb[c] + (1.0 - acc) * bg;
            }
            out.acc_alpha.at(x, y) = acc;
            out.actor_alpha.at(x, y) = actor;
            out.depth.at(x, y) = acc >= 1e-6 ? depth / acc : 0.0;
        }
    }
    return out;
}

}  // namespace compsplat
