#include "compsplat/scene_io.hpp"

#include "compsplat/image_io.hpp"
#include "compsplat/ply.hpp"
#include "compsplat/quaternion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace compsplat {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string join_lines(const std::vector<std::string>& items) {
    std::ostringstream ss;
    ss << items.size() << " problem(s)";
    for (const auto& s : items) ss << "\n  - " << s;
    return ss.str();
}

struct KeyHash {
    std::size_t operator()(const std::array<std::int64_t, 3>& k) const {
        std::uint64_t h = static_cast<std::uint64_t>(k[0]) * 73856093ULL;
        h ^= static_cast<std::uint64_t>(k[1]) * 19349663ULL;
        h ^= static_cast<std::uint64_t>(k[2]) * 83492791ULL;
        return static_cast<std::size_t>(h);
    }
};

using CellKey = std::array<std::int64_t, 3>;

CellKey cell_of(const Vec3& p, double cell) {
    return {static_cast<std::int64_t>(std::floor(p.x() / cell)), static_cast<std::int64_t>(std::floor(p.y() / cell)),
            static_cast<std::int64_t>(std::floor(p.z() / cell))};
}

template <typename T>
bool read_number(const json& j, const char* key, T& out) {
    if (!j.contains(key) || !j.at(key).is_number()) return false;
    out = j.at(key).get<T>();
    return true;
}

bool read_vec3(const json& j, const char* key, Vec3& out) {
    if (!j.contains(key) || !j.at(key).is_array() || j.at(key).size() != 3) return false;
    for (int i = 0; i < 3; ++i) {
        if (!j.at(key)[static_cast<std::size_t>(i)].is_number()) return false;
        out[i] = j.at(key)[static_cast<std::size_t>(i)].get<double>();
    }
    return true;
}

bool read_vec4(const json& j, const char* key, Vec4& out) {
    if (!j.contains(key) || !j.at(key).is_array() || j.at(key).size() != 4) return false;
    for (int i = 0; i < 4; ++i) {
        if (!j.at(key)[static_cast<std::size_t>(i)].is_number()) return false;
        out[i] = j.at(key)[static_cast<std::size_t>(i)].get<double>();
    }
    return true;
}

json vec_json(const Eigen::Ref<const VecX>& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

}  // namespace

SceneValidationError::SceneValidationError(std::vector<std::string> p)
    : std::runtime_error("scene validation failed: " + join_lines(p)), problems(std::move(p)) {}

OrientedBox ActorTrack::box_at(double t) const {
    ActorModel tmp;
    tmp.key_times = times;
    tmp.key_rotations.resize(static_cast<Eigen::Index>(rotations.size()), 4);
    tmp.key_translations.resize(static_cast<Eigen::Index>(translations.size()), 3);
    for (std::size_t i = 0; i < rotations.size(); ++i) {
        tmp.key_rotations.row(static_cast<Eigen::Index>(i)) = rotations[i].transpose();
        tmp.key_translations.row(static_cast<Eigen::Index>(i)) = translations[i].transpose();
    }
    const ActorPose pose = interpolate_pose(tmp, t);
    OrientedBox box;
    box.center = pose.translation;
    box.rotation = quat::normalized(pose.rotation);
    box.size = size;
    return box;
}

PointCloud read_point_cloud(const fs::path& path) {
    const PlyTable t = read_ply(path);
    const int x = t.require_column("x");
    const int y = t.require_column("y");
    const int z = t.require_column("z");
    const int r = t.column("red");
    const int g = t.column("green");
    const int b = t.column("blue");
    PointCloud cloud;
    cloud.positions.reserve(t.rows);
    cloud.colors.reserve(t.rows);
    for (std::size_t i = 0; i < t.rows; ++i) {
        cloud.positions.emplace_back(t.at(i, x), t.at(i, y), t.at(i, z));
        if (r >= 0 && g >= 0 && b >= 0) {
            cloud.colors.emplace_back(t.at(i, r) / 255.0, t.at(i, g) / 255.0, t.at(i, b) / 255.0);
        } else {
            cloud.colors.emplace_back(0.5, 0.5, 0.5);
        }
    }
    return cloud;
}

void write_point_cloud(const fs::path& path, const PointCloud& cloud) {
    PlyTable t;
    t.properties = {{"x", PlyType::float32},  {"y", PlyType::float32},    {"z", PlyType::float32},
                    {"red", PlyType::uint8}, {"green", PlyType::uint8}, {"blue", PlyType::uint8}};
    t.rows = cloud.positions.size();
    t.values.reserve(t.rows * 6);
    for (std::size_t i = 0; i < t.rows; ++i) {
        for (int k = 0; k < 3; ++k) t.values.push_back(cloud.positions[i][k]);
        for (int k = 0; k < 3; ++k) t.values.push_back(to_byte(cloud.colors[i][k]));
    }
    write_ply(path, t);
}

SceneDataset load_scene(const fs::path& dir, bool load_images) {
    const fs::path json_path = dir / "scene.json";
    std::ifstream in(json_path);
    if (!in) throw SceneValidationError({json_path.string() + ": cannot open"});
    const json j = json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw SceneValidationError({json_path.string() + ": not a JSON object"});

    std::vector<std::string> p;
    SceneDataset scene;
    scene.root = dir;
    if (j.contains("generator")) scene.generator = j.at("generator");

    if (!j.contains("aabb") || !read_vec3(j.at("aabb"), "min", scene.aabb_min) ||
        !read_vec3(j.at("aabb"), "max", scene.aabb_max)) {
        p.emplace_back("aabb: expected {\"min\": [x,y,z], \"max\": [x,y,z]}");
    } else if (!(scene.aabb_min.array() < scene.aabb_max.array()).all()) {
        p.emplace_back("aabb: min must be below max on every axis");
    }

    if (!j.contains("cameras") || !j.at("cameras").is_array() || j.at("cameras").empty()) {
        p.emplace_back("cameras: expected a non-empty array");
    } else {
        std::size_t idx = 0;
        for (const auto& c : j.at("cameras")) {
            const std::string where = "cameras[" + std::to_string(idx++) + "]";
            CameraFrame f;
            Camera& cam = f.camera;
            if (!read_number(c, "fx", cam.fx) || !read_number(c, "fy", cam.fy) || !read_number(c, "cx", cam.cx) ||
                !read_number(c, "cy", cam.cy) || !read_number(c, "width", cam.width) ||
                !read_number(c, "height", cam.height)) {
                p.push_back(where + ": missing intrinsics (fx, fy, cx, cy, width, height)");
            } else if (!cam.valid()) {
                p.push_back(where + ": intrinsics and image size must be positive");
            }
            if (!read_number(c, "camera_index", f.camera_index)) p.push_back(where + ": missing camera_index");
            if (!read_number(c, "timestamp", f.timestamp)) {
                p.push_back(where + ": missing timestamp");
            } else if (!(f.timestamp >= 0.0 && f.timestamp <= 1.0)) {
                p.push_back(where + ": timestamp must lie in [0, 1]");
            }
            if (!c.contains("world_from_camera") || !c.at("world_from_camera").is_array() ||
                c.at("world_from_camera").size() != 16) {
                p.push_back(where + ": world_from_camera must be 16 numbers (row-major 4x4)");
            } else {
                for (int k = 0; k < 16; ++k) {
                    const auto& v = c.at("world_from_camera")[static_cast<std::size_t>(k)];
                    cam.world_from_camera(k / 4, k % 4) = v.is_number() ? v.get<double>() : NAN;
                }
                const Mat3 r = cam.world_from_camera.topLeftCorner<3, 3>();
                if (!cam.world_from_camera.allFinite()) {
                    p.push_back(where + ": world_from_camera has non-numeric entries");
                } else if (!(r.transpose() * r - Mat3::Identity()).isZero(1e-5) || r.determinant() < 0.0 ||
                           !cam.world_from_camera.row(3).isApprox(Eigen::RowVector4d(0, 0, 0, 1))) {
                    p.push_back(where + ": world_from_camera must be a rigid transform");
                }
            }
            const auto file_field = [&](const char* key, fs::path& out, bool required) {
                if (!c.contains(key) || c.at(key).is_null()) {
                    if (required) p.push_back(where + ": missing " + key + " path");
                    return;
                }
                if (!c.at(key).is_string()) {
                    p.push_back(where + ": " + key + " must be a string path");
                    return;
                }
                out = dir / c.at(key).get<std::string>();
                if (!fs::exists(out)) p.push_back(where + ": " + key + " file not found: " + out.string());
            };
            file_field("image", f.image_path, true);
            file_field("depth", f.depth_path, false);
            file_field("sky", f.sky_path, false);
            scene.frames.push_back(std::move(f));
        }
        std::map<int, double> last_time;
        for (std::size_t i = 0; i < scene.frames.size(); ++i) {
            const auto& f = scene.frames[i];
            const auto it = last_time.find(f.camera_index);
            if (it != last_time.end() && f.timestamp < it->second) {
                p.push_back("cameras[" + std::to_string(i) + "]: timestamps of camera " +
                            std::to_string(f.camera_index) + " are not sorted");
            }
            last_time[f.camera_index] = f.timestamp;
        }
    }

    if (j.contains("actors")) {
        if (!j.at("actors").is_array()) {
            p.emplace_back("actors: expected an array");
        } else {
            std::size_t idx = 0;
            for (const auto& a : j.at("actors")) {
                const std::string where = "actors[" + std::to_string(idx) + "]";
                ActorTrack t;
                t.id = static_cast<int>(idx++);
                read_number(a, "id", t.id);
                if (a.contains("class") && a.at("class").is_string()) t.class_name = a.at("class").get<std::string>();
                if (!read_vec3(a, "size", t.size) || !(t.size.array() > 0.0).all()) {
                    p.push_back(where + ": size must be three positive numbers");
                }
                if (!a.contains("keyframes") || !a.at("keyframes").is_array() || a.at("keyframes").empty()) {
                    p.push_back(where + ": keyframes must be a non-empty array");
                } else {
                    for (const auto& k : a.at("keyframes")) {
                        double time = 0.0;
                        Vec4 q = quat::identity();
                        Vec3 tr = Vec3::Zero();
                        if (!read_number(k, "timestamp", time) || !read_vec4(k, "rotation", q) ||
                            !read_vec3(k, "translation", tr)) {
                            p.push_back(where + ": keyframe needs timestamp, rotation [w,x,y,z], translation");
                            continue;
                        }
                        if (!(q.norm() > 1e-12)) p.push_back(where + ": keyframe rotation has zero norm");
                        if (!t.times.empty() && !(time > t.times.back())) {
                            p.push_back(where + ": keyframe timestamps must be strictly increasing");
                        }
                        t.times.push_back(time);
                        t.rotations.push_back(q.norm() > 1e-12 ? quat::normalized(q) : quat::identity());
                        t.translations.push_back(tr);
                    }
                }
                scene.actors.push_back(std::move(t));
            }
        }
    }

    fs::path points_path = dir / "points.ply";
    if (j.contains("points")) {
        if (j.at("points").is_string()) points_path = dir / j.at("points").get<std::string>();
        else p.emplace_back("points: must be a string path");
    }
    if (!fs::exists(points_path)) {
        p.push_back("points file not found: " + points_path.string());
    } else {
        try {
            scene.points = read_point_cloud(points_path);
        } catch (const std::exception& e) {
            p.push_back(e.what());
        }
    }

    if (load_images && p.empty()) {
        for (std::size_t i = 0; i < scene.frames.size(); ++i) {
            auto& f = scene.frames[i];
            const std::string where = "cameras[" + std::to_string(i) + "]";
            try {
                f.rgb = read_png(f.image_path, 3);
                if (f.rgb.width != f.camera.width || f.rgb.height != f.camera.height) {
                    p.push_back(where + ": image size differs from the declared width/height");
                }
                if (!f.depth_path.empty()) {
                    f.depth = read_pfm(f.depth_path);
                    if (f.depth.width != f.camera.width || f.depth.height != f.camera.height ||
                        f.depth.channels != 1) {
                        p.push_back(where + ": depth map must be single-channel at image resolution");
                    }
                }
                if (!f.sky_path.empty()) {
                    f.sky = read_png(f.sky_path, 1);
                    if (f.sky.width != f.camera.width || f.sky.height != f.camera.height) {
                        p.push_back(where + ": sky mask size differs from the image");
                    }
                    for (double& v : f.sky.data) v = v >= 0.5 ? 1.0 : 0.0;
                }
            } catch (const std::exception& e) {
                p.push_back(where + ": " + e.what());
            }
        }
    }
    if (!p.empty()) throw SceneValidationError(std::move(p));
    return scene;
}

void write_scene_json(const SceneDataset& scene, const fs::path& path) {
    json j;
    j["version"] = 1;
    j["aabb"] = {{"min", vec_json(scene.aabb_min)}, {"max", vec_json(scene.aabb_max)}};
    j["points"] = "points.ply";
    json cams = json::array();
    for (const auto& f : scene.frames) {
        json c;
        c["fx"] = f.camera.fx;
        c["fy"] = f.camera.fy;
        c["cx"] = f.camera.cx;
        c["cy"] = f.camera.cy;
        c["width"] = f.camera.width;
        c["height"] = f.camera.height;
        c["camera_index"] = f.camera_index;
        c["timestamp"] = f.timestamp;
        json m = json::array();
        for (int k = 0; k < 16; ++k) m.push_back(f.camera.world_from_camera(k / 4, k % 4));
        c["world_from_camera"] = m;
        c["image"] = f.image_path.generic_string();
        if (!f.depth_path.empty()) c["depth"] = f.depth_path.generic_string();
        if (!f.sky_path.empty()) c["sky"] = f.sky_path.generic_string();
        cams.push_back(c);
    }
    j["cameras"] = cams;
    json actors = json::array();
    for (const auto& a : scene.actors) {
        json aj;
        aj["id"] = a.id;
        aj["class"] = a.class_name;
        aj["size"] = vec_json(a.size);
        json keys = json::array();
        for (std::size_t k = 0; k < a.times.size(); ++k) {
            keys.push_back({{"timestamp", a.times[k]},
                            {"rotation", vec_json(a.rotations[k])},
                            {"translation", vec_json(a.translations[k])}});
        }
        aj["keyframes"] = keys;
        actors.push_back(aj);
    }
    j["actors"] = actors;
    if (!scene.generator.is_null()) j["generator"] = scene.generator;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError(path.string() + ": cannot open for writing");
    out << j.dump(1) << '\n';
}

PointCloud voxel_downsample(const PointCloud& cloud, double voxel_size) {
    if (!(voxel_size > 0.0)) return cloud;
    std::unordered_set<CellKey, KeyHash> seen;
    PointCloud out;
    for (std::size_t i = 0; i < cloud.positions.size(); ++i) {
        if (!seen.insert(cell_of(cloud.positions[i], voxel_size)).second) continue;
        out.positions.push_back(cloud.positions[i]);
        out.colors.push_back(cloud.colors[i]);
    }
    return out;
}

std::vector<double> knn_mean_distance(const std::vector<Vec3>& points, int k) {
    const std::size_t n = points.size();
    std::vector<double> out(n, 0.0);
    if (n < 2) {
        std::fill(out.begin(), out.end(), 0.01);
        return out;
    }
    Vec3 lo = points[0];
    Vec3 hi = points[0];
    for (const auto& p : points) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    const double span = std::max((hi - lo).maxCoeff(), 1e-9);
    const double cell = std::max(span / std::cbrt(static_cast<double>(n)), 1e-9);
    std::unordered_map<CellKey, std::vector<std::size_t>, KeyHash> grid;
    for (std::size_t i = 0; i < n; ++i) grid[cell_of(points[i], cell)].push_back(i);
    const std::size_t want = std::min<std::size_t>(static_cast<std::size_t>(k), n - 1);

    for (std::size_t i = 0; i < n; ++i) {
        const CellKey c = cell_of(points[i], cell);
        std::vector<double> best;  // sorted squared distances, size ≤ want
        for (std::int64_t r = 0;; ++r) {
            for (std::int64_t dx = -r; dx <= r; ++dx) {
                for (std::int64_t dy = -r; dy <= r; ++dy) {
                    for (std::int64_t dz = -r; dz <= r; ++dz) {
                        if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != r) continue;
                        const auto it = grid.find({c[0] + dx, c[1] + dy, c[2] + dz});
                        if (it == grid.end()) continue;
                        for (const std::size_t jdx : it->second) {
                            if (jdx == i) continue;
                            const double d2 = (points[jdx] - points[i]).squaredNorm();
                            if (best.size() < want || d2 < best.back()) {
                                best.insert(std::upper_bound(best.begin(), best.end(), d2), d2);
                                if (best.size() > want) best.pop_back();
                            }
                        }
                    }
                }
            }
            // Everything beyond ring r is at least r·cell away.
            const double reach = static_cast<double>(r) * cell;
            if (best.size() == want && best.back() <= reach * reach) break;
        }
        double sum = 0.0;
        for (const double d2 : best) sum += std::sqrt(d2);
        out[i] = sum / static_cast<double>(best.size());
    }
    return out;
}

std::vector<OrientedBox> boxes_at(const SceneDataset& scene, double t) {
    std::vector<OrientedBox> boxes;
    for (const auto& a : scene.actors) boxes.push_back(a.box_at(t));
    return boxes;
}

std::vector<std::size_t> train_indices(std::size_t frame_count, int every) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < frame_count; ++i) {
        if (every <= 0 || i % static_cast<std::size_t>(every) != 0) out.push_back(i);
    }
    return out;
}

std::vector<std::size_t> test_indices(std::size_t frame_count, int every) {
    std::vector<std::size_t> out;
    if (every <= 0) return out;
    for (std::size_t i = 0; i < frame_count; i += static_cast<std::size_t>(every)) out.push_back(i);
    return out;
}

SceneModel init_scene_model(const SceneDataset& scene, const std::vector<std::size_t>& train_frames,
                            const ModelConfig& model, const InitConfig& init, std::mt19937_64& rng) {
    if (train_frames.empty()) throw InvalidParameter("init_scene_model: no training frames");
    SceneModel m;
    m.config = model;
    m.aabb_min = scene.aabb_min;
    m.aabb_max = scene.aabb_max;
    for (const std::size_t i : train_frames) {
        if (i >= scene.frames.size()) throw InvalidParameter("init_scene_model: training frame index out of range");
        m.frames.push_back({scene.frames[i].camera_index, scene.frames[i].timestamp});
    }

    std::map<std::string, int> class_ids;
    for (const auto& t : scene.actors) class_ids.emplace(t.class_name, static_cast<int>(class_ids.size()));

    const PointCloud cloud = voxel_downsample(scene.points, init.voxel_size);
    const std::vector<double> dist = knn_mean_distance(cloud.positions, init.knn);
    const double opacity_logit = logit(init.opacity);
    const int degree = model.sh_degree;
    const int d = sh_dim(degree);

    const auto make = [&](const Vec3& pos, std::size_t i) {
        Gaussian g;
        g.mean = pos;
        g.rotation = quat::identity();
        g.log_scale = Vec3::Constant(std::log(std::max(dist[i], 1e-7)));
        g.opacity_logit = opacity_logit;
        g.sh = VecX::Zero(d);
        for (int c = 0; c < 3; ++c) g.sh[c] = (cloud.colors[i][c] - 0.5) / kShC0;
        return g;
    };

    std::vector<OrientedBox> first_boxes;
    for (const auto& t : scene.actors) {
        OrientedBox b;
        b.center = t.translations.front();
        b.rotation = t.rotations.front();
        b.size = t.size;
        first_boxes.push_back(b);
        ActorModel a;
        a.id = t.id;
        a.class_name = t.class_name;
        a.class_id = class_ids.at(t.class_name);
        a.box_size = t.size;
        a.gaussians = GaussianSet(0, degree);
        a.key_times = t.times;
        a.key_rotations.resize(static_cast<Eigen::Index>(t.times.size()), 4);
        a.key_translations.resize(static_cast<Eigen::Index>(t.times.size()), 3);
        for (std::size_t k = 0; k < t.times.size(); ++k) {
            a.key_rotations.row(static_cast<Eigen::Index>(k)) = t.rotations[k].transpose();
            a.key_translations.row(static_cast<Eigen::Index>(k)) = t.translations[k].transpose();
        }
        m.actors.push_back(std::move(a));
    }

    m.background = GaussianSet(0, degree);
    std::vector<Gaussian> bg;
    std::vector<std::vector<Gaussian>> per_actor(m.actors.size());
    for (std::size_t i = 0; i < cloud.positions.size(); ++i) {
        const Vec3& p = cloud.positions[i];
        bool assigned = false;
        for (std::size_t k = 0; k < first_boxes.size() && !assigned; ++k) {
            if (!first_boxes[k].contains(p)) continue;
            per_actor[k].push_back(make(first_boxes[k].to_local(p), i));
            assigned = true;
        }
        if (!assigned) bg.push_back(make(p, i));
    }
    const auto fill = [&](GaussianSet& set, const std::vector<Gaussian>& items) {
        set = GaussianSet(items.size(), degree);
        for (std::size_t i = 0; i < items.size(); ++i) set.set(i, items[i]);
    };
    fill(m.background, bg);
    for (std::size_t k = 0; k < m.actors.size(); ++k) fill(m.actors[k].gaussians, per_actor[k]);

    m.sky = SkyCubemap(model.sky_size, 0.5);
    m.nets = AppearanceNets(model, m.frames.size(), class_ids.size(), rng);
    m.snap();
    return m;
}

}  // namespace compsplat
