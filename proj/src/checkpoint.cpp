#include "compsplat/checkpoint.hpp"

#include "compsplat/ply.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace compsplat {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kNetsMagic[4] = {'A', 'R', 'M', 'G'};
constexpr char kOptimMagic[4] = {'A', 'R', 'M', 'O'};

// ---------------------------------------------------------------------------
// little-endian binary helpers (the host is assumed little-endian)

class Writer {
public:
    explicit Writer(const fs::path& path) : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
        if (!out_) throw CheckpointError("cannot write " + path.string());
    }
    template <typename T>
    void put(T v) {
        out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
    }
    void bytes(const char* p, std::size_t n) { out_.write(p, static_cast<std::streamsize>(n)); }
    void finish() {
        out_.flush();
        if (!out_) throw CheckpointError("write failed: " + path_.string());
    }

private:
    fs::path path_;
    std::ofstream out_;
};

class Reader {
public:
    explicit Reader(const fs::path& path) : path_(path), in_(path, std::ios::binary) {
        if (!in_) throw CheckpointError("cannot open " + path.string());
    }
    template <typename T>
    T get() {
        T v{};
        bytes(reinterpret_cast<char*>(&v), sizeof(T));
        return v;
    }
    void bytes(char* p, std::size_t n) {
        in_.read(p, static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n) throw CheckpointError("truncated file: " + path_.string());
    }
    std::string string(std::size_t n) {
        if (n > (1u << 20)) throw CheckpointError("corrupt string length in " + path_.string());
        std::string s(n, '\0');
        bytes(s.data(), n);
        return s;
    }
    void expect_end() {
        if (in_.peek() != std::char_traits<char>::eof()) {
            throw CheckpointError("trailing bytes in " + path_.string());
        }
    }
    [[nodiscard]] const fs::path& path() const { return path_; }

private:
    fs::path path_;
    std::ifstream in_;
};

void check_magic(Reader& r, const char (&magic)[4], std::uint32_t version) {
    char m[4];
    r.bytes(m, 4);
    if (std::memcmp(m, magic, 4) != 0) throw CheckpointError("bad magic in " + r.path().string());
    const auto v = r.get<std::uint32_t>();
    if (v != version) {
        throw CheckpointError("unsupported version " + std::to_string(v) + " in " + r.path().string() +
                              " (expected " + std::to_string(version) + ")");
    }
}

// ---------------------------------------------------------------------------
// nets.bin

std::vector<std::pair<std::string, RowMatrix*>> net_tensors(AppearanceNets& nets, bool class_hash) {
    std::vector<std::pair<std::string, RowMatrix*>> out;
    out.emplace_back("hash.tables", &nets.hash.tables);
    const auto add_mlp = [&](const std::string& name, Mlp& mlp) {
        for (std::size_t i = 0; i < mlp.params.size(); ++i) {
            out.emplace_back(name + (i % 2 == 0 ? ".weight" : ".bias") + std::to_string(i / 2), &mlp.params[i]);
        }
    };
    add_mlp("local", nets.local);
    add_mlp("global", nets.global);
    add_mlp("deform.encoder", nets.encoder);
    add_mlp("deform.head", nets.head);
    out.emplace_back("classes.table", &nets.classes.table);
    if (class_hash) add_mlp("classes.encoder", nets.class_encoder.encoder);
    return out;
}

void write_nets(const fs::path& path, const SceneModel& scene) {
    auto& nets = const_cast<AppearanceNets&>(scene.nets);
    Writer w(path);
    w.bytes(kNetsMagic, 4);
    w.put<std::uint32_t>(kNetsVersion);
    const auto tensors = net_tensors(nets, scene.config.deform.class_hash_encoding);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, m] : tensors) {
        w.put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
        w.bytes(name.data(), name.size());
        w.put<std::uint32_t>(2);
        w.put<std::uint32_t>(static_cast<std::uint32_t>(m->rows()));
        w.put<std::uint32_t>(static_cast<std::uint32_t>(m->cols()));
        for (Eigen::Index i = 0; i < m->size(); ++i) w.put<float>(static_cast<float>(m->data()[i]));
    }
    w.finish();
}

void read_nets(const fs::path& path, SceneModel& scene) {
    Reader r(path);
    check_magic(r, kNetsMagic, kNetsVersion);
    std::map<std::string, RowMatrix*> expected;
    for (auto& [name, m] : net_tensors(scene.nets, scene.config.deform.class_hash_encoding)) expected[name] = m;
    const auto count = r.get<std::uint32_t>();
    if (count != expected.size()) {
        throw CheckpointError(path.string() + ": expected " + std::to_string(expected.size()) + " tensors, found " +
                              std::to_string(count));
    }
    for (std::uint32_t t = 0; t < count; ++t) {
        const std::string name = r.string(r.get<std::uint32_t>());
        const auto it = expected.find(name);
        if (it == expected.end()) throw CheckpointError(path.string() + ": unexpected tensor '" + name + "'");
        const auto ndims = r.get<std::uint32_t>();
        if (ndims != 2) throw CheckpointError(path.string() + ": tensor '" + name + "' must be 2-D");
        const auto rows = r.get<std::uint32_t>();
        const auto cols = r.get<std::uint32_t>();
        RowMatrix& m = *it->second;
        if (rows != m.rows() || cols != m.cols()) {
            throw CheckpointError(path.string() + ": tensor '" + name + "' has shape " + std::to_string(rows) + "x" +
                                  std::to_string(cols) + ", configuration expects " + std::to_string(m.rows()) +
                                  "x" + std::to_string(m.cols()));
        }
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = r.get<float>();
        expected.erase(it);
    }
    r.expect_end();
}

// ---------------------------------------------------------------------------
// gaussians.ply

PlyTable gaussians_table(const SceneModel& scene) {
    const int d = sh_dim(scene.config.sh_degree);
    PlyTable t;
    for (const char* n : {"x", "y", "z", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3",
                          "opacity"}) {
        t.properties.push_back({n, PlyType::float32});
    }
    for (int k = 0; k < d; ++k) t.properties.push_back({"f_" + std::to_string(k), PlyType::float32});
    t.properties.push_back({"set", PlyType::int32});
    t.rows = scene.gaussian_count();
    t.values.reserve(t.rows * t.properties.size());
    const auto emit = [&](const GaussianSet& g, int set) {
        if (g.sh_dimension() != d) throw CheckpointError("SH degree differs between Gaussian sets");
        for (std::size_t i = 0; i < g.size(); ++i) {
            const auto r = static_cast<Eigen::Index>(i);
            for (int c = 0; c < 3; ++c) t.values.push_back(g.means(r, c));
            for (int c = 0; c < 3; ++c) t.values.push_back(g.log_scales(r, c));
            for (int c = 0; c < 4; ++c) t.values.push_back(g.rotations(r, c));
            t.values.push_back(g.opacity_logits[r]);
            for (int k = 0; k < d; ++k) t.values.push_back(g.sh(r, k));
            t.values.push_back(set);
        }
    };
    emit(scene.background, -1);
    for (const auto& a : scene.actors) emit(a.gaussians, a.id);
    return t;
}

void read_gaussians(const fs::path& path, SceneModel& scene) {
    const PlyTable t = read_ply(path);
    const int d = sh_dim(scene.config.sh_degree);
    std::vector<int> cols;
    for (const char* n : {"x", "y", "z", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3",
                          "opacity"}) {
        cols.push_back(t.require_column(n));
    }
    for (int k = 0; k < d; ++k) cols.push_back(t.require_column("f_" + std::to_string(k)));
    const int set_col = t.require_column("set");
    if (t.column("f_" + std::to_string(d)) >= 0) {
        throw CheckpointError(path.string() + ": more SH coefficients than the configured degree");
    }

    std::map<int, std::size_t> set_index{{-1, 0}};
    for (std::size_t k = 0; k < scene.actors.size(); ++k) set_index[scene.actors[k].id] = k + 1;
    std::vector<std::vector<std::size_t>> rows(1 + scene.actors.size());
    for (std::size_t i = 0; i < t.rows; ++i) {
        const auto it = set_index.find(static_cast<int>(t.at(i, set_col)));
        if (it == set_index.end()) {
            throw CheckpointError(path.string() + ": row " + std::to_string(i) + " references unknown actor " +
                                  std::to_string(static_cast<int>(t.at(i, set_col))));
        }
        rows[it->second].push_back(i);
    }
    for (std::size_t s = 0; s < rows.size(); ++s) {
        GaussianSet g(rows[s].size(), scene.config.sh_degree);
        for (std::size_t j = 0; j < rows[s].size(); ++j) {
            const std::size_t i = rows[s][j];
            const auto r = static_cast<Eigen::Index>(j);
            for (int c = 0; c < 3; ++c) g.means(r, c) = t.at(i, cols[c]);
            for (int c = 0; c < 3; ++c) g.log_scales(r, c) = t.at(i, cols[3 + c]);
            for (int c = 0; c < 4; ++c) g.rotations(r, c) = t.at(i, cols[6 + c]);
            g.opacity_logits[r] = t.at(i, cols[10]);
            for (int k = 0; k < d; ++k) g.sh(r, k) = t.at(i, cols[11 + k]);
        }
        if (s == 0) {
            scene.background = std::move(g);
        } else {
            scene.actors[s - 1].gaussians = std::move(g);
        }
    }
}

// ---------------------------------------------------------------------------
// meta.json

json matrix_json(const RowMatrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

template <typename M>
void fill_matrix(const json& j, M& m, Eigen::Index cols, const std::string& what) {
    if (!j.is_array()) throw CheckpointError("meta.json: " + what + " must be an array");
    m.resize(static_cast<Eigen::Index>(j.size()), cols);
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_array() || static_cast<Eigen::Index>(j[i].size()) != cols) {
            throw CheckpointError("meta.json: " + what + " row " + std::to_string(i) + " has the wrong width");
        }
        for (Eigen::Index c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(i), c) = j[i][c].get<double>();
    }
}

json meta_json(const SceneModel& scene, const TrainConfig& config, std::int64_t iteration) {
    TrainConfig cfg = config;
    cfg.model = scene.config;
    json meta;
    meta["format"] = "compsplat-checkpoint";
    meta["iteration"] = iteration;
    meta["config"] = config_to_json(cfg);
    meta["aabb"] = {{"min", {scene.aabb_min.x(), scene.aabb_min.y(), scene.aabb_min.z()}},
                    {"max", {scene.aabb_max.x(), scene.aabb_max.y(), scene.aabb_max.z()}}};
    json frames = json::array();
    for (const auto& f : scene.frames) frames.push_back({{"camera_index", f.camera_index}, {"timestamp", f.timestamp}});
    meta["frames"] = std::move(frames);
    meta["frame_embeddings"] = matrix_json(scene.nets.frames.table);
    json actors = json::array();
    for (const auto& a : scene.actors) {
        actors.push_back({{"id", a.id},
                          {"class_id", a.class_id},
                          {"class_name", a.class_name},
                          {"box_size", {a.box_size.x(), a.box_size.y(), a.box_size.z()}},
                          {"gaussians", a.gaussians.size()},
                          {"key_times", a.key_times},
                          {"key_rotations", matrix_json(a.key_rotations)},
                          {"key_translations", matrix_json(a.key_translations)}});
    }
    meta["actors"] = std::move(actors);
    meta["sky"] = {{"size", scene.sky.size}, {"texels", scene.sky.texels}};
    return meta;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + path.string());
    out << text;
    if (!out) throw CheckpointError("write failed: " + path.string());
}

json read_json(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw CheckpointError(path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// optimizer.bin

void write_adam(Writer& w, Adam& a) {
    w.put<std::uint64_t>(a.size());
    w.put<std::uint64_t>(a.row_dim());
    w.put<std::uint64_t>(a.steps());
    for (const double v : a.first_moment()) w.put<double>(v);
    for (const double v : a.second_moment()) w.put<double>(v);
    for (const std::uint64_t s : a.row_steps()) w.put<std::uint64_t>(s);
}

void read_adam(Reader& r, Adam& a) {
    const auto size = r.get<std::uint64_t>();
    const auto row_dim = r.get<std::uint64_t>();
    if (size != a.size() || row_dim != a.row_dim()) {
        throw CheckpointError(r.path().string() + ": optimizer group shape does not match the model");
    }
    a.set_steps(r.get<std::uint64_t>());
    for (double& v : a.first_moment()) v = r.get<double>();
    for (double& v : a.second_moment()) v = r.get<double>();
    for (std::uint64_t& s : a.row_steps()) s = r.get<std::uint64_t>();
}

}  // namespace

void save_checkpoint(const fs::path& dir, const SceneModel& scene, const TrainConfig& config,
                     std::int64_t iteration) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw CheckpointError("cannot create " + dir.string() + ": " + ec.message());
    write_ply(dir / "gaussians.ply", gaussians_table(scene));
    write_nets(dir / "nets.bin", scene);
    write_text(dir / "meta.json", meta_json(scene, config, iteration).dump(1) + "\n");
}

Checkpoint load_checkpoint(const fs::path& dir) {
    const json meta = read_json(dir / "meta.json");
    Checkpoint ck;
    try {
        ck.config = config_from_json(meta.at("config"));
        ck.iteration = meta.at("iteration").get<std::int64_t>();
        SceneModel& s = ck.scene;
        s.config = ck.config.model;
        const auto& lo = meta.at("aabb").at("min");
        const auto& hi = meta.at("aabb").at("max");
        s.aabb_min = Vec3(lo.at(0).get<double>(), lo.at(1).get<double>(), lo.at(2).get<double>());
        s.aabb_max = Vec3(hi.at(0).get<double>(), hi.at(1).get<double>(), hi.at(2).get<double>());
        for (const auto& f : meta.at("frames")) {
            s.frames.push_back({f.at("camera_index").get<int>(), f.at("timestamp").get<double>()});
        }
        for (const auto& a : meta.at("actors")) {
            ActorModel m;
            m.id = a.at("id").get<int>();
            m.class_id = a.at("class_id").get<int>();
            m.class_name = a.at("class_name").get<std::string>();
            const auto& b = a.at("box_size");
            m.box_size = Vec3(b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>());
            m.key_times = a.at("key_times").get<std::vector<double>>();
            fill_matrix(a.at("key_rotations"), m.key_rotations, 4, "key_rotations");
            fill_matrix(a.at("key_translations"), m.key_translations, 3, "key_translations");
            if (m.key_rotations.rows() != static_cast<Eigen::Index>(m.key_times.size()) ||
                m.key_translations.rows() != static_cast<Eigen::Index>(m.key_times.size())) {
                throw CheckpointError("meta.json: actor " + std::to_string(m.id) + " keyframe arrays disagree");
            }
            s.actors.push_back(std::move(m));
        }
        s.sky.size = meta.at("sky").at("size").get<int>();
        s.sky.texels = meta.at("sky").at("texels").get<std::vector<double>>();
        if (s.sky.texels.size() != 3 * s.sky.texel_count()) throw CheckpointError("meta.json: sky texel count");

        std::mt19937_64 rng(0);
        s.nets = AppearanceNets(s.config, s.frames.size(), s.class_count(), rng);
        RowMatrix emb;
        fill_matrix(meta.at("frame_embeddings"), emb, s.config.embedding_dim, "frame_embeddings");
        if (static_cast<std::size_t>(emb.rows()) != s.frames.size()) {
            throw CheckpointError("meta.json: embedding rows do not match frames");
        }
        s.nets.frames.table = std::move(emb);
    } catch (const json::exception& e) {
        throw CheckpointError((dir / "meta.json").string() + ": " + e.what());
    }
    read_nets(dir / "nets.bin", ck.scene);
    read_gaussians(dir / "gaussians.ply", ck.scene);
    for (std::size_t k = 0; k < ck.scene.actors.size(); ++k) {
        const std::size_t declared = meta["actors"][k]["gaussians"].get<std::size_t>();
        if (declared != ck.scene.actors[k].gaussians.size()) {
            throw CheckpointError("gaussians.ply: actor " + std::to_string(ck.scene.actors[k].id) +
                                  " row count disagrees with meta.json");
        }
    }
    return ck;
}

void save_training_state(const fs::path& dir, Trainer& trainer) {
    save_checkpoint(dir, trainer.scene(), trainer.config(), trainer.iteration());
    Writer w(dir / "optimizer.bin");
    w.bytes(kOptimMagic, 4);
    w.put<std::uint32_t>(kOptimizerVersion);
    const auto groups = trainer.optimizer().all();
    w.put<std::uint64_t>(groups.size());
    for (Adam* a : groups) write_adam(w, *a);
    std::ostringstream rng;
    rng << trainer.rng();
    const std::string rs = rng.str();
    w.put<std::uint32_t>(static_cast<std::uint32_t>(rs.size()));
    w.bytes(rs.data(), rs.size());
    const DensifyStats& st = trainer.densify_stats();
    w.put<std::uint64_t>(st.grad_sum.size());
    for (std::size_t s = 0; s < st.grad_sum.size(); ++s) {
        w.put<std::uint64_t>(st.grad_sum[s].size());
        for (const double v : st.grad_sum[s]) w.put<double>(v);
        for (const std::uint32_t c : st.count[s]) w.put<std::uint32_t>(c);
        for (Eigen::Index i = 0; i < st.position_grad[s].size(); ++i) w.put<double>(st.position_grad[s].data()[i]);
    }
    w.finish();
}

void restore_training_state(const fs::path& dir, Trainer& trainer) {
    Reader r(dir / "optimizer.bin");
    check_magic(r, kOptimMagic, kOptimizerVersion);
    const auto groups = trainer.optimizer().all();
    if (r.get<std::uint64_t>() != groups.size()) {
        throw CheckpointError(r.path().string() + ": optimizer group count does not match the model");
    }
    for (Adam* a : groups) read_adam(r, *a);
    std::istringstream rng(r.string(r.get<std::uint32_t>()));
    rng >> trainer.rng();
    if (!rng) throw CheckpointError(r.path().string() + ": corrupt RNG state");
    DensifyStats& st = trainer.densify_stats();
    if (r.get<std::uint64_t>() != st.grad_sum.size()) {
        throw CheckpointError(r.path().string() + ": densification statistics do not match the model");
    }
    for (std::size_t s = 0; s < st.grad_sum.size(); ++s) {
        if (r.get<std::uint64_t>() != st.grad_sum[s].size()) {
            throw CheckpointError(r.path().string() + ": densification statistics do not match the model");
        }
        for (double& v : st.grad_sum[s]) v = r.get<double>();
        for (std::uint32_t& c : st.count[s]) c = r.get<std::uint32_t>();
        for (Eigen::Index i = 0; i < st.position_grad[s].size(); ++i) st.position_grad[s].data()[i] = r.get<double>();
    }
    r.expect_end();
    const json meta = read_json(dir / "meta.json");
    trainer.set_iteration(meta.at("iteration").get<std::int64_t>());
}

}  // namespace compsplat
