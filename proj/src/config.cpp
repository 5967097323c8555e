#include "compsplat/config.hpp"

#include <fstream>
#include <sstream>

namespace compsplat {

using nlohmann::json;

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(HashGridConfig, levels, features, log2_table_size, base_resolution, growth)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(DeformOptions, position_frequencies, time_frequencies, class_hash_encoding,
                                   deform_all_sh_bands)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ModelConfig, sh_degree, hash, embedding_dim, class_embedding_dim, hidden_width,
                                   deform, class_hash, sky_size, near_plane)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(RefinementSwitches, local, global, actor)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(LossWeights, ssim, depth, sky, entropy)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(LearningRates, position_init, position_final, position_decay_steps,
                                   position_scale_by_extent, rotation, scale, opacity, sh, nets_init, nets_final,
                                   pose_translation, pose_rotation, sky)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(DensifyConfig, enabled, interval, start, stop, grad_threshold, prune_opacity,
                                   percent_dense, split_factor, max_gaussians)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(RasterOptions, tile_size, stop_transmittance)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(InitConfig, voxel_size, opacity, knn)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(TrainConfig, iterations, seed, threads, holdout_every, model, refine, loss, lr,
                                   densify, raster, init)

namespace {

bool compatible(const json& reference, const json& value) {
    if (reference.is_boolean()) return value.is_boolean();
    if (reference.is_number_integer()) return value.is_number_integer();
    if (reference.is_number()) return value.is_number();
    if (reference.is_string()) return value.is_string();
    if (reference.is_object()) return value.is_object();
    return reference.type() == value.type();
}

void check_keys(const json& reference, const json& value, const std::string& prefix,
                std::vector<std::string>& problems) {
    for (auto it = value.begin(); it != value.end(); ++it) {
        const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (!reference.contains(it.key())) {
            problems.push_back("unknown key '" + key + "'");
            continue;
        }
        const json& ref = reference.at(it.key());
        if (!compatible(ref, *it)) {
            problems.push_back("key '" + key + "' expects " + std::string(ref.type_name()) + ", got " +
                               std::string(it->type_name()));
            continue;
        }
        if (ref.is_object()) check_keys(ref, *it, key, problems);
    }
}

std::string join(const std::vector<std::string>& items) {
    std::ostringstream ss;
    for (std::size_t i = 0; i < items.size(); ++i) ss << (i ? "; " : "") << items[i];
    return ss.str();
}

}  // namespace

void TrainConfig::validate() const {
    std::vector<std::string> p;
    if (iterations < 0) p.emplace_back("iterations must be nonnegative");
    if (threads < 1) p.emplace_back("threads must be at least 1");
    if (holdout_every < 0 || holdout_every == 1) p.emplace_back("holdout_every must be 0 or at least 2");
    if (model.sh_degree < 0 || model.sh_degree > 3) p.emplace_back("model.sh_degree must be in 0..3");
    if (model.hash.levels < 1 || model.hash.features < 1 || model.hash.log2_table_size < 1 ||
        model.hash.log2_table_size > 24 || model.hash.base_resolution < 1 || !(model.hash.growth >= 1.0)) {
        p.emplace_back("model.hash parameters out of range");
    }
    if (model.embedding_dim < 1 || model.class_embedding_dim < 1 || model.hidden_width < 1) {
        p.emplace_back("model dimensions must be positive");
    }
    if (model.deform.position_frequencies < 1 || model.deform.time_frequencies < 1) {
        p.emplace_back("model.deform frequencies must be positive");
    }
    if (model.sky_size < 1) p.emplace_back("model.sky_size must be positive");
    if (!(model.near_plane > 0.0)) p.emplace_back("model.near_plane must be positive");
    try {
        loss.validate();
    } catch (const InvalidParameter& e) {
        p.emplace_back(e.what());
    }
    if (densify.enabled) {
        if (!(densify.start < densify.stop)) p.emplace_back("densify.start must be below densify.stop");
        if (densify.stop > iterations) p.emplace_back("densify.stop must not exceed iterations");
        if (densify.interval < 1) p.emplace_back("densify.interval must be positive");
    }
    if (!(densify.grad_threshold > 0.0) || !(densify.prune_opacity > 0.0) || !(densify.percent_dense > 0.0) ||
        !(densify.split_factor > 0.0)) {
        p.emplace_back("densify thresholds must be positive");
    }
    if (raster.tile_size < 1) p.emplace_back("raster.tile_size must be positive");
    if (!(raster.stop_transmittance >= 0.0 && raster.stop_transmittance < 1.0)) {
        p.emplace_back("raster.stop_transmittance must lie in [0, 1)");
    }
    if (!(init.voxel_size >= 0.0)) p.emplace_back("init.voxel_size must be nonnegative");
    if (!(init.opacity > 0.0 && init.opacity < 1.0)) p.emplace_back("init.opacity must lie in (0, 1)");
    if (init.knn < 1) p.emplace_back("init.knn must be positive");
    for (const double lr_value : {lr.position_init, lr.position_final, lr.rotation, lr.scale, lr.opacity, lr.sh,
                                  lr.nets_init, lr.nets_final, lr.pose_translation, lr.pose_rotation, lr.sky}) {
        if (!(lr_value >= 0.0)) {
            p.emplace_back("learning rates must be nonnegative");
            break;
        }
    }
    if (!(lr.position_init > 0.0 && lr.position_final > 0.0 && lr.nets_init > 0.0 && lr.nets_final > 0.0)) {
        p.emplace_back("decaying learning rates must be positive");
    }
    if (!p.empty()) throw InvalidParameter("invalid configuration: " + join(p));
}

json config_to_json(const TrainConfig& cfg) { return json(cfg); }

TrainConfig config_from_json(const json& j) {
    if (!j.is_object()) throw InvalidParameter("configuration must be a JSON object");
    json merged = config_to_json(TrainConfig{});
    std::vector<std::string> problems;
    check_keys(merged, j, "", problems);
    if (!problems.empty()) throw InvalidParameter("invalid configuration: " + join(problems));
    merged.merge_patch(j);
    TrainConfig cfg = merged.get<TrainConfig>();
    cfg.validate();
    return cfg;
}

void apply_override(json& j, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw InvalidParameter("override '" + assignment + "' must have the form key=value");
    }
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json* node = &j;
    std::size_t begin = 0;
    while (true) {
        const auto dot = key.find('.', begin);
        const std::string part = key.substr(begin, dot == std::string::npos ? std::string::npos : dot - begin);
        if (!node->is_object() || !node->contains(part)) throw InvalidParameter("unknown key '" + key + "'");
        node = &(*node)[part];
        if (dot == std::string::npos) break;
        begin = dot + 1;
    }
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    if (!compatible(*node, value)) {
        throw InvalidParameter("key '" + key + "' expects " + std::string(node->type_name()) + ", got '" + text +
                               "'");
    }
    *node = value;
}

TrainConfig resolve_config(const std::filesystem::path* file, const std::vector<std::string>& overrides) {
    json j = config_to_json(TrainConfig{});
    if (file) {
        std::ifstream in(*file);
        if (!in) throw InvalidParameter(file->string() + ": cannot open configuration file");
        const json loaded = json::parse(in, nullptr, false);
        if (loaded.is_discarded()) throw InvalidParameter(file->string() + ": configuration is not valid JSON");
        std::vector<std::string> problems;
        if (!loaded.is_object()) problems.emplace_back("configuration must be a JSON object");
        else check_keys(j, loaded, "", problems);
        if (!problems.empty()) throw InvalidParameter(file->string() + ": " + join(problems));
        j.merge_patch(loaded);
    }
    for (const auto& o : overrides) apply_override(j, o);
    return config_from_json(j);
}

}  // namespace compsplat
