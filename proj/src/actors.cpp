#include "compsplat/actors.hpp"

#include "compsplat/quaternion.hpp"

#include <algorithm>
#include <cmath>

namespace compsplat {

void ActorModel::snap() {
    gaussians.snap();
    snap_to_storage(key_rotations);
    snap_to_storage(key_translations);
}

ActorPose interpolate_pose(const ActorModel& actor, double t) {
    const std::size_t k = actor.keyframe_count();
    if (k == 0) throw InvalidParameter("interpolate_pose: actor has no keyframes");
    ActorPose pose;
    const auto& times = actor.key_times;
    const auto upper = std::upper_bound(times.begin(), times.end(), t);
    if (upper == times.begin()) {
        pose.k0 = pose.k1 = 0;
    } else if (upper == times.end()) {
        pose.k0 = pose.k1 = k - 1;
    } else {
        pose.k1 = static_cast<std::size_t>(upper - times.begin());
        pose.k0 = pose.k1 - 1;
        pose.weight = (t - times[pose.k0]) / (times[pose.k1] - times[pose.k0]);
    }
    if (pose.k0 == pose.k1 || pose.weight == 0.0) {
        pose.k1 = pose.k0;
        pose.weight = 0.0;
        pose.rotation = actor.key_rotations.row(static_cast<Eigen::Index>(pose.k0)).transpose();
        pose.translation = actor.key_translations.row(static_cast<Eigen::Index>(pose.k0)).transpose();
        return pose;
    }
    const auto r0 = static_cast<Eigen::Index>(pose.k0);
    const auto r1 = static_cast<Eigen::Index>(pose.k1);
    const Vec4 q0 = quat::normalized(actor.key_rotations.row(r0).transpose());
    const Vec4 q1 = quat::normalized(actor.key_rotations.row(r1).transpose());
    pose.rotation = quat::slerp(q0, q1, pose.weight);
    pose.translation = (1.0 - pose.weight) * actor.key_translations.row(r0).transpose() +
                       pose.weight * actor.key_translations.row(r1).transpose();
    return pose;
}

void interpolate_pose_backward(const ActorModel& actor, const ActorPose& pose, const Vec4& d_rotation,
                               const Vec3& d_translation, MatX4& d_key_rotations, MatX3& d_key_translations) {
    const auto r0 = static_cast<Eigen::Index>(pose.k0);
    const auto r1 = static_cast<Eigen::Index>(pose.k1);
    if (pose.k0 == pose.k1) {
        d_key_rotations.row(r0) += d_rotation.transpose();
        d_key_translations.row(r0) += d_translation.transpose();
        return;
    }
    const Vec4 raw0 = actor.key_rotations.row(r0).transpose();
    const Vec4 raw1 = actor.key_rotations.row(r1).transpose();
    Vec4 d_q0;
    Vec4 d_q1;
    quat::slerp_backward(quat::normalized(raw0), quat::normalized(raw1), pose.weight, d_rotation, d_q0, d_q1);
    d_key_rotations.row(r0) += quat::normalize_backward(raw0, d_q0).transpose();
    d_key_rotations.row(r1) += quat::normalize_backward(raw1, d_q1).transpose();
    d_key_translations.row(r0) += (1.0 - pose.weight) * d_translation.transpose();
    d_key_translations.row(r1) += pose.weight * d_translation.transpose();
}

void actor_to_world(const MatX3& means, const MatX4& rotations, const Vec4& pose_rotation,
                    const Vec3& pose_translation, MatX3& world_means, MatX4& world_rotations) {
    const Vec4 q = quat::normalized(pose_rotation);
    const Mat3 r = quat::to_rotation_unit(q);
    world_means = (means * r.transpose()).rowwise() + pose_translation.transpose();
    world_rotations.resize(rotations.rows(), 4);
    for (Eigen::Index i = 0; i < rotations.rows(); ++i) {
        world_rotations.row(i) = quat::multiply(q, rotations.row(i).transpose()).transpose();
    }
}

ActorToWorldGrads actor_to_world_backward(const MatX3& means, const MatX4& rotations, const Vec4& pose_rotation,
                                          const MatX3& d_world_means, const MatX4& d_world_rotations) {
    ActorToWorldGrads g;
    const Vec4 q = quat::normalized(pose_rotation);
    const Mat3 r = quat::to_rotation_unit(q);
    g.d_means = d_world_means * r;
    g.d_pose_translation = d_world_means.colwise().sum().transpose();
    const Mat3 d_r = d_world_means.transpose() * means;
    Vec4 d_q = quat::to_rotation_unit_backward(q, d_r);
    g.d_rotations.resize(rotations.rows(), 4);
    for (Eigen::Index i = 0; i < rotations.rows(); ++i) {
        Vec4 dq_pose;
        Vec4 d_local;
        quat::multiply_backward(q, rotations.row(i).transpose(), d_world_rotations.row(i).transpose(), dq_pose,
                                d_local);
        d_q += dq_pose;
        g.d_rotations.row(i) = d_local.transpose();
    }
    g.d_pose_rotation = quat::normalize_backward(pose_rotation, d_q);
    return g;
}

// ---------------------------------------------------------------------------
// Deformation
// ---------------------------------------------------------------------------

namespace {

int head_sh_width(const DeformOptions& opt, int sh_dimension) { return opt.deform_all_sh_bands ? sh_dimension : 3; }

}  // namespace

int deform_input_dim(const DeformOptions& opt, int sh_dimension, const HashGridConfig* class_grid) {
    const int position = opt.class_hash_encoding ? (class_grid ? class_grid->output_dim() : 0)
                                                 : 2 * opt.position_frequencies * 3;
    return position + 2 * opt.time_frequencies + sh_dimension;
}

DeformResult deform_actor(const ActorModel& actor, double t, const Mlp& da, const Mlp& dh, const DeformOptions& opt,
                          const ClassEncoding* class_encoding, DeformCache* cache) {
    const GaussianSet& gs = actor.gaussians;
    const auto n = static_cast<Eigen::Index>(gs.size());
    const int d = static_cast<int>(gs.sh.cols());
    const int sh_out = head_sh_width(opt, d);
    if (dh.output_dim() != 3 + sh_out) throw InvalidParameter("deformation head output width does not match SH size");

    const RowMatrix positions = gs.means / actor.coordinate_scale();
    RowMatrix position_code;
    RowMatrix class_positions;
    RowMatrix class_tables;
    MlpCache class_mlp;
    if (opt.class_hash_encoding) {
        if (!class_encoding || !class_encoding->encoder) {
            throw InvalidParameter("class hash encoding enabled without a class encoder");
        }
        class_positions = (positions.array() + 1.0) * 0.5;
        class_tables = class_encoding->encoder->tables_for(class_encoding->embedding, cache ? &class_mlp : nullptr);
        position_code = hash_encode(class_encoding->encoder->grid, class_tables, class_positions);
    } else {
        position_code = sin_encode(positions, opt.position_frequencies);
    }
    RowMatrix time_value(1, 1);
    time_value(0, 0) = t;
    const RowMatrix time_code = sin_encode(time_value, opt.time_frequencies);

    RowMatrix input(n, position_code.cols() + time_code.cols() + d);
    input.leftCols(position_code.cols()) = position_code;
    input.middleCols(position_code.cols(), time_code.cols()).rowwise() = time_code.row(0);
    input.rightCols(d) = gs.sh;

    MlpCache enc_cache;
    MlpCache head_cache;
    const RowMatrix features = da.forward(input, cache ? &enc_cache : nullptr);
    const RowMatrix raw = dh.forward(features, cache ? &head_cache : nullptr);

    DeformResult out;
    out.means = gs.means + raw.leftCols(3);
    out.sh = gs.sh;
    out.sh.leftCols(sh_out) += raw.rightCols(sh_out);
    if (cache) {
        cache->positions = positions;
        cache->class_positions = std::move(class_positions);
        cache->class_tables = std::move(class_tables);
        cache->class_mlp = std::move(class_mlp);
        cache->input = std::move(input);
        cache->encoder = std::move(enc_cache);
        cache->head = std::move(head_cache);
    }
    return out;
}

DeformGrads deform_actor_backward(const ActorModel& actor, const DeformCache& cache, const Mlp& da, const Mlp& dh,
                                  const DeformOptions& opt, const MatX3& d_deformed_means,
                                  const RowMatrix& d_deformed_sh, std::vector<RowMatrix>& d_da,
                                  std::vector<RowMatrix>& d_dh, const ClassEncoding* class_encoding,
                                  std::vector<RowMatrix>* d_class_encoder) {
    const GaussianSet& gs = actor.gaussians;
    const auto n = static_cast<Eigen::Index>(gs.size());
    const int d = static_cast<int>(gs.sh.cols());
    const int sh_out = head_sh_width(opt, d);

    RowMatrix d_raw(n, 3 + sh_out);
    d_raw.leftCols(3) = d_deformed_means;
    d_raw.rightCols(sh_out) = d_deformed_sh.leftCols(sh_out);
    const RowMatrix d_features = dh.backward(cache.head, d_raw, d_dh);
    const RowMatrix d_input = da.backward(cache.encoder, d_features, d_da);

    DeformGrads g;
    g.d_sh = d_deformed_sh + d_input.rightCols(d);
    const Eigen::Index pos_cols = d_input.cols() - 2 * opt.time_frequencies - d;
    const RowMatrix d_code = d_input.leftCols(pos_cols);
    const double inv_scale = 1.0 / actor.coordinate_scale();
    if (opt.class_hash_encoding) {
        const ClassHashEncoder& enc = *class_encoding->encoder;
        RowMatrix d_tables = RowMatrix::Zero(cache.class_tables.rows(), cache.class_tables.cols());
        MatX3 d_pos;
        hash_encode_backward(enc.grid, cache.class_tables, cache.class_positions, d_code, d_tables, &d_pos);
        g.d_means = d_deformed_means + d_pos * (0.5 * inv_scale);
        if (d_class_encoder) {
            g.d_class_embedding = enc.backward(cache.class_mlp, d_tables, *d_class_encoder);
        } else {
            std::vector<RowMatrix> scratch = enc.encoder.zero_grads();
            g.d_class_embedding = enc.backward(cache.class_mlp, d_tables, scratch);
        }
    } else {
        const RowMatrix d_pos = sin_encode_backward(cache.positions, opt.position_frequencies, d_code);
        g.d_means = d_deformed_means + d_pos * inv_scale;
    }
    return g;
}

// ---------------------------------------------------------------------------
// Sky cubemap
// ---------------------------------------------------------------------------

SkyCubemap::SkyCubemap(int face_size, double init) : size(face_size) {
    if (face_size < 1) throw InvalidParameter("cubemap face size must be positive");
    texels.assign(texel_count() * 3, init);
}

std::vector<TexelWeight> SkyCubemap::taps(const Vec3& dir) const {
    const double ax = std::abs(dir.x());
    const double ay = std::abs(dir.y());
    const double az = std::abs(dir.z());
    int face = 0;
    double ma = 0.0;
    double sc = 0.0;
    double tc = 0.0;
    if (ax >= ay && ax >= az) {
        ma = ax;
        face = dir.x() >= 0.0 ? 0 : 1;
        sc = dir.x() >= 0.0 ? -dir.z() : dir.z();
        tc = -dir.y();
    } else if (ay >= az) {
        ma = ay;
        face = dir.y() >= 0.0 ? 2 : 3;
        sc = dir.x();
        tc = dir.y() >= 0.0 ? dir.z() : -dir.z();
    } else {
        ma = az;
        face = dir.z() >= 0.0 ? 4 : 5;
        sc = dir.z() >= 0.0 ? dir.x() : -dir.x();
        tc = -dir.y();
    }
    if (!(ma > 0.0)) throw InvalidParameter("sky lookup with a zero or non-finite direction");
    const double u = 0.5 * (sc / ma + 1.0);
    const double v = 0.5 * (tc / ma + 1.0);
    const double s = static_cast<double>(size);
    const double fu = std::clamp(u * s - 0.5, 0.0, s - 1.0);
    const double fv = std::clamp(v * s - 0.5, 0.0, s - 1.0);
    const int u0 = static_cast<int>(std::floor(fu));
    const int v0 = static_cast<int>(std::floor(fv));
    const int u1 = std::min(u0 + 1, size - 1);
    const int v1 = std::min(v0 + 1, size - 1);
    const double wu = fu - u0;
    const double wv = fv - v0;
    const auto index = [&](int col, int row) {
        return (static_cast<std::size_t>(face) * size + static_cast<std::size_t>(row)) * size +
               static_cast<std::size_t>(col);
    };
    std::vector<TexelWeight> out;
    out.reserve(4);
    const auto add = [&](int col, int row, double w) {
        if (w == 0.0) return;
        const std::size_t idx = index(col, row);
        for (auto& t : out) {
            if (t.index == idx) {
                t.weight += w;
                return;
            }
        }
        out.push_back({idx, w});
    };
    add(u0, v0, (1.0 - wu) * (1.0 - wv));
    add(u1, v0, wu * (1.0 - wv));
    add(u0, v1, (1.0 - wu) * wv);
    add(u1, v1, wu * wv);
    return out;
}

Vec3 sky_color(const Vec3& dir, const SkyCubemap& sky) {
    Vec3 c = Vec3::Zero();
    for (const auto& t : sky.taps(dir)) {
        c += t.weight * Vec3(sky.texels[3 * t.index], sky.texels[3 * t.index + 1], sky.texels[3 * t.index + 2]);
    }
    return c;
}

void sky_color_backward(const Vec3& dir, const SkyCubemap& sky, const Vec3& d_color, std::span<double> d_texels) {
    for (const auto& t : sky.taps(dir)) {
        for (int c = 0; c < 3; ++c) d_texels[3 * t.index + c] += t.weight * d_color[c];
    }
}

}  // namespace compsplat
