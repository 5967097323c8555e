#include "compsplat/appearance.hpp"

#include <cmath>
#include <limits>

namespace compsplat {

RowMatrix local_features(const MatX3& positions01, const VecX& embedding, const MatX3& base_colors,
                         const HashGrid& hash) {
    const Eigen::Index n = positions01.rows();
    const int h = hash.output_dim();
    const auto e = static_cast<int>(embedding.size());
    RowMatrix features(n, h + e + 3);
    features.leftCols(h) = hash.encode(positions01);
    features.middleCols(h, e).rowwise() = embedding.transpose();
    features.rightCols(3) = base_colors;
    return features;
}

MatX3 local_refine(const MatX3& colors, const MatX3& base_colors, const MatX3& positions01, const VecX& embedding,
                   const HashGrid& hash, const Mlp& dl, LocalRefineCache* cache) {
    RowMatrix features = local_features(positions01, embedding, base_colors, hash);
    MlpCache mlp_cache;
    RowMatrix raw = dl.forward(features, cache ? &mlp_cache : nullptr);
    if (raw.cols() != 6) throw InvalidParameter("local refinement network must output 6 values");
    MatX3 out = colors.cwiseProduct((raw.leftCols(3).array() + 1.0).matrix()) + raw.rightCols(3);
    if (cache) {
        cache->positions = positions01;
        cache->features = std::move(features);
        cache->raw = std::move(raw);
        cache->mlp = std::move(mlp_cache);
    }
    return out;
}

LocalRefineGrads local_refine_backward(const LocalRefineCache& cache, const MatX3& colors, const HashGrid& hash,
                                       const Mlp& dl, const MatX3& d_refined, RowMatrix& d_tables,
                                       std::vector<RowMatrix>& d_mlp) {
    const Eigen::Index n = colors.rows();
    const int h = hash.output_dim();
    const Eigen::Index e = cache.features.cols() - h - 3;
    LocalRefineGrads g;
    g.d_colors = d_refined.cwiseProduct((cache.raw.leftCols(3).array() + 1.0).matrix());
    RowMatrix d_raw(n, 6);
    d_raw.leftCols(3) = d_refined.cwiseProduct(colors);
    d_raw.rightCols(3) = d_refined;
    const RowMatrix d_features = dl.backward(cache.mlp, d_raw, d_mlp);
    g.d_embedding = d_features.middleCols(h, e).colwise().sum().transpose();
    g.d_base_colors = d_features.rightCols(3);
    const RowMatrix d_code = d_features.leftCols(h);
    hash_encode_backward(hash.config, hash.tables, cache.positions, d_code, d_tables, &g.d_positions);
    return g;
}

Vec6 camera_viewpoint_code(const Camera& cam) {
    Vec6 phi;
    phi << cam.center(), cam.optical_axis();
    return phi;
}

GlobalTransform global_transform(const VecX& embedding, const Vec6& viewpoint, const Mlp& dg,
                                 GlobalRefineCache* cache) {
    RowMatrix input(1, embedding.size() + 6);
    input.leftCols(embedding.size()) = embedding.transpose();
    input.rightCols(6) = viewpoint.transpose();
    MlpCache mlp_cache;
    const RowMatrix raw = dg.forward(input, cache ? &mlp_cache : nullptr);
    if (raw.cols() != 12) throw InvalidParameter("global refinement network must output 12 values");
    GlobalTransform t;
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) t.matrix(r, c) += raw(0, 3 * r + c);
    }
    t.offset = raw.block<1, 3>(0, 9).transpose();
    if (cache) {
        cache->input = std::move(input);
        cache->mlp = std::move(mlp_cache);
    }
    return t;
}

Image global_refine(const Image& image, const GlobalTransform& t) {
    if (image.channels != 3) throw InvalidParameter("global_refine expects a 3-channel image");
    Image out(image.width, image.height, 3);
    const std::size_t n = image.pixel_count();
    for (std::size_t p = 0; p < n; ++p) {
        const Vec3 c(image.data[3 * p], image.data[3 * p + 1], image.data[3 * p + 2]);
        const Vec3 r = t.matrix * c + t.offset;
        out.data[3 * p] = r[0];
        out.data[3 * p + 1] = r[1];
        out.data[3 * p + 2] = r[2];
    }
    return out;
}

GlobalRefineGrads global_refine_backward(const GlobalRefineCache& cache, const Image& image, const GlobalTransform& t,
                                         const Mlp& dg, const Image& d_refined, std::vector<RowMatrix>& d_mlp) {
    GlobalRefineGrads g;
    g.d_image = Image(image.width, image.height, 3);
    Mat3 d_matrix = Mat3::Zero();
    Vec3 d_offset = Vec3::Zero();
    const Mat3 mt = t.matrix.transpose();
    const std::size_t n = image.pixel_count();
    for (std::size_t p = 0; p < n; ++p) {
        const Vec3 c(image.data[3 * p], image.data[3 * p + 1], image.data[3 * p + 2]);
        const Vec3 d(d_refined.data[3 * p], d_refined.data[3 * p + 1], d_refined.data[3 * p + 2]);
        d_matrix += d * c.transpose();
        d_offset += d;
        const Vec3 di = mt * d;
        g.d_image.data[3 * p] = di[0];
        g.d_image.data[3 * p + 1] = di[1];
        g.d_image.data[3 * p + 2] = di[2];
    }
    RowMatrix d_raw(1, 12);
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) d_raw(0, 3 * r + c) = d_matrix(r, c);
    }
    d_raw.block<1, 3>(0, 9) = d_offset.transpose();
    const RowMatrix d_input = dg.backward(cache.mlp, d_raw, d_mlp);
    g.d_embedding = d_input.leftCols(d_input.cols() - 6).row(0).transpose();
    return g;
}

std::size_t lookup_embedding(int camera_index, double timestamp, std::span<const FrameKey> frames) {
    if (frames.empty()) throw InvalidParameter("lookup_embedding: empty frame table");
    bool any_match = false;
    for (const auto& f : frames) any_match |= f.camera_index == camera_index;
    std::size_t best = frames.size();
    double best_dt = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < frames.size(); ++i) {
        if (any_match && frames[i].camera_index != camera_index) continue;
        const double dt = std::abs(frames[i].timestamp - timestamp);
        const bool better = dt < best_dt || (dt == best_dt && best < frames.size() &&
                                             frames[i].timestamp < frames[best].timestamp);
        if (best == frames.size() || better) {
            best = i;
            best_dt = dt;
        }
    }
    return best;
}

}  // namespace compsplat
