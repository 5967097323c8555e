#include "compsplat/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace compsplat {

int HashGridConfig::resolution(int level) const {
    return static_cast<int>(std::floor(base_resolution * std::pow(growth, level)));
}

std::size_t hash_grid_row(const HashGridConfig& cfg, int level, std::int64_t ix, std::int64_t iy, std::int64_t iz) {
    constexpr std::uint32_t kPrime1 = 2654435761u;
    constexpr std::uint32_t kPrime2 = 805459861u;
    const std::uint32_t h = static_cast<std::uint32_t>(ix) ^ (static_cast<std::uint32_t>(iy) * kPrime1) ^
                            (static_cast<std::uint32_t>(iz) * kPrime2);
    const std::size_t mask = cfg.table_size() - 1;
    return static_cast<std::size_t>(level) * cfg.table_size() + (static_cast<std::size_t>(h) & mask);
}

namespace {

struct CellQuery {
    std::int64_t base[3];
    double frac[3];
};

CellQuery locate(const double p[3], int res) {
    CellQuery q{};
    for (int a = 0; a < 3; ++a) {
        const double x = p[a] * res;
        const double f = std::floor(x);
        q.base[a] = static_cast<std::int64_t>(f);
        q.frac[a] = x - f;
    }
    return q;
}

/// Clamps into [0,1]; bit a of the result is set when axis a was clamped.
int clamp_unit(const MatX3& positions, Eigen::Index i, double p[3]) {
    int mask = 0;
    for (int a = 0; a < 3; ++a) {
        const double v = positions(i, a);
        if (!(v >= 0.0)) {
            p[a] = 0.0;
            mask |= 1 << a;
        } else if (v > 1.0) {
            p[a] = 1.0;
            mask |= 1 << a;
        } else {
            p[a] = v;
        }
    }
    return mask;
}

}  // namespace

RowMatrix hash_encode(const HashGridConfig& cfg, const RowMatrix& tables, const MatX3& positions,
                      HashEncodeStats* stats) {
    const Eigen::Index n = positions.rows();
    const int f = cfg.features;
    RowMatrix out = RowMatrix::Zero(n, cfg.output_dim());
    std::size_t clamped = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        double p[3];
        if (clamp_unit(positions, i, p) != 0) ++clamped;
        for (int l = 0; l < cfg.levels; ++l) {
            const CellQuery q = locate(p, cfg.resolution(l));
            for (int corner = 0; corner < 8; ++corner) {
                double w = 1.0;
                std::int64_t idx[3];
                for (int a = 0; a < 3; ++a) {
                    const int bit = (corner >> a) & 1;
                    idx[a] = q.base[a] + bit;
                    w *= bit ? q.frac[a] : 1.0 - q.frac[a];
                }
                if (w == 0.0) continue;
                const auto row = static_cast<Eigen::Index>(hash_grid_row(cfg, l, idx[0], idx[1], idx[2]));
                out.row(i).segment(l * f, f) += w * tables.row(row);
            }
        }
    }
    if (stats) stats->clamped += clamped;
    return out;
}

void hash_encode_backward(const HashGridConfig& cfg, const RowMatrix& tables, const MatX3& positions,
                          const RowMatrix& d_out, RowMatrix& d_tables, MatX3* d_positions) {
    const Eigen::Index n = positions.rows();
    const int f = cfg.features;
    if (d_positions) d_positions->setZero(n, 3);
    for (Eigen::Index i = 0; i < n; ++i) {
        double p[3];
        const int clamped = clamp_unit(positions, i, p);
        for (int l = 0; l < cfg.levels; ++l) {
            const int res = cfg.resolution(l);
            const CellQuery q = locate(p, res);
            const auto g = d_out.row(i).segment(l * f, f);
            for (int corner = 0; corner < 8; ++corner) {
                double wa[3];
                std::int64_t idx[3];
                for (int a = 0; a < 3; ++a) {
                    const int bit = (corner >> a) & 1;
                    idx[a] = q.base[a] + bit;
                    wa[a] = bit ? q.frac[a] : 1.0 - q.frac[a];
                }
                const auto row = static_cast<Eigen::Index>(hash_grid_row(cfg, l, idx[0], idx[1], idx[2]));
                const double w = wa[0] * wa[1] * wa[2];
                if (w != 0.0) d_tables.row(row) += w * g;
                if (d_positions) {
                    const double dot = tables.row(row).dot(g);
                    if (dot == 0.0) continue;
                    for (int a = 0; a < 3; ++a) {
                        if (clamped & (1 << a)) continue;
                        const int bit = (corner >> a) & 1;
                        const double dw = (bit ? 1.0 : -1.0) * wa[(a + 1) % 3] * wa[(a + 2) % 3] * res;
                        (*d_positions)(i, a) += dw * dot;
                    }
                }
            }
        }
    }
}

HashGrid::HashGrid(const HashGridConfig& cfg, std::mt19937_64& rng) : config(cfg) {
    tables.resize(static_cast<Eigen::Index>(cfg.parameter_rows()), cfg.features);
    std::uniform_real_distribution<double> dist(-1e-4, 1e-4);
    for (Eigen::Index i = 0; i < tables.size(); ++i) tables.data()[i] = to_storage(dist(rng));
}

RowMatrix sin_encode(const RowMatrix& values, int frequencies) {
    const Eigen::Index n = values.rows();
    const Eigen::Index d = values.cols();
    RowMatrix out(n, 2 * frequencies * d);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) {
            for (int k = 0; k < frequencies; ++k) {
                const double arg = std::ldexp(std::numbers::pi, k) * values(i, j);
                out(i, 2 * frequencies * j + 2 * k) = std::sin(arg);
                out(i, 2 * frequencies * j + 2 * k + 1) = std::cos(arg);
            }
        }
    }
    return out;
}

RowMatrix sin_encode_backward(const RowMatrix& values, int frequencies, const RowMatrix& d_out) {
    const Eigen::Index n = values.rows();
    const Eigen::Index d = values.cols();
    RowMatrix d_values = RowMatrix::Zero(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) {
            double acc = 0.0;
            for (int k = 0; k < frequencies; ++k) {
                const double scale = std::ldexp(std::numbers::pi, k);
                const double arg = scale * values(i, j);
                acc += scale * (std::cos(arg) * d_out(i, 2 * frequencies * j + 2 * k) -
                                std::sin(arg) * d_out(i, 2 * frequencies * j + 2 * k + 1));
            }
            d_values(i, j) = acc;
        }
    }
    return d_values;
}

Mlp::Mlp(std::vector<int> widths, std::mt19937_64& rng, bool zero_last, bool relu_output)
    : widths_(std::move(widths)), relu_output_(relu_output) {
    if (widths_.size() < 2) throw InvalidParameter("Mlp needs at least an input and an output width");
    for (int w : widths_) {
        if (w <= 0) throw InvalidParameter("Mlp widths must be positive");
    }
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
        const int in = widths_[l];
        const int out = widths_[l + 1];
        RowMatrix w(out, in);
        RowMatrix b(1, out);
        const bool last = l + 2 == widths_.size();
        if (last && zero_last) {
            w.setZero();
            b.setZero();
        } else {
            const double bound = 1.0 / std::sqrt(static_cast<double>(in));
            std::uniform_real_distribution<double> dist(-bound, bound);
            for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = to_storage(dist(rng));
            for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = to_storage(dist(rng));
        }
        params.push_back(std::move(w));
        params.push_back(std::move(b));
    }
}

RowMatrix Mlp::forward(const RowMatrix& x, MlpCache* cache) const {
    if (x.cols() != input_dim()) {
        throw InvalidParameter("Mlp input has " + std::to_string(x.cols()) + " columns, expected " +
                               std::to_string(input_dim()));
    }
    if (cache) {
        cache->inputs.clear();
        cache->pre.clear();
    }
    RowMatrix h = x;
    const std::size_t layers = layer_count();
    for (std::size_t l = 0; l < layers; ++l) {
        RowMatrix z = h * weight(l).transpose();
        z.rowwise() += bias(l).row(0);
        if (cache) {
            cache->inputs.push_back(std::move(h));
            cache->pre.push_back(z);
        }
        const bool last = l + 1 == layers;
        if (!last || relu_output_) z = z.cwiseMax(0.0);
        h = std::move(z);
    }
    return h;
}

RowMatrix Mlp::backward(const MlpCache& cache, const RowMatrix& d_y, std::vector<RowMatrix>& grads) const {
    const std::size_t layers = layer_count();
    RowMatrix g = d_y;
    for (std::size_t l = layers; l-- > 0;) {
        const bool last = l + 1 == layers;
        if (!last || relu_output_) g = g.cwiseProduct((cache.pre[l].array() > 0.0).cast<double>().matrix());
        grads[2 * l].noalias() += g.transpose() * cache.inputs[l];
        grads[2 * l + 1].row(0) += g.colwise().sum();
        g = g * weight(l);
    }
    return g;
}

std::vector<RowMatrix> Mlp::zero_grads() const {
    std::vector<RowMatrix> g;
    g.reserve(params.size());
    for (const auto& p : params) g.push_back(RowMatrix::Zero(p.rows(), p.cols()));
    return g;
}

void Mlp::snap() {
    for (auto& p : params) snap_to_storage(p);
}

EmbeddingTable::EmbeddingTable(std::size_t rows, int dim, std::mt19937_64& rng, double stddev)
    : table(static_cast<Eigen::Index>(rows), dim) {
    std::normal_distribution<double> dist(0.0, stddev);
    for (Eigen::Index i = 0; i < table.size(); ++i) table.data()[i] = to_storage(dist(rng));
}

VecX EmbeddingTable::row(std::size_t i) const {
    if (i >= rows()) throw InvalidParameter("embedding row out of range");
    return table.row(static_cast<Eigen::Index>(i)).transpose();
}

ClassHashEncoder::ClassHashEncoder(const HashGridConfig& cfg, int embedding_dim, int hidden, std::mt19937_64& rng,
                                   bool zero_last)
    : grid(cfg),
      encoder({embedding_dim, hidden, static_cast<int>(cfg.parameter_rows()) * cfg.features}, rng, zero_last) {}

RowMatrix ClassHashEncoder::tables_for(const VecX& class_embedding, MlpCache* cache) const {
    const RowMatrix flat = encoder.forward(class_embedding.transpose(), cache);
    return Eigen::Map<const RowMatrix>(flat.data(), static_cast<Eigen::Index>(grid.parameter_rows()), grid.features);
}

VecX ClassHashEncoder::backward(const MlpCache& cache, const RowMatrix& d_tables, std::vector<RowMatrix>& grads) const {
    const RowMatrix flat = Eigen::Map<const RowMatrix>(d_tables.data(), 1, d_tables.size());
    return encoder.backward(cache, flat, grads).row(0).transpose();
}

RowMatrix class_hash_weights(const ClassHashEncoder& enc, const VecX& class_embedding) {
    return enc.tables_for(class_embedding);
}

}  // namespace compsplat
