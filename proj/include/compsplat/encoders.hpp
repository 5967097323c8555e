#pragma once

#include "compsplat/types.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace compsplat {

// ---------------------------------------------------------------------------
// Multiresolution hash grid
// ---------------------------------------------------------------------------

struct HashGridConfig {
    int levels = 8;
    int features = 2;
    int log2_table_size = 15;
    int base_resolution = 16;
    double growth = 1.5;

    [[nodiscard]] int output_dim() const { return levels * features; }
    [[nodiscard]] std::size_t table_size() const { return std::size_t{1} << log2_table_size; }
    [[nodiscard]] std::size_t parameter_rows() const { return static_cast<std::size_t>(levels) * table_size(); }
    [[nodiscard]] int resolution(int level) const;
};

/// Row of `tables` ((levels·T) × F) holding vertex (ix, iy, iz) of `level`.
std::size_t hash_grid_row(const HashGridConfig& cfg, int level, std::int64_t ix, std::int64_t iy, std::int64_t iz);

struct HashEncodeStats {
    std::size_t clamped = 0;  ///< queries that fell outside [0,1]³
};

/// Encodes N×3 positions normalized to [0,1]³ with the given tables.
/// Out-of-range coordinates are clamped and counted.
RowMatrix hash_encode(const HashGridConfig& cfg, const RowMatrix& tables, const MatX3& positions,
                      HashEncodeStats* stats = nullptr);

/// Accumulates dL/dtables into `d_tables` and, when non-null, writes
/// dL/dpositions (zero along clamped axes).
void hash_encode_backward(const HashGridConfig& cfg, const RowMatrix& tables, const MatX3& positions,
                          const RowMatrix& d_out, RowMatrix& d_tables, MatX3* d_positions);

class HashGrid {
public:
    HashGridConfig config;
    RowMatrix tables;

    HashGrid() = default;
    HashGrid(const HashGridConfig& cfg, std::mt19937_64& rng);

    [[nodiscard]] int output_dim() const { return config.output_dim(); }
    [[nodiscard]] RowMatrix encode(const MatX3& positions, HashEncodeStats* stats = nullptr) const {
        return hash_encode(config, tables, positions, stats);
    }
};

// ---------------------------------------------------------------------------
// Sinusoidal encoding γ(v) = (sin(2ᵏπv), cos(2ᵏπv)), k = 0..K-1, per component
// ---------------------------------------------------------------------------

/// Output layout: component j occupies columns [2Kj, 2K(j+1)), alternating
/// sin/cos for increasing k.
RowMatrix sin_encode(const RowMatrix& values, int frequencies);
RowMatrix sin_encode_backward(const RowMatrix& values, int frequencies, const RowMatrix& d_out);

// ---------------------------------------------------------------------------
// ReLU MLP
// ---------------------------------------------------------------------------

struct MlpCache {
    std::vector<RowMatrix> inputs;  ///< input of each linear layer
    std::vector<RowMatrix> pre;     ///< pre-activation output of each layer
};

/// Linear layers with ReLU in between. Parameters are stored as
/// [W0, b0, W1, b1, ...] with W (out×in) and b (1×out).
class Mlp {
public:
    Mlp() = default;
    /// widths = {in, hidden..., out}. `zero_last` zeroes the final layer.
    /// `relu_output` also applies ReLU to the final layer.
    Mlp(std::vector<int> widths, std::mt19937_64& rng, bool zero_last = false, bool relu_output = false);

    [[nodiscard]] int input_dim() const { return widths_.front(); }
    [[nodiscard]] int output_dim() const { return widths_.back(); }
    [[nodiscard]] std::size_t layer_count() const { return widths_.size() - 1; }
    [[nodiscard]] const std::vector<int>& widths() const { return widths_; }
    [[nodiscard]] bool relu_output() const { return relu_output_; }

    RowMatrix& weight(std::size_t layer) { return params[2 * layer]; }
    RowMatrix& bias(std::size_t layer) { return params[2 * layer + 1]; }
    [[nodiscard]] const RowMatrix& weight(std::size_t layer) const { return params[2 * layer]; }
    [[nodiscard]] const RowMatrix& bias(std::size_t layer) const { return params[2 * layer + 1]; }

    /// Throws InvalidParameter when x has the wrong column count.
    RowMatrix forward(const RowMatrix& x, MlpCache* cache = nullptr) const;
    /// Accumulates parameter gradients into `grads` (same layout as params)
    /// and returns dL/dx.
    RowMatrix backward(const MlpCache& cache, const RowMatrix& d_y, std::vector<RowMatrix>& grads) const;

    [[nodiscard]] std::vector<RowMatrix> zero_grads() const;
    void snap();

    std::vector<RowMatrix> params;

private:
    std::vector<int> widths_{0};
    bool relu_output_ = false;
};

// ---------------------------------------------------------------------------
// Embedding table
// ---------------------------------------------------------------------------

struct EmbeddingTable {
    RowMatrix table;

    EmbeddingTable() = default;
    EmbeddingTable(std::size_t rows, int dim, std::mt19937_64& rng, double stddev = 1.0);

    [[nodiscard]] std::size_t rows() const { return static_cast<std::size_t>(table.rows()); }
    [[nodiscard]] int dim() const { return static_cast<int>(table.cols()); }
    [[nodiscard]] VecX row(std::size_t i) const;
};

// ---------------------------------------------------------------------------
// Class-conditioned hash tables (hypernetwork variant of actor encoding)
// ---------------------------------------------------------------------------

/// A two-layer MLP that maps a class embedding to a full hash-table block.
struct ClassHashEncoder {
    HashGridConfig grid;
    Mlp encoder;  ///< embedding_dim → hidden → parameter_rows·features

    ClassHashEncoder() = default;
    ClassHashEncoder(const HashGridConfig& cfg, int embedding_dim, int hidden, std::mt19937_64& rng,
                     bool zero_last = false);

    /// Returns the ((levels·T) × F) tables generated for this embedding.
    [[nodiscard]] RowMatrix tables_for(const VecX& class_embedding, MlpCache* cache = nullptr) const;
    /// Pulls dL/dtables back to the encoder parameters; returns dL/dembedding.
    VecX backward(const MlpCache& cache, const RowMatrix& d_tables, std::vector<RowMatrix>& grads) const;
};

RowMatrix class_hash_weights(const ClassHashEncoder& enc, const VecX& class_embedding);

}  // namespace compsplat
