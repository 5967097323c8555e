#pragma once

#include "compsplat/types.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace compsplat {

struct AdamOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-15;
};

/// Adam for one parameter group. Two update modes:
///  - dense: every element moves, one shared step counter;
///  - sparse rows: only rows with a nonzero gradient move, each row keeps
///    its own step counter for bias correction.
class Adam {
public:
    Adam() = default;
    Adam(std::size_t size, std::size_t row_dim, AdamOptions options = {});

    void step(std::span<double> params, std::span<const double> grads, double lr);
    void step_sparse_rows(std::span<double> params, std::span<const double> grads, double lr);

    /// Reindexes moment state after densification; new rows start at zero.
    void select_rows(std::span<const std::size_t> keep);
    void append_rows(std::size_t count);

    [[nodiscard]] std::size_t size() const { return m_.size(); }
    [[nodiscard]] std::size_t row_dim() const { return row_dim_; }
    [[nodiscard]] std::uint64_t steps() const { return steps_; }
    [[nodiscard]] std::size_t nonfinite_skipped() const { return nonfinite_; }

    // Exposed for checkpointing.
    std::vector<double>& first_moment() { return m_; }
    std::vector<double>& second_moment() { return v_; }
    std::vector<std::uint64_t>& row_steps() { return row_steps_; }
    void set_steps(std::uint64_t s) { steps_ = s; }

private:
    struct BiasCorrection {
        double first;
        double second;
    };
    [[nodiscard]] BiasCorrection correction(std::uint64_t t) const;
    void update(double& p, double g, double& m, double& v, double lr, const BiasCorrection& bc);

    AdamOptions opt_;
    std::size_t row_dim_ = 1;
    std::vector<double> m_;
    std::vector<double> v_;
    std::vector<std::uint64_t> row_steps_;
    std::uint64_t steps_ = 0;
    std::size_t nonfinite_ = 0;
};

/// Log-linear interpolation from lr_init at step 0 to lr_final at max_steps,
/// constant afterwards.
double exponential_lr(std::int64_t step, double lr_init, double lr_final, std::int64_t max_steps);

}  // namespace compsplat
