#include "compsplat/optim.hpp"

#include <algorithm>
#include <cmath>

namespace compsplat {

Adam::Adam(std::size_t size, std::size_t row_dim, AdamOptions options)
    : opt_(options), row_dim_(std::max<std::size_t>(row_dim, 1)), m_(size, 0.0), v_(size, 0.0),
      row_steps_(size / std::max<std::size_t>(row_dim, 1), 0) {}

Adam::BiasCorrection Adam::correction(std::uint64_t t) const {
    return {1.0 - std::pow(opt_.beta1, static_cast<double>(t)), 1.0 - std::pow(opt_.beta2, static_cast<double>(t))};
}

void Adam::update(double& p, double g, double& m, double& v, double lr, const BiasCorrection& bc) {
    if (!std::isfinite(g)) {
        ++nonfinite_;
        return;
    }
    m = opt_.beta1 * m + (1.0 - opt_.beta1) * g;
    v = opt_.beta2 * v + (1.0 - opt_.beta2) * g * g;
    const double m_hat = m / bc.first;
    const double v_hat = v / bc.second;
    p -= lr * m_hat / (std::sqrt(v_hat) + opt_.eps);
}

void Adam::step(std::span<double> params, std::span<const double> grads, double lr) {
    if (params.size() != m_.size() || grads.size() != m_.size()) {
        throw InvalidParameter("Adam::step: size mismatch with optimizer state");
    }
    ++steps_;
    const BiasCorrection bc = correction(steps_);
    for (std::size_t i = 0; i < params.size(); ++i) update(params[i], grads[i], m_[i], v_[i], lr, bc);
}

void Adam::step_sparse_rows(std::span<double> params, std::span<const double> grads, double lr) {
    if (params.size() != m_.size() || grads.size() != m_.size()) {
        throw InvalidParameter("Adam::step_sparse_rows: size mismatch with optimizer state");
    }
    ++steps_;
    const std::size_t rows = row_steps_.size();
    for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t begin = r * row_dim_;
        bool touched = false;
        for (std::size_t k = 0; k < row_dim_; ++k) touched |= grads[begin + k] != 0.0;
        if (!touched) continue;
        const BiasCorrection bc = correction(++row_steps_[r]);
        for (std::size_t k = 0; k < row_dim_; ++k) {
            update(params[begin + k], grads[begin + k], m_[begin + k], v_[begin + k], lr, bc);
        }
    }
}

void Adam::select_rows(std::span<const std::size_t> keep) {
    std::vector<double> m(keep.size() * row_dim_);
    std::vector<double> v(keep.size() * row_dim_);
    std::vector<std::uint64_t> rs(keep.size());
    for (std::size_t i = 0; i < keep.size(); ++i) {
        std::copy_n(m_.begin() + static_cast<std::ptrdiff_t>(keep[i] * row_dim_), row_dim_,
                    m.begin() + static_cast<std::ptrdiff_t>(i * row_dim_));
        std::copy_n(v_.begin() + static_cast<std::ptrdiff_t>(keep[i] * row_dim_), row_dim_,
                    v.begin() + static_cast<std::ptrdiff_t>(i * row_dim_));
        rs[i] = row_steps_[keep[i]];
    }
    m_ = std::move(m);
    v_ = std::move(v);
    row_steps_ = std::move(rs);
}

void Adam::append_rows(std::size_t count) {
    m_.resize(m_.size() + count * row_dim_, 0.0);
    v_.resize(v_.size() + count * row_dim_, 0.0);
    row_steps_.resize(row_steps_.size() + count, 0);
}

double exponential_lr(std::int64_t step, double lr_init, double lr_final, std::int64_t max_steps) {
    if (max_steps <= 0) return lr_final;
    const double t = std::clamp(static_cast<double>(step) / static_cast<double>(max_steps), 0.0, 1.0);
    return std::exp(std::log(lr_init) * (1.0 - t) + std::log(lr_final) * t);
}

}  // namespace compsplat
