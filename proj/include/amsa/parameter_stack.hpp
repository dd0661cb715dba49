#pragma once

#include <Eigen/Core>
#include <initializer_list>
#include <string>
#include <vector>

#include "amsa/errors.hpp"

namespace amsa {

// Stacked decision variable: an ordered list of N real blocks with
// per-level dimensions d_1..d_N. Entries must stay finite; arithmetic
// helpers below preserve the shape and re-validate on request.
class ParameterStack {
 public:
  ParameterStack() = default;

  explicit ParameterStack(std::vector<Eigen::VectorXd> blocks)
      : blocks_(std::move(blocks)) {
    if (blocks_.empty()) throw DimensionError("ParameterStack: need N >= 1 blocks");
    ensure_finite();
  }

  static ParameterStack zeros(const std::vector<int>& dims) {
    std::vector<Eigen::VectorXd> blocks;
    blocks.reserve(dims.size());
    for (int d : dims) {
      if (d <= 0) throw DimensionError("ParameterStack: block dims must be positive");
      blocks.push_back(Eigen::VectorXd::Zero(d));
    }
    return ParameterStack(std::move(blocks));
  }

  int n_levels() const { return static_cast<int>(blocks_.size()); }

  std::vector<int> dims() const {
    std::vector<int> d;
    d.reserve(blocks_.size());
    for (const auto& b : blocks_) d.push_back(static_cast<int>(b.size()));
    return d;
  }

  int total_dim() const {
    int n = 0;
    for (const auto& b : blocks_) n += static_cast<int>(b.size());
    return n;
  }

  // 1-based level access, matching the problem's level indexing.
  const Eigen::VectorXd& block(int level) const {
    check_level(level);
    return blocks_[level - 1];
  }
  Eigen::VectorXd& block(int level) {
    check_level(level);
    return blocks_[level - 1];
  }

  const std::vector<Eigen::VectorXd>& blocks() const { return blocks_; }

  Eigen::VectorXd flatten() const {
    Eigen::VectorXd out(total_dim());
    int at = 0;
    for (const auto& b : blocks_) {
      out.segment(at, b.size()) = b;
      at += static_cast<int>(b.size());
    }
    return out;
  }

  static ParameterStack unflatten(const Eigen::VectorXd& flat,
                                  const std::vector<int>& dims) {
    std::vector<Eigen::VectorXd> blocks;
    blocks.reserve(dims.size());
    int at = 0;
    for (int d : dims) {
      if (at + d > flat.size())
        throw DimensionError("unflatten: vector shorter than requested dims");
      blocks.push_back(flat.segment(at, d));
      at += d;
    }
    if (at != flat.size())
      throw DimensionError("unflatten: vector longer than requested dims");
    return ParameterStack(std::move(blocks));
  }

  bool same_shape(const ParameterStack& other) const {
    if (n_levels() != other.n_levels()) return false;
    for (int i = 0; i < n_levels(); ++i)
      if (blocks_[i].size() != other.blocks_[i].size()) return false;
    return true;
  }

  bool is_finite() const {
    for (const auto& b : blocks_)
      if (!b.allFinite()) return false;
    return true;
  }

  void ensure_finite() const {
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      if (!blocks_[i].allFinite())
        throw ValidationError("ParameterStack: non-finite entry in block " +
                              std::to_string(i + 1));
    }
  }

  bool operator==(const ParameterStack& other) const {
    if (!same_shape(other)) return false;
    for (int i = 0; i < n_levels(); ++i)
      if (blocks_[i] != other.blocks_[i]) return false;
    return true;
  }

 private:
  void check_level(int level) const {
    if (level < 1 || level > n_levels())
      throw RangeError("ParameterStack: level " + std::to_string(level) +
                       " outside 1.." + std::to_string(n_levels()));
  }

  std::vector<Eigen::VectorXd> blocks_;
};

// Per-level Euclidean norms.
std::vector<double> stack_norms(const ParameterStack& theta);

// Stacked Euclidean norm over all blocks.
double stack_norm(const ParameterStack& theta);

// y + a*x blockwise.
ParameterStack stack_axpy(double a, const ParameterStack& x,
                          const ParameterStack& y);

}  // namespace amsa
