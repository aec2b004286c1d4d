#pragma once

#include "safn/common.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace safn {

/// How a tensor is filled by init_params.
enum class InitKind {
  Uniform,  // uniform(-bound, +bound)
  One,      // layer-norm scale
  Zero,     // layer-norm shift
};

struct TensorSpec {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::size_t offset = 0;
  InitKind init = InitKind::Uniform;
  double init_bound = 0.0;
};

/// Stable flat addressing for every learnable tensor. Registration order
/// fixes the layout, so optimiser state, EMA shadows, checkpoints, and
/// finite-difference probes all share one index space.
class ParamLayout {
 public:
  int add(const std::string& name, int rows, int cols, InitKind init, double bound = 0.0);

  std::size_t total() const { return total_; }
  int tensor_count() const { return static_cast<int>(specs_.size()); }
  const TensorSpec& spec(int id) const { return specs_.at(id); }
  const std::vector<TensorSpec>& specs() const { return specs_; }

 private:
  std::vector<TensorSpec> specs_;
  std::size_t total_ = 0;
};

/// Values laid out per a ParamLayout; tensors are viewed in place.
class ParamBuffer {
 public:
  ParamBuffer() = default;
  explicit ParamBuffer(const ParamLayout& layout)
      : layout_(&layout), data_(layout.total(), 0.0) {}

  Eigen::Map<Mat> mat(int id) {
    const TensorSpec& s = layout_->spec(id);
    return {data_.data() + s.offset, s.rows, s.cols};
  }
  Eigen::Map<const Mat> mat(int id) const {
    const TensorSpec& s = layout_->spec(id);
    return {data_.data() + s.offset, s.rows, s.cols};
  }
  Eigen::Map<Vec> vec(int id) {
    const TensorSpec& s = layout_->spec(id);
    return {data_.data() + s.offset, static_cast<Eigen::Index>(s.rows) * s.cols};
  }
  Eigen::Map<const Vec> vec(int id) const {
    const TensorSpec& s = layout_->spec(id);
    return {data_.data() + s.offset, static_cast<Eigen::Index>(s.rows) * s.cols};
  }

  std::vector<double>& flat() { return data_; }
  const std::vector<double>& flat() const { return data_; }
  std::size_t size() const { return data_.size(); }
  void set_zero() { std::fill(data_.begin(), data_.end(), 0.0); }
  const ParamLayout& layout() const { return *layout_; }

 private:
  const ParamLayout* layout_ = nullptr;
  std::vector<double> data_;
};

/// Fills a buffer per each tensor's InitKind; draws happen in registration
/// order so initialisation is a pure function of (layout, seed).
void init_param_buffer(ParamBuffer& buffer, uint64_t seed);

}  // namespace safn
