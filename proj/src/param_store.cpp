#include "safn/param_store.hpp"

#include <random>

namespace safn {

int ParamLayout::add(const std::string& name, int rows, int cols, InitKind init, double bound) {
  if (rows <= 0 || cols <= 0) {
    throw DataError("ParamLayout: tensor '" + name + "' has nonpositive shape");
  }
  TensorSpec spec;
  spec.name = name;
  spec.rows = rows;
  spec.cols = cols;
  spec.offset = total_;
  spec.init = init;
  spec.init_bound = bound;
  specs_.push_back(std::move(spec));
  total_ += static_cast<std::size_t>(rows) * cols;
  return static_cast<int>(specs_.size()) - 1;
}

void init_param_buffer(ParamBuffer& buffer, uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (int id = 0; id < buffer.layout().tensor_count(); ++id) {
    const TensorSpec& spec = buffer.layout().spec(id);
    auto view = buffer.vec(id);
    switch (spec.init) {
      case InitKind::One:
        view.setOnes();
        break;
      case InitKind::Zero:
        view.setZero();
        break;
      case InitKind::Uniform: {
        std::uniform_real_distribution<double> dist(-spec.init_bound, spec.init_bound);
        for (Eigen::Index i = 0; i < view.size(); ++i) view[i] = dist(rng);
        break;
      }
    }
  }
}

}  // namespace safn
