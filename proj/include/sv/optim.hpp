#pragma once

#include <cstddef>
#include <vector>

#include "sv/layers.hpp"

namespace sv::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Moment buffers persist for the life of the
// optimizer and follow the param order given at construction.
class Adam {
 public:
  explicit Adam(std::vector<Param*> params, AdamConfig cfg = {});

  void zero_grad();
  void step();
  std::size_t steps() const { return t_; }

 private:
  std::vector<Param*> params_;
  AdamConfig cfg_;
  std::vector<Tensor> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace sv::nn
