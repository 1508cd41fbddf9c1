#pragma once

#include <vector>

#include "optgym/limits.hpp"
#include "optgym/loop_ir.hpp"
#include "optgym/transform.hpp"

namespace optgym {

// Per-loop record of transformation parameters: entry (loop, channel, step)
// with channels {Tiling, Parallelization, Interchange}. Vectorization and
// Im2col are tracked as two flags.
class HistoryTensor {
 public:
  static constexpr int kChannels = 3;

  explicit HistoryTensor(const EnvLimits& limits);

  double at(int loop, int channel, int step) const { return values_[index(loop, channel, step)]; }
  double& at(int loop, int channel, int step) { return values_[index(loop, channel, step)]; }

  const std::vector<double>& values() const { return values_; }
  int loops() const { return loops_; }
  int steps() const { return steps_; }

  bool vectorized = false;
  bool im2col = false;

  bool operator==(const HistoryTensor&) const = default;

 private:
  size_t index(int loop, int channel, int step) const {
    return (static_cast<size_t>(loop) * kChannels + static_cast<size_t>(channel)) *
               static_cast<size_t>(steps_) +
           static_cast<size_t>(step);
  }

  int loops_;
  int steps_;
  std::vector<double> values_;
};

// `loops_before` is the loop count of the op the action was applied to.
HistoryTensor record_history(const HistoryTensor& history, const Action& action, int step,
                             int loops_before);

using Observation = std::vector<double>;

// N + L*D*(N+1) + D*(N+1) + 6 + N*3*tau + 2
size_t observation_size(const EnvLimits& limits);

Observation extract(const LinalgOp& op, const HistoryTensor& history, const EnvLimits& limits);

}  // namespace optgym
