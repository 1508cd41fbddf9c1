#include "optgym/features.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "optgym/error.hpp"

namespace optgym {

HistoryTensor::HistoryTensor(const EnvLimits& limits)
    : loops_(limits.max_loops),
      steps_(limits.max_schedule),
      values_(static_cast<size_t>(limits.max_loops) * kChannels *
                  static_cast<size_t>(limits.max_schedule),
              0.0) {}

HistoryTensor record_history(const HistoryTensor& history, const Action& action, int step,
                             int loops_before) {
  if (step < 0 || step >= history.steps()) {
    throw Error(ErrorCode::kStepOutOfRange, "history step " + std::to_string(step));
  }
  HistoryTensor out = history;
  std::visit(
      [&](const auto& a) {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, Tiling> || std::is_same_v<T, Parallelization>) {
          const int channel = std::is_same_v<T, Tiling> ? 0 : 1;
          const int n = std::min<int>(static_cast<int>(a.sizes.size()), out.loops());
          for (int i = 0; i < n; ++i) out.at(i, channel, step) = static_cast<double>(a.sizes[i]);
        } else if constexpr (std::is_same_v<T, Interchange>) {
          const auto k = a.swap_index;
          if (k < loops_before - 1 && k + 1 < out.loops()) {
            out.at(static_cast<int>(k), 2, step) = static_cast<double>(k + 1);
            out.at(static_cast<int>(k) + 1, 2, step) = static_cast<double>(k + 1);
          }
        } else if constexpr (std::is_same_v<T, Im2col>) {
          out.im2col = true;
        } else {
          out.vectorized = true;
        }
      },
      action);
  return out;
}

size_t observation_size(const EnvLimits& l) {
  const size_t n = static_cast<size_t>(l.max_loops);
  const size_t d = static_cast<size_t>(l.max_dims);
  const size_t cols = n + 1;
  return n + static_cast<size_t>(l.max_loads) * d * cols + d * cols + 6 +
         n * HistoryTensor::kChannels * static_cast<size_t>(l.max_schedule) + 2;
}

namespace {

void append_matrix(Observation& obs, const AccessMatrix* m, const EnvLimits& l, size_t n) {
  const size_t cols = static_cast<size_t>(l.max_loops) + 1;
  for (int d = 0; d < l.max_dims; ++d) {
    std::vector<double> row(cols, 0.0);
    if (m != nullptr && static_cast<size_t>(d) < m->dims()) {
      const auto& src = m->rows[static_cast<size_t>(d)];
      for (size_t c = 0; c < n; ++c) row[c] = static_cast<double>(src[c]);
      row[cols - 1] = static_cast<double>(src[n]);
    }
    obs.insert(obs.end(), row.begin(), row.end());
  }
}

}  // namespace

Observation extract(const LinalgOp& op, const HistoryTensor& history, const EnvLimits& limits) {
  const size_t n = op.loops.size();
  if (static_cast<int>(n) > limits.max_loops) {
    throw Error(ErrorCode::kLimitExceeded, std::to_string(n) + " loops > N");
  }
  if (static_cast<int>(op.loads.size()) > limits.max_loads) {
    throw Error(ErrorCode::kLimitExceeded, std::to_string(op.loads.size()) + " loads > L");
  }
  auto check_dims = [&](const AccessMatrix& m) {
    if (static_cast<int>(m.dims()) > limits.max_dims) {
      throw Error(ErrorCode::kLimitExceeded, "array rank " + std::to_string(m.dims()) + " > D");
    }
  };
  for (const auto& m : op.loads) check_dims(m);
  if (op.store) check_dims(*op.store);
  if (history.loops() != limits.max_loops || history.steps() != limits.max_schedule) {
    throw Error(ErrorCode::kLimitExceeded, "history tensor shape does not match limits");
  }

  Observation obs;
  obs.reserve(observation_size(limits));

  for (int i = 0; i < limits.max_loops; ++i) {
    obs.push_back(static_cast<size_t>(i) < n
                      ? std::log1p(static_cast<double>(op.loops[static_cast<size_t>(i)].trip()))
                      : 0.0);
  }
  for (int l = 0; l < limits.max_loads; ++l) {
    const AccessMatrix* m =
        static_cast<size_t>(l) < op.loads.size() ? &op.loads[static_cast<size_t>(l)] : nullptr;
    append_matrix(obs, m, limits, n);
  }
  append_matrix(obs, op.store ? &*op.store : nullptr, limits, n);
  for (int64_t c : op.counts.values) obs.push_back(static_cast<double>(c));

  for (int i = 0; i < history.loops(); ++i) {
    for (int c = 0; c < HistoryTensor::kChannels; ++c) {
      for (int s = 0; s < history.steps(); ++s) {
        const double v = history.at(i, c, s);
        obs.push_back(c < 2 ? std::log1p(v) : v);
      }
    }
  }
  obs.push_back(history.vectorized ? 1.0 : 0.0);
  obs.push_back(history.im2col ? 1.0 : 0.0);
  return obs;
}

}  // namespace optgym
