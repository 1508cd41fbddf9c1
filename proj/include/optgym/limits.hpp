#pragma once

namespace optgym {

// Fixed maxima that make observations and policy heads constant-size.
struct EnvLimits {
  int max_loops = 7;         // N
  int tile_choices = 5;      // M; the tile head has M + 1 slots per loop
  int max_dims = 4;          // D
  int max_schedule = 7;      // tau
  int max_loads = 3;         // L

  bool operator==(const EnvLimits&) const = default;
};

void validate(const EnvLimits& limits);

}  // namespace optgym
