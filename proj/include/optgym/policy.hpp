#pragma once

// Multi-head policy and value networks over the hierarchical (or flat
// "simple") action space, with masked categorical sampling.

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "optgym/features.hpp"
#include "optgym/limits.hpp"
#include "optgym/nn.hpp"
#include "optgym/transform.hpp"

namespace optgym {

enum class ActionSpaceKind { kHierarchical, kSimple };

std::string_view action_space_name(ActionSpaceKind kind);  // "hier" | "simple"
ActionSpaceKind parse_action_space(std::string_view name);

struct NetworkShape {
  size_t hidden = 512;
  int backbone_layers = 4;
  size_t head_hidden = 512;
  int value_layers = 4;

  bool operator==(const NetworkShape&) const = default;
};

Json to_json(const NetworkShape& shape);
NetworkShape network_shape_from_json(const Json& j);

// One entry of the simple action space: a transform plus a fixed parameter.
struct SimpleAction {
  TransformKind transform = TransformKind::kVectorization;
  std::array<int64_t, 3> sizes{};  // Tiling / Parallelization, first three loops
  int64_t swap_index = 0;          // Interchange
};

// 27 Tiling and 27 Parallelization vectors over {0,4,32}^3, N interchange
// slots, Im2col, Vectorization.
std::vector<SimpleAction> simple_action_list(const EnvLimits& limits);

// nullopt when the entry tiles a loop the op does not have.
std::optional<Action> materialize(const SimpleAction& entry, size_t num_loops);

// Per-entry legality of the simple list under `mask`.
std::vector<bool> simple_action_mask(const std::vector<SimpleAction>& list,
                                     const ActionMask& mask, size_t num_loops);

struct PolicyParams {
  ActionSpaceKind space = ActionSpaceKind::kHierarchical;
  EnvLimits limits;
  NetworkShape shape;
  DenseNet backbone;          // obs -> hidden x backbone_layers, ReLU on every layer
  DenseNet transform_head;    // hidden -> 5
  DenseNet tile_head;         // hidden -> head_hidden -> N*(M+1)
  DenseNet interchange_head;  // hidden -> head_hidden -> N
  DenseNet simple_head;       // hidden -> head_hidden -> |simple list|
  DenseNet value_net;         // obs -> hidden x value_layers -> 1

  static PolicyParams make(const EnvLimits& limits, ActionSpaceKind space,
                           const NetworkShape& shape, uint64_t seed);

  PolicyParams zeros_like() const;

  // Every network in a fixed order (empty heads included).
  std::vector<DenseNet*> nets();
  std::vector<const DenseNet*> nets() const;
  static const std::array<std::string_view, 6>& net_names();

  std::vector<std::span<double>> parameters();
  std::vector<std::span<const double>> parameters() const;
  size_t parameter_count() const;

  bool operator==(const PolicyParams&) const = default;
};

// Softmax restricted to the allowed entries; masked entries get probability 0
// and log-probability -inf.
struct Categorical {
  std::vector<double> probs;
  std::vector<double> logp;
  double entropy = 0.0;

  static Categorical masked(std::span<const double> logits, const std::vector<bool>& allowed);

  size_t size() const { return probs.size(); }
  size_t sample(std::mt19937_64& rng) const;
  size_t argmax() const;
};

// Distributions for one state. Tile rows are the base per-loop distributions;
// once `tile_budget` loops have received a nonzero size, later rows are
// forced to slot 0 (see tile_row_forced).
struct PolicyDistributions {
  ActionSpaceKind space = ActionSpaceKind::kHierarchical;
  ActionMask mask;
  size_t num_loops = 0;
  Categorical transform;
  std::vector<Categorical> tiles;
  Categorical interchange;
  Categorical simple;
  std::vector<SimpleAction> simple_list;
};

struct HierarchicalSample {
  int transform = 0;
  std::optional<std::vector<int>> tile_choices;  // N slot indices
  std::optional<int> swap_index;
  int flat_index = -1;  // simple space only
  double joint_logprob = 0.0;
  double entropy = 0.0;

  bool operator==(const HierarchicalSample&) const = default;
};

// Raw head outputs for one state.
struct HeadLogits {
  std::span<const double> transform;
  std::span<const double> tile;
  std::span<const double> interchange;
  std::span<const double> simple;
};

struct HeadGrads {
  std::span<double> transform;
  std::span<double> tile;
  std::span<double> interchange;
  std::span<double> simple;
};

PolicyDistributions distributions_from_logits(const PolicyParams& params, const HeadLogits& logits,
                                              const ActionMask& mask, size_t num_loops);

// Throws kLengthMismatch for a wrong observation length and kAllMasked when
// no transform is legal.
PolicyDistributions forward_policy(const PolicyParams& params, const Observation& obs,
                                   const ActionMask& mask, size_t num_loops);

bool tile_row_forced(const PolicyDistributions& d, size_t row, int nonzero_so_far);

HierarchicalSample sample_action(const PolicyDistributions& d, std::mt19937_64& rng);
HierarchicalSample greedy_action(const PolicyDistributions& d);

// Log-probability and entropy of a given sample under `d`.
struct SampleScore {
  double logprob = 0.0;
  double entropy = 0.0;
};
SampleScore score_sample(const PolicyDistributions& d, const HierarchicalSample& s);

// Adds coef_lp * d(logprob)/d(logits) + coef_h * d(entropy)/d(logits) into `grads`.
void accumulate_logit_gradients(const PolicyDistributions& d, const HierarchicalSample& s,
                                double coef_lp, double coef_h, const HeadGrads& grads);

Action to_action(const PolicyDistributions& d, const HierarchicalSample& s);

// Batched forward of the backbone and every head used by `params.space`.
struct PolicyForward {
  Matrix hidden;
  Matrix transform;
  Matrix tile;
  Matrix interchange;
  Matrix simple;
  Matrix value;
  DenseNet::Tape backbone_tape, transform_tape, tile_tape, interchange_tape, simple_tape,
      value_tape;

  HeadLogits row(size_t r) const;
};

PolicyForward forward_batch(const PolicyParams& params, const Matrix& obs, bool keep_tape);

Matrix observations_matrix(const std::vector<Observation>& obs);

}  // namespace optgym
