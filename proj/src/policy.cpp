#include "optgym/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "optgym/env.hpp"
#include "optgym/error.hpp"

namespace optgym {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr std::array<int64_t, 3> kSimpleSizes = {0, 4, 32};

size_t tile_slots(const EnvLimits& limits) { return static_cast<size_t>(limits.tile_choices) + 1; }

std::vector<size_t> mlp_widths(size_t in, size_t width, int layers, size_t out) {
  std::vector<size_t> w{in};
  for (int l = 0; l < layers; ++l) w.push_back(width);
  if (out > 0) w.push_back(out);
  return w;
}

bool is_tile_transform(int t) {
  return t == static_cast<int>(TransformKind::kTiling) ||
         t == static_cast<int>(TransformKind::kParallelization);
}

// d(log p_k)/dz_j = [j == k] - p_j and dH/dz_j = -p_j (log p_j + H) on
// allowed entries; masked entries have zero gradient.
void categorical_grad(const Categorical& c, std::optional<size_t> chosen, double coef_lp,
                      double coef_h, std::span<double> out) {
  for (size_t j = 0; j < c.size(); ++j) {
    if (c.probs[j] == 0.0) continue;
    double g = 0.0;
    if (chosen) g += coef_lp * ((j == *chosen ? 1.0 : 0.0) - c.probs[j]);
    g += coef_h * (-c.probs[j] * (c.logp[j] + c.entropy));
    out[j] += g;
  }
}

}  // namespace

std::string_view action_space_name(ActionSpaceKind kind) {
  return kind == ActionSpaceKind::kHierarchical ? "hier" : "simple";
}

ActionSpaceKind parse_action_space(std::string_view name) {
  if (name == "hier" || name == "hierarchical") return ActionSpaceKind::kHierarchical;
  if (name == "simple") return ActionSpaceKind::kSimple;
  throw Error(ErrorCode::kParse, "unknown action space '" + std::string(name) + "'");
}

Json to_json(const NetworkShape& shape) {
  return Json{{"hidden", shape.hidden},
              {"backbone_layers", shape.backbone_layers},
              {"head_hidden", shape.head_hidden},
              {"value_layers", shape.value_layers}};
}

NetworkShape network_shape_from_json(const Json& j) {
  NetworkShape s;
  s.hidden = j.value("hidden", s.hidden);
  s.backbone_layers = j.value("backbone_layers", s.backbone_layers);
  s.head_hidden = j.value("head_hidden", s.head_hidden);
  s.value_layers = j.value("value_layers", s.value_layers);
  if (s.hidden == 0 || s.head_hidden == 0 || s.backbone_layers < 1 || s.value_layers < 1) {
    throw Error(ErrorCode::kParse, "network widths and depths must be positive");
  }
  return s;
}

std::vector<SimpleAction> simple_action_list(const EnvLimits& limits) {
  std::vector<SimpleAction> list;
  for (TransformKind t : {TransformKind::kTiling, TransformKind::kParallelization}) {
    for (int64_t a : kSimpleSizes) {
      for (int64_t b : kSimpleSizes) {
        for (int64_t c : kSimpleSizes) list.push_back(SimpleAction{t, {a, b, c}, 0});
      }
    }
  }
  for (int k = 0; k < limits.max_loops; ++k) {
    list.push_back(SimpleAction{TransformKind::kInterchange, {}, k});
  }
  list.push_back(SimpleAction{TransformKind::kIm2col, {}, 0});
  list.push_back(SimpleAction{TransformKind::kVectorization, {}, 0});
  return list;
}

std::optional<Action> materialize(const SimpleAction& entry, size_t num_loops) {
  switch (entry.transform) {
    case TransformKind::kTiling:
    case TransformKind::kParallelization: {
      std::vector<int64_t> sizes(num_loops, 0);
      for (size_t i = 0; i < entry.sizes.size(); ++i) {
        if (entry.sizes[i] == 0) continue;
        if (i >= num_loops) return std::nullopt;
        sizes[i] = entry.sizes[i];
      }
      if (entry.transform == TransformKind::kTiling) return Tiling{sizes};
      return Parallelization{sizes};
    }
    case TransformKind::kInterchange:
      return Interchange{entry.swap_index};
    case TransformKind::kIm2col:
      return Im2col{};
    case TransformKind::kVectorization:
      return Vectorization{};
  }
  return std::nullopt;
}

std::vector<bool> simple_action_mask(const std::vector<SimpleAction>& list, const ActionMask& mask,
                                     size_t num_loops) {
  std::vector<bool> allowed(list.size(), false);
  for (size_t i = 0; i < list.size(); ++i) {
    const auto action = materialize(list[i], num_loops);
    allowed[i] = action.has_value() && mask_permits(mask, *action, num_loops);
  }
  return allowed;
}

PolicyParams PolicyParams::make(const EnvLimits& limits, ActionSpaceKind space,
                                const NetworkShape& shape, uint64_t seed) {
  validate(limits);
  std::mt19937_64 rng(seed);
  PolicyParams p;
  p.space = space;
  p.limits = limits;
  p.shape = shape;
  const size_t obs = observation_size(limits);
  const auto n = static_cast<size_t>(limits.max_loops);

  p.backbone = DenseNet::make(mlp_widths(obs, shape.hidden, shape.backbone_layers, 0), rng);
  p.backbone.layers().back().activation = Activation::kRelu;
  if (space == ActionSpaceKind::kHierarchical) {
    p.transform_head = DenseNet::make({shape.hidden, static_cast<size_t>(kNumTransforms)}, rng);
    p.tile_head = DenseNet::make({shape.hidden, shape.head_hidden, n * tile_slots(limits)}, rng);
    p.interchange_head = DenseNet::make({shape.hidden, shape.head_hidden, n}, rng);
  } else {
    p.simple_head = DenseNet::make(
        {shape.hidden, shape.head_hidden, simple_action_list(limits).size()}, rng);
  }
  p.value_net = DenseNet::make(mlp_widths(obs, shape.hidden, shape.value_layers, 1), rng);
  return p;
}

PolicyParams PolicyParams::zeros_like() const {
  PolicyParams z = *this;
  for (DenseNet* net : z.nets()) *net = net->zeros_like();
  return z;
}

std::vector<DenseNet*> PolicyParams::nets() {
  return {&backbone, &transform_head, &tile_head, &interchange_head, &simple_head, &value_net};
}

std::vector<const DenseNet*> PolicyParams::nets() const {
  return {&backbone, &transform_head, &tile_head, &interchange_head, &simple_head, &value_net};
}

const std::array<std::string_view, 6>& PolicyParams::net_names() {
  static const std::array<std::string_view, 6> names = {
      "backbone", "transform_head", "tile_head", "interchange_head", "simple_head", "value_net"};
  return names;
}

std::vector<std::span<double>> PolicyParams::parameters() {
  std::vector<std::span<double>> out;
  for (DenseNet* net : nets()) {
    for (auto s : net->parameters()) out.push_back(s);
  }
  return out;
}

std::vector<std::span<const double>> PolicyParams::parameters() const {
  std::vector<std::span<const double>> out;
  for (const DenseNet* net : nets()) {
    for (auto s : net->parameters()) out.push_back(s);
  }
  return out;
}

size_t PolicyParams::parameter_count() const {
  size_t n = 0;
  for (const DenseNet* net : nets()) n += net->parameter_count();
  return n;
}

Categorical Categorical::masked(std::span<const double> logits, const std::vector<bool>& allowed) {
  if (allowed.size() != logits.size()) {
    throw Error(ErrorCode::kLengthMismatch, "mask and logits differ in length");
  }
  Categorical c;
  c.probs.assign(logits.size(), 0.0);
  c.logp.assign(logits.size(), kNegInf);
  double mx = kNegInf;
  for (size_t i = 0; i < logits.size(); ++i) {
    if (allowed[i]) mx = std::max(mx, logits[i]);
  }
  if (mx == kNegInf) throw Error(ErrorCode::kAllMasked, "every entry of a head is masked");
  double sum = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    if (allowed[i]) sum += std::exp(logits[i] - mx);
  }
  const double lse = mx + std::log(sum);
  for (size_t i = 0; i < logits.size(); ++i) {
    if (!allowed[i]) continue;
    c.logp[i] = logits[i] - lse;
    c.probs[i] = std::exp(c.logp[i]);
    c.entropy -= c.probs[i] * c.logp[i];
  }
  return c;
}

size_t Categorical::sample(std::mt19937_64& rng) const {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  size_t last = 0;
  for (size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] == 0.0) continue;
    acc += probs[i];
    last = i;
    if (u < acc) return i;
  }
  return last;
}

size_t Categorical::argmax() const {
  size_t best = 0;
  for (size_t i = 1; i < probs.size(); ++i) {
    if (probs[i] > probs[best]) best = i;
  }
  return best;
}

PolicyDistributions distributions_from_logits(const PolicyParams& params, const HeadLogits& logits,
                                              const ActionMask& mask, size_t num_loops) {
  PolicyDistributions d;
  d.space = params.space;
  d.mask = mask;
  d.num_loops = num_loops;
  if (params.space == ActionSpaceKind::kSimple) {
    d.simple_list = simple_action_list(params.limits);
    d.simple = Categorical::masked(logits.simple, simple_action_mask(d.simple_list, mask, num_loops));
    return d;
  }
  d.transform = Categorical::masked(
      logits.transform, std::vector<bool>(mask.transform.begin(), mask.transform.end()));
  const size_t slots = tile_slots(params.limits);
  d.tiles.reserve(mask.tile_sizes.size());
  for (size_t i = 0; i < mask.tile_sizes.size(); ++i) {
    d.tiles.push_back(Categorical::masked(logits.tile.subspan(i * slots, slots), mask.tile_sizes[i]));
  }
  std::vector<bool> swap_allowed = mask.interchange;
  if (std::none_of(swap_allowed.begin(), swap_allowed.end(), [](bool b) { return b; })) {
    swap_allowed[0] = true;  // head unused in this state
  }
  d.interchange = Categorical::masked(logits.interchange, swap_allowed);
  return d;
}

PolicyDistributions forward_policy(const PolicyParams& params, const Observation& obs,
                                   const ActionMask& mask, size_t num_loops) {
  Matrix x(1, obs.size());
  x.data = obs;
  const PolicyForward f = forward_batch(params, x, false);
  return distributions_from_logits(params, f.row(0), mask, num_loops);
}

bool tile_row_forced(const PolicyDistributions& d, size_t row, int nonzero_so_far) {
  return row >= d.num_loops || nonzero_so_far >= d.mask.tile_budget;
}

namespace {

HierarchicalSample choose(const PolicyDistributions& d, std::mt19937_64* rng) {
  auto pick = [&](const Categorical& c) { return rng ? c.sample(*rng) : c.argmax(); };
  HierarchicalSample s;
  if (d.space == ActionSpaceKind::kSimple) {
    s.flat_index = static_cast<int>(pick(d.simple));
    s.transform = static_cast<int>(d.simple_list[static_cast<size_t>(s.flat_index)].transform);
  } else {
    s.transform = static_cast<int>(pick(d.transform));
    if (is_tile_transform(s.transform)) {
      std::vector<int> choices(d.tiles.size(), 0);
      int nonzero = 0;
      for (size_t i = 0; i < d.tiles.size(); ++i) {
        if (tile_row_forced(d, i, nonzero)) continue;
        choices[i] = static_cast<int>(pick(d.tiles[i]));
        if (choices[i] != 0) ++nonzero;
      }
      s.tile_choices = std::move(choices);
    } else if (s.transform == static_cast<int>(TransformKind::kInterchange)) {
      s.swap_index = static_cast<int>(pick(d.interchange));
    }
  }
  const SampleScore score = score_sample(d, s);
  s.joint_logprob = score.logprob;
  s.entropy = score.entropy;
  return s;
}

}  // namespace

HierarchicalSample sample_action(const PolicyDistributions& d, std::mt19937_64& rng) {
  return choose(d, &rng);
}

HierarchicalSample greedy_action(const PolicyDistributions& d) { return choose(d, nullptr); }

SampleScore score_sample(const PolicyDistributions& d, const HierarchicalSample& s) {
  SampleScore r;
  if (d.space == ActionSpaceKind::kSimple) {
    const auto k = static_cast<size_t>(s.flat_index);
    r.logprob = d.simple.logp.at(k);
    r.entropy = d.simple.entropy;
    return r;
  }
  r.logprob = d.transform.logp.at(static_cast<size_t>(s.transform));
  r.entropy = d.transform.entropy;
  if (s.tile_choices) {
    int nonzero = 0;
    for (size_t i = 0; i < d.tiles.size(); ++i) {
      const int c = (*s.tile_choices)[i];
      if (tile_row_forced(d, i, nonzero)) {
        if (c != 0) r.logprob = kNegInf;
        continue;
      }
      r.logprob += d.tiles[i].logp.at(static_cast<size_t>(c));
      r.entropy += d.tiles[i].entropy;
      if (c != 0) ++nonzero;
    }
  }
  if (s.swap_index) {
    r.logprob += d.interchange.logp.at(static_cast<size_t>(*s.swap_index));
    r.entropy += d.interchange.entropy;
  }
  return r;
}

void accumulate_logit_gradients(const PolicyDistributions& d, const HierarchicalSample& s,
                                double coef_lp, double coef_h, const HeadGrads& grads) {
  if (d.space == ActionSpaceKind::kSimple) {
    categorical_grad(d.simple, static_cast<size_t>(s.flat_index), coef_lp, coef_h, grads.simple);
    return;
  }
  categorical_grad(d.transform, static_cast<size_t>(s.transform), coef_lp, coef_h,
                   grads.transform);
  if (s.tile_choices) {
    const size_t slots = d.tiles.empty() ? 0 : d.tiles.front().size();
    int nonzero = 0;
    for (size_t i = 0; i < d.tiles.size(); ++i) {
      if (tile_row_forced(d, i, nonzero)) continue;
      const auto c = static_cast<size_t>((*s.tile_choices)[i]);
      categorical_grad(d.tiles[i], c, coef_lp, coef_h, grads.tile.subspan(i * slots, slots));
      if (c != 0) ++nonzero;
    }
  }
  if (s.swap_index) {
    categorical_grad(d.interchange, static_cast<size_t>(*s.swap_index), coef_lp, coef_h,
                     grads.interchange);
  }
}

Action to_action(const PolicyDistributions& d, const HierarchicalSample& s) {
  if (d.space == ActionSpaceKind::kSimple) {
    const auto a = materialize(d.simple_list.at(static_cast<size_t>(s.flat_index)), d.num_loops);
    if (!a) throw Error(ErrorCode::kMaskedAction, "simple action does not fit this op");
    return *a;
  }
  const auto kind = static_cast<TransformKind>(s.transform);
  if (kind == TransformKind::kTiling || kind == TransformKind::kParallelization) {
    std::vector<int64_t> sizes(d.num_loops, 0);
    for (size_t i = 0; i < d.num_loops; ++i) {
      sizes[i] = d.mask.tile_choices[i][static_cast<size_t>((*s.tile_choices)[i])];
    }
    if (kind == TransformKind::kTiling) return Tiling{sizes};
    return Parallelization{sizes};
  }
  if (kind == TransformKind::kInterchange) return Interchange{*s.swap_index};
  if (kind == TransformKind::kIm2col) return Im2col{};
  return Vectorization{};
}

HeadLogits PolicyForward::row(size_t r) const {
  auto view = [r](const Matrix& m) {
    return m.rows == 0 ? std::span<const double>{} : m.row(r);
  };
  return HeadLogits{view(transform), view(tile), view(interchange), view(simple)};
}

PolicyForward forward_batch(const PolicyParams& params, const Matrix& obs, bool keep_tape) {
  PolicyForward f;
  auto run = [&](const DenseNet& net, const Matrix& x, DenseNet::Tape& tape) {
    return net.forward(x, keep_tape ? &tape : nullptr);
  };
  f.hidden = run(params.backbone, obs, f.backbone_tape);
  if (params.space == ActionSpaceKind::kHierarchical) {
    f.transform = run(params.transform_head, f.hidden, f.transform_tape);
    f.tile = run(params.tile_head, f.hidden, f.tile_tape);
    f.interchange = run(params.interchange_head, f.hidden, f.interchange_tape);
  } else {
    f.simple = run(params.simple_head, f.hidden, f.simple_tape);
  }
  f.value = run(params.value_net, obs, f.value_tape);
  return f;
}

Matrix observations_matrix(const std::vector<Observation>& obs) {
  if (obs.empty()) return {};
  Matrix m(obs.size(), obs.front().size());
  for (size_t r = 0; r < obs.size(); ++r) {
    if (obs[r].size() != m.cols) {
      throw Error(ErrorCode::kLengthMismatch, "observations differ in length");
    }
    std::copy(obs[r].begin(), obs[r].end(), m.row(r).begin());
  }
  return m;
}

}  // namespace optgym
