#include "qtp/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "qtp/error.hpp"

namespace qtp {

namespace {

constexpr std::size_t kVacuumLeft = 0;   // p = -k
constexpr std::size_t kVacuumRight = 1;  // p = +k

std::size_t packet_list(std::size_t j, bool conjugate) { return 2 + 2 * j + (conjugate ? 1 : 0); }

/// Slot id of a field insertion: 2 * detector + (0 backward, 1 forward).
std::size_t slot_id(const FieldInsertion& f) { return 2 * f.label + (f.branch == Branch::Forward ? 1 : 0); }

}  // namespace

/// How a detector slot is contracted in one plan.
struct SpectralEngine::Edge {
  bool cap = false;             // mode function or classical field ending the chain
  std::size_t list = 0;         // node list seen by the slot
  std::size_t partner = 0;      // propagator partner slot
};

struct SpectralEngine::PlanCache {
  struct Step {
    std::size_t det = 0;
    bool enter_backward = true;  // walk enters through the backward slot
  };
  struct Component {
    bool cycle = false;
    std::size_t start_list = 0;  // chains: cap list at the entry slot
    std::size_t end_list = 0;    // chains: cap list at the exit slot
    std::vector<Step> steps;
  };
  struct Plan {
    cplx scalar = 1.0;
    std::vector<std::size_t> components;
  };
  std::vector<std::vector<Edge>> edges;  // per unique component: slot edges of its detectors
  std::vector<Component> components;
  std::vector<Plan> plans;
};

SpectralEngine::SpectralEngine(FieldSpec spec, FieldState state, std::vector<DetectorModel> detectors,
                               KernelForm form, SpectralOptions opt)
    : spec_(std::move(spec)), state_(std::move(state)), detectors_(std::move(detectors)), form_(form),
      opt_(opt) {
  spec_.validate();
  if (detectors_.empty() || detectors_.size() > 3) throw InvalidInput("SpectralEngine: 1 to 3 detectors supported");
  for (const auto& d : detectors_) {
    d.validate();
    if (d.dim != spec_.dim) throw InvalidInput("SpectralEngine: detector and field dimensions differ");
  }

  // Momentum reach of the state and of the detector acceptances.
  double packet_reach = 0.0;
  std::vector<const WavePacket*> packets;
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Particles>) {
          if (s.packets.size() > 4) throw InvalidInput("SpectralEngine: at most 4 particles");
          for (const auto& p : s.packets) packets.push_back(&p);
        } else if constexpr (std::is_same_v<T, Coherent>) {
          packets.push_back(&s.profile);
        }
      },
      state_.variant());
  for (const auto* p : packets)
    for (const auto& n : p->nodes().nodes) packet_reach = std::max(packet_reach, std::sqrt(n.k.spatial_norm2()));
  double accept = 0.0;
  for (const auto& d : detectors_) {
    double width = d.sigma_p;
    if (form_ == KernelForm::ExactSampled || form_ == KernelForm::SampledProbability)
      width = std::sqrt(d.sigma_p * d.sigma_p + 0.5 / (d.sampling.delta_x * d.sampling.delta_x));
    double c = 0.0;
    for (std::size_t q = 0; q < d.pointer.bins(); ++q) c = std::max(c, std::abs(d.pointer.center(q)));
    accept = std::max(accept, c + opt_.vacuum_extent * width);
  }

  ModeSpectrum vacuum;
  if (spec_.lattice) {
    vacuum = *spec_.lattice;
  } else {
    const std::vector<double> centre(spec_.dim - 1, 0.0);
    vacuum = make_window_spectrum(spec_, centre, 2.0 * accept + packet_reach, opt_.vacuum_points);
  }
  NodeList left, right;
  vacuum_weight_.resize(vacuum.size());
  for (std::size_t i = 0; i < vacuum.size(); ++i) {
    left.p.push_back(-vacuum.nodes[i].k);
    right.p.push_back(vacuum.nodes[i].k);
    vacuum_weight_(i) = vacuum.nodes[i].weight;
  }
  lists_.push_back(std::move(left));
  lists_.push_back(std::move(right));

  auto add_packet = [&](const WavePacket& p) {
    NodeList minus, plus;
    const auto& nodes = p.nodes().nodes;
    Vector w(nodes.size()), wc(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      minus.p.push_back(-nodes[i].k);
      plus.p.push_back(nodes[i].k);
      w(i) = nodes[i].weight * p.amplitudes()[i];
      wc(i) = std::conj(w(i));
    }
    lists_.push_back(std::move(minus));
    lists_.push_back(std::move(plus));
    packet_weight_.push_back(std::move(w));
    packet_conj_weight_.push_back(std::move(wc));
  };

  if (const auto* s = std::get_if<Particles>(&state_.variant())) {
    for (const auto& p : s->packets) add_packet(p);
    const std::size_t n = s->packets.size();
    overlaps_.resize(n * n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) overlaps_[i * n + j] = overlap(s->packets[i], s->packets[j]);
    norm_ = state_norm(state_);
  } else if (const auto* c = std::get_if<Coherent>(&state_.variant())) {
    // phi_cl = u + u*: nodes with p = -k (weight w psi) followed by p = +k (weight w psi*).
    add_packet(c->profile);
    NodeList both = lists_[2];
    both.p.insert(both.p.end(), lists_[3].p.begin(), lists_[3].p.end());
    classical_weight_.resize(2 * packet_weight_[0].size());
    classical_weight_ << packet_weight_[0], packet_conj_weight_[0];
    classical_list_ = lists_.size();
    lists_.push_back(std::move(both));
  }
}

SpectralEngine::~SpectralEngine() = default;

double SpectralEngine::kernel(std::size_t det, std::size_t q, const FourVector& pa, const FourVector& pb) const {
  const DetectorModel& d = detectors_[det];
  const FourVector xi = 0.5 * (pa - pb);
  switch (form_) {
    case KernelForm::SamplingIndependent:
      return kernel_fourier(d, xi, q);
    case KernelForm::ExactSampled:
      return kernel_fourier_sampled(d, xi, q);
    case KernelForm::Smeared:
      return smearing_fourier(d.sampling, pa + pb) * kernel_fourier(d, xi, q);
    case KernelForm::SampledProbability:
      return spacetime_volume(d.sampling) * smearing_fourier(d.sampling, pa + pb) * kernel_fourier_sampled(d, xi, q);
  }
  return 0.0;
}

const SpectralEngine::Matrix& SpectralEngine::kernel_matrix(std::size_t det, std::size_t q, std::size_t la,
                                                            std::size_t lb) const {
  const std::array<std::size_t, 4> key{det, q, la, lb};
  {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = kernels_.find(key);
    if (it != kernels_.end()) return *it->second;
  }
  const auto& a = lists_[la].p;
  const auto& b = lists_[lb].p;
  auto m = std::make_unique<Matrix>(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) (*m)(i, j) = kernel(det, q, a[i], b[j]);
  std::lock_guard<std::mutex> lock(mutex_);
  auto [it, inserted] = kernels_.emplace(key, std::move(m));
  return *it->second;
}

const SpectralEngine::PlanCache& SpectralEngine::plans_for(std::span<const FourVector> x) const {
  const std::size_t n = detectors_.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a].t() < x[b].t(); });
  {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = plans_.find(order);
    if (it != plans_.end()) return *it->second;
  }

  // Canonical slots for events at distinct times in this order; only the
  // relative order of the x_i matters.
  CorrelatorSpec corr;
  corr.state = state_;
  for (std::size_t i = 0; i < n; ++i) {
    FourVector p(spec_.dim);
    for (std::size_t r = 0; r < n; ++r)
      if (order[r] == i) p[0] = static_cast<double>(r);
    corr.forward_points.push_back(p);
    corr.backward_points.push_back(p);
  }
  const auto slots = canonical_slots(corr);
  const bool coherent = std::holds_alternative<Coherent>(state_.variant());
  const auto matchings = enumerate_matchings(slots, coherent, opt_.wick);

  auto cache = std::make_unique<PlanCache>();
  std::map<std::vector<std::size_t>, std::size_t> signatures;
  const std::size_t np = overlaps_.empty() ? 0 : static_cast<std::size_t>(std::sqrt(overlaps_.size() + 0.5));

  for (const auto& plan : matchings) {
    PlanCache::Plan compiled;
    std::vector<Edge> edges(2 * n);
    for (const auto& pr : plan.pairings) {
      const OperatorSlot& l = slots[pr.first];
      switch (pr.tag) {
        case PropagatorTag::ClassicalField:
          edges[slot_id(std::get<FieldInsertion>(l))] = {true, classical_list_, 0};
          break;
        case PropagatorTag::ModeFunction:
          edges[slot_id(std::get<FieldInsertion>(l))] = {
              true, packet_list(std::get<ParticleLeg>(slots[pr.second]).particle, false), 0};
          break;
        case PropagatorTag::ModeFunctionConjugate:
          edges[slot_id(std::get<FieldInsertion>(slots[pr.second]))] = {
              true, packet_list(std::get<ParticleLeg>(l).particle, true), 0};
          break;
        case PropagatorTag::Overlap:
          compiled.scalar *=
              overlaps_[std::get<ParticleLeg>(l).particle * np + std::get<ParticleLeg>(slots[pr.second]).particle];
          break;
        default: {
          const std::size_t a = slot_id(std::get<FieldInsertion>(l));
          const std::size_t b = slot_id(std::get<FieldInsertion>(slots[pr.second]));
          edges[a] = {false, kVacuumLeft, b};
          edges[b] = {false, kVacuumRight, a};
        }
      }
    }

    // Split into chains (starting at the lowest cap slot) and cycles.
    std::vector<bool> seen(n, false);
    auto add_component = [&](PlanCache::Component comp) {
      std::vector<std::size_t> sig{comp.cycle ? 1u : 0u, comp.start_list, comp.end_list};
      for (const auto& s : comp.steps) {
        sig.push_back(s.det);
        sig.push_back(s.enter_backward);
        sig.push_back(edges[2 * s.det].list);
        sig.push_back(edges[2 * s.det + 1].list);
      }
      auto [it, inserted] = signatures.emplace(sig, cache->components.size());
      if (inserted) {
        cache->components.push_back(std::move(comp));
        cache->edges.push_back(edges);
      }
      compiled.components.push_back(it->second);
    };
    for (std::size_t s = 0; s < 2 * n; ++s) {
      if (!edges[s].cap || seen[s / 2]) continue;
      PlanCache::Component comp;
      comp.start_list = edges[s].list;
      std::size_t cur = s;
      while (true) {
        const std::size_t det = cur / 2;
        seen[det] = true;
        comp.steps.push_back({det, cur % 2 == 0});
        const std::size_t out = cur ^ 1u;
        if (edges[out].cap) {
          comp.end_list = edges[out].list;
          break;
        }
        cur = edges[out].partner;
      }
      add_component(std::move(comp));
    }
    for (std::size_t d = 0; d < n; ++d) {
      if (seen[d]) continue;
      PlanCache::Component comp;
      comp.cycle = true;
      std::size_t cur = 2 * d;
      do {
        seen[cur / 2] = true;
        comp.steps.push_back({cur / 2, cur % 2 == 0});
        cur = edges[cur ^ 1u].partner;
      } while (cur != 2 * d);
      add_component(std::move(comp));
    }
    cache->plans.push_back(std::move(compiled));
  }

  std::lock_guard<std::mutex> lock(mutex_);
  auto [it, inserted] = plans_.emplace(order, std::move(cache));
  return *it->second;
}

SpectralEngine::Value SpectralEngine::evaluate(std::span<const FourVector> x, std::span<const std::size_t> q) const {
  const std::size_t n = detectors_.size();
  if (x.size() != n || q.size() != n) throw InvalidInput("SpectralEngine: one event per detector required");
  for (const auto& p : x)
    if (p.dim() != spec_.dim || !p.finite()) throw InvalidInput("SpectralEngine: bad event point");
  const PlanCache& cache = plans_for(x);

  // exp(i p.x_i) per detector and node list, built on demand.
  std::vector<std::map<std::size_t, Vector>> phases(n);
  auto phase = [&](std::size_t det, std::size_t list) -> const Vector& {
    auto it = phases[det].find(list);
    if (it != phases[det].end()) return it->second;
    const auto& p = lists_[list].p;
    Vector v(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) v(i) = std::polar(1.0, minkowski_dot(p[i], x[det]));
    return phases[det].emplace(list, std::move(v)).first->second;
  };
  auto cap_weight = [&](std::size_t list) -> const Vector& {
    if (classical_weight_.size() > 0 && list == classical_list_) return classical_weight_;
    const std::size_t j = (list - 2) / 2;
    return (list - 2) % 2 == 0 ? packet_weight_[j] : packet_conj_weight_[j];
  };

  // bounds[c] is the same contraction with every factor replaced by its modulus.
  std::vector<cplx> values(cache.components.size());
  std::vector<double> bounds(cache.components.size());
  for (std::size_t c = 0; c < cache.components.size(); ++c) {
    const auto& comp = cache.components[c];
    const auto& edges = cache.edges[c];
    // Oriented detector matrix for entry slot -> exit slot, with both slot phases applied.
    auto step_matrix = [&](const PlanCache::Step& s) {
      const std::size_t a = 2 * s.det, b = a + 1;
      const Matrix& k = kernel_matrix(s.det, q[s.det], edges[a].list, edges[b].list);
      const Vector& pa = phase(s.det, edges[a].list);
      const Vector& pb = phase(s.det, edges[b].list);
      if (s.enter_backward) return Matrix(pa.asDiagonal() * k * pb.asDiagonal());
      return Matrix(pb.asDiagonal() * k.transpose() * pa.asDiagonal());
    };
    if (!comp.cycle) {
      Eigen::RowVectorXcd v = cap_weight(comp.start_list).transpose();
      Eigen::RowVectorXd va = v.cwiseAbs();
      for (std::size_t i = 0; i < comp.steps.size(); ++i) {
        const auto& s = comp.steps[i];
        const std::size_t a = 2 * s.det, b = a + 1;
        const Matrix& k = kernel_matrix(s.det, q[s.det], edges[a].list, edges[b].list);
        const Vector& pa = phase(s.det, edges[a].list);
        const Vector& pb = phase(s.det, edges[b].list);
        Eigen::RowVectorXcd next;
        Eigen::RowVectorXd next_abs;
        if (s.enter_backward) {
          next = (v.cwiseProduct(pa.transpose()) * k).cwiseProduct(pb.transpose());
          next_abs = va * k.cwiseAbs();
        } else {
          next = (v.cwiseProduct(pb.transpose()) * k.transpose()).cwiseProduct(pa.transpose());
          next_abs = va * k.cwiseAbs().transpose();
        }
        if (i + 1 < comp.steps.size()) {
          next = next.cwiseProduct(vacuum_weight_.transpose());
          next_abs = next_abs.cwiseProduct(vacuum_weight_.cwiseAbs().transpose());
        }
        v = std::move(next);
        va = std::move(next_abs);
      }
      values[c] = (v * cap_weight(comp.end_list)).value();
      bounds[c] = va.dot(cap_weight(comp.end_list).cwiseAbs());
    } else if (comp.steps.size() == 1) {
      const auto& s = comp.steps[0];
      const Matrix& k = kernel_matrix(s.det, q[s.det], edges[2 * s.det].list, edges[2 * s.det + 1].list);
      const Vector& pa = phase(s.det, edges[2 * s.det].list);
      const Vector& pb = phase(s.det, edges[2 * s.det + 1].list);
      values[c] = (k.diagonal().cwiseProduct(pa).cwiseProduct(pb).cwiseProduct(vacuum_weight_)).sum();
      bounds[c] = k.diagonal().cwiseAbs().dot(vacuum_weight_.cwiseAbs());
    } else {
      const Vector& w = vacuum_weight_;
      Matrix m0 = step_matrix(comp.steps[0]) * w.asDiagonal();
      if (comp.steps.size() == 2) {
        const Matrix m1 = step_matrix(comp.steps[1]) * w.asDiagonal();
        values[c] = m0.cwiseProduct(m1.transpose()).sum();
        bounds[c] = m0.cwiseAbs().cwiseProduct(m1.cwiseAbs().transpose()).sum();
      } else {
        Eigen::MatrixXd a0 = m0.cwiseAbs();
        for (std::size_t i = 1; i < comp.steps.size(); ++i) {
          const Matrix mi = step_matrix(comp.steps[i]) * w.asDiagonal();
          m0 = m0 * mi;
          a0 = a0 * mi.cwiseAbs();
        }
        values[c] = m0.trace();
        bounds[c] = a0.trace();
      }
    }
  }

  Value out;
  cplx sum = 0.0;
  for (const auto& plan : cache.plans) {
    cplx v = plan.scalar;
    double b = std::abs(plan.scalar);
    for (auto c : plan.components) {
      v *= values[c];
      b *= bounds[c];
    }
    sum += v;
    out.scale += b;
  }
  out.value = sum / norm_;
  out.scale /= std::abs(norm_);
  return out;
}

}  // namespace qtp
