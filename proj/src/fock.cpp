#include "qtp/fock.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <numbers>
#include <nlohmann/json.hpp>
#include <sstream>

#include "qtp/error.hpp"

namespace qtp {

using std::numbers::pi;

void LatticeModel::validate() const {
  if (mode_numbers.empty() || mode_numbers.size() > 8) throw InvalidInput("LatticeModel: 1 to 8 modes required");
  if (cutoff < 1 || cutoff > 4) throw InvalidInput("LatticeModel: cutoff must be between 1 and 4");
  if (!(mass > 0.0) || !(box_length > 0.0)) throw InvalidInput("LatticeModel: mass and box length must be positive");
  for (std::size_t i = 0; i < mode_numbers.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (mode_numbers[i] == mode_numbers[j]) throw InvalidInput("LatticeModel: momenta must be distinct");
}

std::shared_ptr<const ModeSpectrum> LatticeModel::spectrum() const {
  validate();
  return make_lattice_spectrum(mass, box_length, mode_numbers);
}

FieldSpec LatticeModel::field() const { return FieldSpec::on_lattice(spectrum(), mass); }

FockSpace::FockSpace(LatticeModel lattice) : lattice_(std::move(lattice)) {
  lattice_.validate();
  const std::size_t n = lattice_.mode_numbers.size();
  for (int n_k : lattice_.mode_numbers) {
    const double k = 2.0 * pi * n_k / lattice_.box_length;
    momentum_.push_back(k);
    omega_.push_back(std::sqrt(k * k + lattice_.mass * lattice_.mass));
  }
  // occupation vectors ordered by total quanta, then lexicographically
  for (int total = 0; total <= lattice_.cutoff; ++total) {
    std::vector<int> occ(n, 0);
    std::function<void(std::size_t, int)> rec = [&](std::size_t mode, int left) {
      if (mode + 1 == n) {
        occ[mode] = left;
        basis_.push_back(occ);
        return;
      }
      for (int c = left; c >= 0; --c) {
        occ[mode] = c;
        rec(mode + 1, left - c);
      }
    };
    rec(0, total);
  }
  if (basis_.size() > 600) throw ResourceError("FockSpace: dimension exceeds the dense-oracle limit");
  std::map<std::vector<int>, std::size_t> index;
  for (std::size_t i = 0; i < basis_.size(); ++i) index[basis_[i]] = i;
  const std::size_t d = basis_.size();
  for (std::size_t m = 0; m < n; ++m) {
    Matrix a = Matrix::Zero(d, d);
    for (std::size_t col = 0; col < d; ++col) {
      const int occ_m = basis_[col][m];
      if (occ_m == 0) continue;
      auto lowered = basis_[col];
      --lowered[m];
      a(index.at(lowered), col) = std::sqrt(static_cast<double>(occ_m));
    }
    a_.push_back(std::move(a));
  }
}

int FockSpace::quanta(std::size_t i) const {
  int s = 0;
  for (int c : basis_.at(i)) s += c;
  return s;
}

Matrix FockSpace::field_operator(const FourVector& x) const {
  if (x.dim() != 2) throw InvalidInput("FockSpace: lattice field lives in D = 2");
  Matrix phi = Matrix::Zero(dim(), dim());
  for (std::size_t m = 0; m < a_.size(); ++m) {
    const cplx phase = std::polar(1.0, -(omega_[m] * x.t() - momentum_[m] * x[1]));
    const double norm = 1.0 / std::sqrt(2.0 * omega_[m] * lattice_.box_length);
    phi += norm * (phase * a_[m] + std::conj(phase) * a_[m].adjoint());
  }
  return phi;
}

Vector FockSpace::apply_field(const FourVector& x, const Vector& v) const {
  if (x.dim() != 2) throw InvalidInput("FockSpace: lattice field lives in D = 2");
  Vector out = Vector::Zero(dim());
  for (std::size_t m = 0; m < a_.size(); ++m) {
    const cplx phase = std::polar(1.0, -(omega_[m] * x.t() - momentum_[m] * x[1]));
    const double norm = 1.0 / std::sqrt(2.0 * omega_[m] * lattice_.box_length);
    out += (norm * phase) * (a_[m] * v) + (norm * std::conj(phase)) * (a_[m].adjoint() * v);
  }
  return out;
}

Vector FockSpace::vacuum() const {
  Vector v = Vector::Zero(dim());
  v(0) = 1.0;
  return v;
}

namespace {

/// Fock amplitudes c_k = sqrt(w_k) psi_k of a lattice packet.
std::vector<cplx> fock_amplitudes(const WavePacket& p, const LatticeModel& lat) {
  const auto& nodes = p.nodes().nodes;
  if (nodes.size() != lat.mode_numbers.size()) throw InvalidInput("oracle: packet is not on the oracle lattice");
  std::vector<cplx> c(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const double k = 2.0 * pi * lat.mode_numbers[i] / lat.box_length;
    if (std::abs(nodes[i].k[1] - k) > 1e-12 * (1.0 + std::abs(k)))
      throw InvalidInput("oracle: packet is not on the oracle lattice");
    c[i] = std::sqrt(nodes[i].weight) * p.amplitudes()[i];
  }
  return c;
}

}  // namespace

Vector FockSpace::state_vector(const FieldState& state) const {
  return std::visit(
      [&](const auto& s) -> Vector {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Vacuum>) {
          return vacuum();
        } else if constexpr (std::is_same_v<T, Particles>) {
          if (static_cast<int>(s.packets.size()) > lattice_.cutoff)
            throw InvalidInput("oracle: more particles than the cutoff");
          Vector v = vacuum();
          for (const auto& p : s.packets) {
            const auto c = fock_amplitudes(p, lattice_);
            Vector next = Vector::Zero(dim());
            for (std::size_t m = 0; m < c.size(); ++m) next += c[m] * (a_[m].adjoint() * v);
            v = next;
          }
          const double n = v.norm();
          if (!(n > 0.0)) throw InvalidInput("oracle: state has zero norm");
          return v / n;
        } else {
          const auto c = fock_amplitudes(s.profile, lattice_);
          Matrix adag = Matrix::Zero(dim(), dim());
          double mean = 0.0;
          for (std::size_t m = 0; m < c.size(); ++m) {
            adag += c[m] * a_[m].adjoint();
            mean += std::norm(c[m]);
          }
          Vector term = vacuum(), v = vacuum();
          for (int n = 1; n <= lattice_.cutoff; ++n) {
            term = (adag * term) / static_cast<double>(n);
            v += term;
          }
          return std::exp(-0.5 * mean) * v;
        }
      },
      state.variant());
}

double FockSpace::top_sector_weight(const Vector& v) const {
  double top = 0.0;
  for (std::size_t i = 0; i < dim(); ++i)
    if (quanta(i) == lattice_.cutoff) top += std::norm(v(i));
  const double total = v.squaredNorm();
  return total > 0.0 ? top / total : 0.0;
}

Matrix build_field_operator(const LatticeModel& lattice, const FourVector& x) {
  return FockSpace(lattice).field_operator(x);
}

cplx oracle_correlator(const CorrelatorSpec& spec, const LatticeModel& lattice, const OracleOptions& opt) {
  spec.validate();
  const FockSpace fock(lattice);
  const Vector psi = fock.state_vector(spec.state);

  std::vector<FourVector> ops;
  for (const auto& slot : canonical_slots(spec))
    if (const auto* f = std::get_if<FieldInsertion>(&slot)) ops.push_back(f->point);

  auto check = [&](const Vector& v) {
    if (fock.top_sector_weight(v) > opt.leakage_threshold)
      throw ResourceError("oracle_correlator: Fock cutoff too low (norm leakage above threshold)");
  };
  const std::size_t half = ops.size() / 2;
  Vector ket = psi;
  for (std::size_t i = ops.size(); i-- > half;) {
    check(ket);
    ket = fock.apply_field(ops[i], ket);
  }
  Vector bra = psi;
  for (std::size_t i = 0; i < half; ++i) {
    check(bra);
    bra = fock.apply_field(ops[i], bra);
  }
  return bra.dot(ket) / psi.squaredNorm();
}

double oracle_detection_probability(const LatticeModel& lattice, const DetectorModel& det, const FieldState& state,
                                    const FourVector& x, std::size_t q, const DetectionOracleOptions& opt) {
  det.validate();
  if (det.dim != 2 || x.dim() != 2) throw InvalidInput("oracle_detection_probability: D = 2 only");
  const FockSpace fock(lattice);
  const Vector psi = fock.state_vector(state);
  if (fock.top_sector_weight(psi) > opt.leakage_threshold)
    throw ResourceError("oracle_detection_probability: Fock cutoff too low (norm leakage above threshold)");
  const std::size_t nm = lattice.mode_numbers.size();

  // Ket vectors a_k psi and a_k^+ psi, and their Gram matrix.
  std::vector<Vector> basis;
  for (std::size_t m = 0; m < nm; ++m) basis.push_back(fock.annihilation(m) * psi);
  for (std::size_t m = 0; m < nm; ++m) basis.push_back(fock.annihilation(m).adjoint() * psi);
  const std::size_t nb = basis.size();
  Matrix gram(nb, nb);
  for (std::size_t i = 0; i < nb; ++i)
    for (std::size_t j = 0; j < nb; ++j) gram(i, j) = basis[i].dot(basis[j]);

  std::vector<double> omega(nm), mom(nm), norm(nm);
  for (std::size_t m = 0; m < nm; ++m) {
    mom[m] = 2.0 * pi * lattice.mode_numbers[m] / lattice.box_length;
    omega[m] = std::sqrt(mom[m] * mom[m] + lattice.mass * lattice.mass);
    norm[m] = 1.0 / std::sqrt(2.0 * omega[m] * lattice.box_length);
  }

  const double dt = det.sampling.delta_t, dx = det.sampling.delta_x;
  // Sampled spacetime grid y = x + (i h_t, j h_x).
  const double ht = opt.grid_step_fraction * dt, hx = opt.grid_step_fraction * dx;
  const int nt = static_cast<int>(std::ceil(opt.grid_extent / opt.grid_step_fraction));

  // Detector lines: uniform in xi with period 2 pi / h_xi exceeding the joint support of R and f f.
  const double period_t = 12.0 * std::numbers::sqrt2 * dt + 18.0 / det.sigma_e;
  const double period_x = 12.0 * std::numbers::sqrt2 * dx + 18.0 / det.sigma_p;
  const double hxi0 = 2.0 * pi / period_t, hxi1 = 2.0 * pi / period_x;
  const int n0 = static_cast<int>(std::ceil(opt.spectral_extent * det.sigma_e / hxi0));
  const int n1 = static_cast<int>(std::ceil(opt.spectral_extent * det.sigma_p / hxi1));
  const double c1 = det.pointer.center(q);

  // 1D sampled transforms: T[m][sign][j0] = sum_t h f_t(t) e^{i (xi0 -/+ omega) (x0 + t)}.
  auto time_sum = [&](double nu) {
    cplx s = 0.0;
    for (int i = -nt; i <= nt; ++i) {
      const double t = i * ht;
      s += std::exp(-t * t / (2.0 * dt * dt)) * std::polar(1.0, nu * (x.t() + t));
    }
    return s * ht;
  };
  auto space_sum = [&](double nu) {
    cplx s = 0.0;
    for (int i = -nt; i <= nt; ++i) {
      const double r = i * hx;
      s += std::exp(-r * r / (2.0 * dx * dx)) * std::polar(1.0, -nu * (x[1] + r));
    }
    return s * hx;
  };
  std::vector<std::vector<cplx>> tm(nm), tp(nm), sm(nm), sp(nm);
  std::vector<double> xi0(2 * n0 + 1), xi1(2 * n1 + 1);
  for (int j = -n0; j <= n0; ++j) xi0[j + n0] = det.gap + j * hxi0;
  for (int j = -n1; j <= n1; ++j) xi1[j + n1] = c1 + j * hxi1;
  for (std::size_t m = 0; m < nm; ++m) {
    for (double e : xi0) {
      tm[m].push_back(time_sum(e - omega[m]));
      tp[m].push_back(time_sum(e + omega[m]));
    }
    for (double p : xi1) {
      sm[m].push_back(space_sum(p - mom[m]));
      sp[m].push_back(space_sum(p + mom[m]));
    }
  }

  const double dxi = hxi0 * hxi1 / (4.0 * pi * pi);
  double total = 0.0;
  Vector coef(nb);
  for (std::size_t a = 0; a < xi0.size(); ++a)
    for (std::size_t b = 0; b < xi1.size(); ++b) {
      const double weight = kernel_fourier(det, FourVector(xi0[a], xi1[b]), q) * dxi;
      if (weight == 0.0) continue;
      for (std::size_t m = 0; m < nm; ++m) {
        coef(m) = norm[m] * tm[m][a] * sm[m][b];
        coef(nm + m) = norm[m] * tp[m][a] * sp[m][b];
      }
      total += weight * coef.dot(gram * coef).real();
    }
  return total / psi.squaredNorm();
}

void write_golden(const std::string& path, const GoldenTable& table) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [key, values] : table) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& v : values) arr.push_back({v.real(), v.imag()});
    j[key] = arr;
  }
  std::ofstream out(path);
  if (!out) throw ResourceError("write_golden: cannot open " + path);
  out << std::setprecision(17) << j.dump(1) << '\n';
}

GoldenTable read_golden(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("read_golden: cannot open " + path);
  const auto j = nlohmann::json::parse(in);
  GoldenTable table;
  for (const auto& [key, arr] : j.items()) {
    auto& values = table[key];
    for (const auto& v : arr) values.emplace_back(v.at(0).get<double>(), v.at(1).get<double>());
  }
  return table;
}

}  // namespace qtp
