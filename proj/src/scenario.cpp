#include "qtp/scenario.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "qtp/diagnostics.hpp"
#include "qtp/error.hpp"
#include "qtp/fock.hpp"
#include "qtp/parallel.hpp"

namespace qtp {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------
// Field-path validation helpers
// ---------------------------------------------------------------------------

std::string at(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }
std::string at(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

void allow_keys(const json& obj, const std::string& path, std::initializer_list<const char*> keys) {
  if (!obj.is_object()) throw SchemaError(path.empty() ? "$" : path, "expected an object");
  for (const auto& [k, v] : obj.items()) {
    bool ok = false;
    for (const char* a : keys) ok = ok || k == a;
    if (!ok) throw SchemaError(at(path, k), "unknown field");
  }
}

const json& need(const json& obj, const std::string& path, const char* key) {
  if (!obj.contains(key)) throw SchemaError(at(path, key), "required field missing");
  return obj.at(key);
}

enum class Bound { Any, Positive, NonNegative };

double number(const json& v, const std::string& path, Bound b = Bound::Any) {
  if (!v.is_number()) throw SchemaError(path, "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw SchemaError(path, "must be finite");
  if (b == Bound::Positive && !(x > 0.0)) throw SchemaError(path, "must be > 0");
  if (b == Bound::NonNegative && !(x >= 0.0)) throw SchemaError(path, "must be >= 0");
  return x;
}

double number(const json& obj, const std::string& path, const char* key, std::optional<double> def,
              Bound b = Bound::Any) {
  if (!obj.contains(key)) {
    if (!def) throw SchemaError(at(path, key), "required field missing");
    return *def;
  }
  return number(obj.at(key), at(path, key), b);
}

long long integer(const json& obj, const std::string& path, const char* key, std::optional<long long> def,
                  long long lo, long long hi) {
  if (!obj.contains(key)) {
    if (!def) throw SchemaError(at(path, key), "required field missing");
    return *def;
  }
  const json& v = obj.at(key);
  if (!v.is_number_integer()) throw SchemaError(at(path, key), "expected an integer");
  const long long x = v.get<long long>();
  if (x < lo || x > hi)
    throw SchemaError(at(path, key), "must be in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  return x;
}

bool boolean(const json& obj, const std::string& path, const char* key, bool def) {
  if (!obj.contains(key)) return def;
  if (!obj.at(key).is_boolean()) throw SchemaError(at(path, key), "expected true or false");
  return obj.at(key).get<bool>();
}

std::string choice(const json& obj, const std::string& path, const char* key, std::optional<std::string> def,
                   std::initializer_list<const char*> options) {
  if (!obj.contains(key)) {
    if (!def) throw SchemaError(at(path, key), "required field missing");
    return *def;
  }
  const json& v = obj.at(key);
  std::string all;
  for (const char* o : options) {
    if (v.is_string() && v.get<std::string>() == o) return o;
    all += std::string(all.empty() ? "" : ", ") + o;
  }
  throw SchemaError(at(path, key), "expected one of: " + all);
}

std::vector<double> numbers(const json& v, const std::string& path, std::size_t size) {
  if (!v.is_array()) throw SchemaError(path, "expected an array");
  if (size && v.size() != size) throw SchemaError(path, "expected " + std::to_string(size) + " entries");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(number(v[i], at(path, i)));
  return out;
}

FourVector vec(const json& v, const std::string& path, int dim) {
  const auto c = numbers(v, path, static_cast<std::size_t>(dim));
  FourVector x(dim);
  for (int k = 0; k < dim; ++k) x[k] = c[k];
  return x;
}

cplx complex_value(const json& v, const std::string& path) {
  if (v.is_number()) return number(v, path);
  const auto c = numbers(v, path, 2);
  return {c[0], c[1]};
}

// ---------------------------------------------------------------------------
// Sections
// ---------------------------------------------------------------------------

WavePacket parse_packet(const json& p, const std::string& path, const Scenario& s) {
  allow_keys(p, path, {"center", "width", "points", "span_widths", "scale", "amplitudes"});
  WavePacket w = [&] {
    if (p.contains("amplitudes")) {
      if (!s.lattice) throw SchemaError(at(path, "amplitudes"), "explicit amplitudes need a lattice field");
      const json& a = p.at("amplitudes");
      if (!a.is_array() || a.size() != s.lattice->mode_numbers.size())
        throw SchemaError(at(path, "amplitudes"), "expected one amplitude per lattice mode");
      std::vector<cplx> amp;
      for (std::size_t i = 0; i < a.size(); ++i) amp.push_back(complex_value(a[i], at(at(path, "amplitudes"), i)));
      return WavePacket::on_lattice(s.field, amp);
    }
    if (s.lattice) throw SchemaError(at(path, "amplitudes"), "lattice fields need explicit amplitudes");
    const auto centre = numbers(need(p, path, "center"), at(path, "center"), static_cast<std::size_t>(s.field.dim - 1));
    const double width = number(p, path, "width", std::nullopt, Bound::Positive);
    const auto points = integer(p, path, "points", 128, 8, 4096);
    const double span = number(p, path, "span_widths", 10.0, Bound::Positive);
    return WavePacket::gaussian(s.field, centre, width, static_cast<std::size_t>(points), span);
  }();
  if (p.contains("scale")) w = w.scaled(complex_value(p.at("scale"), at(path, "scale")));
  return w;
}

void parse_field(const json& f, Scenario& s) {
  const std::string path = "field";
  allow_keys(f, path, {"dim", "mass", "epsilon", "lattice"});
  const int dim = static_cast<int>(integer(f, path, "dim", std::nullopt, 2, 4));
  if (dim != 2 && dim != 4) throw SchemaError(at(path, "dim"), "must be 2 or 4");
  const double mass = number(f, path, "mass", 1.0, Bound::NonNegative);
  const double eps = number(f, path, "epsilon", 1e-4, Bound::Positive);
  if (f.contains("lattice")) {
    const std::string lp = at(path, "lattice");
    const json& l = f.at("lattice");
    allow_keys(l, lp, {"mode_numbers", "box_length", "cutoff"});
    if (dim != 2) throw SchemaError(lp, "lattices are D = 2 only");
    LatticeModel lat;
    const json& modes = need(l, lp, "mode_numbers");
    if (!modes.is_array() || modes.empty()) throw SchemaError(at(lp, "mode_numbers"), "expected a non-empty array");
    for (std::size_t i = 0; i < modes.size(); ++i) {
      if (!modes[i].is_number_integer()) throw SchemaError(at(at(lp, "mode_numbers"), i), "expected an integer");
      lat.mode_numbers.push_back(modes[i].get<int>());
    }
    lat.box_length = number(l, lp, "box_length", std::nullopt, Bound::Positive);
    lat.cutoff = static_cast<int>(integer(l, lp, "cutoff", 3, 1, 12));
    lat.mass = mass;
    try {
      lat.validate();
    } catch (const InvalidInput& e) {
      throw SchemaError(lp, e.what());
    }
    s.lattice = lat;
    s.field = lat.field();
    s.field.epsilon = eps;
  } else {
    s.field = FieldSpec(dim, mass, eps);
  }
}

void parse_state(const json& st, Scenario& s) {
  const std::string path = "state";
  allow_keys(st, path, {"kind", "packets"});
  const std::string kind = choice(st, path, "kind", std::nullopt, {"vacuum", "particles", "coherent"});
  if (kind == "vacuum") {
    if (st.contains("packets")) throw SchemaError(at(path, "packets"), "the vacuum has no packets");
    s.state = FieldState::vacuum();
    return;
  }
  const json& packets = need(st, path, "packets");
  const std::string pp = at(path, "packets");
  if (!packets.is_array() || packets.empty()) throw SchemaError(pp, "expected a non-empty array");
  if (kind == "coherent" && packets.size() != 1) throw SchemaError(pp, "a coherent state has exactly one profile");
  if (packets.size() > 4) throw SchemaError(pp, "at most 4 particles");
  std::vector<WavePacket> w;
  for (std::size_t i = 0; i < packets.size(); ++i) w.push_back(parse_packet(packets[i], at(pp, i), s));
  s.state = kind == "coherent" ? FieldState::coherent(w[0]) : FieldState::particles(std::move(w));
}

DetectorConfig parse_detector(const json& d, const std::string& path, int dim) {
  allow_keys(d, path, {"gap", "sigma_e", "sigma_p", "coupling", "ref_point", "sampling", "pointer", "hard_step", "window"});
  DetectorConfig c;
  DetectorModel& m = c.model;
  m.dim = dim;
  m.gap = number(d, path, "gap", std::nullopt, Bound::Positive);
  m.sigma_e = number(d, path, "sigma_e", std::nullopt, Bound::Positive);
  m.sigma_p = number(d, path, "sigma_p", std::nullopt, Bound::Positive);
  m.coupling = number(d, path, "coupling", std::nullopt, Bound::Positive);
  m.ref_point = d.contains("ref_point") ? vec(d.at("ref_point"), at(path, "ref_point"), dim) : FourVector(dim);
  m.hard_step = boolean(d, path, "hard_step", false);

  const std::string sp = at(path, "sampling");
  const json& sj = need(d, path, "sampling");
  allow_keys(sj, sp, {"delta_t", "delta_x", "center"});
  m.sampling = SamplingFunction(number(sj, sp, "delta_t", std::nullopt, Bound::Positive),
                                number(sj, sp, "delta_x", std::nullopt, Bound::Positive),
                                sj.contains("center") ? vec(sj.at("center"), at(sp, "center"), dim) : FourVector(dim));
  if (d.contains("pointer")) {
    m.pointer.bin_edges = numbers(d.at("pointer"), at(path, "pointer"), 0);
    if (m.pointer.bin_edges.size() < 2 || m.pointer.bin_edges.size() > 9)
      throw SchemaError(at(path, "pointer"), "expected 2 to 9 bin edges");
    for (std::size_t i = 1; i < m.pointer.bin_edges.size(); ++i)
      if (!(m.pointer.bin_edges[i] > m.pointer.bin_edges[i - 1]))
        throw SchemaError(at(path, "pointer"), "bin edges must increase");
  }

  const std::string wp = at(path, "window");
  const json& wj = need(d, path, "window");
  allow_keys(wj, wp, {"lower", "upper", "points"});
  c.window.lower = vec(need(wj, wp, "lower"), at(wp, "lower"), dim);
  c.window.upper = vec(need(wj, wp, "upper"), at(wp, "upper"), dim);
  const json& pts = need(wj, wp, "points");
  if (!pts.is_array() || pts.size() != static_cast<std::size_t>(dim))
    throw SchemaError(at(wp, "points"), "expected one count per axis");
  for (std::size_t k = 0; k < pts.size(); ++k) {
    if (!pts[k].is_number_integer() || pts[k].get<long long>() < 1 || pts[k].get<long long>() > 4096)
      throw SchemaError(at(at(wp, "points"), k), "expected an integer in [1, 4096]");
    c.window.points.push_back(pts[k].get<std::size_t>());
  }
  try {
    m.validate();
  } catch (const InvalidInput& e) {
    throw SchemaError(path, e.what());
  }
  try {
    c.window.validate();
  } catch (const InvalidInput& e) {
    throw SchemaError(wp, e.what());
  }
  return c;
}

Stage parse_stage(const json& v, const std::string& path) {
  static const std::vector<std::pair<std::string, Stage>> names = {
      {"wightman", Stage::Wightman}, {"detect", Stage::Detect}, {"joint", Stage::Joint},
      {"diagnostics", Stage::Diagnostics}, {"oracle", Stage::Oracle}, {"limits", Stage::Limits}};
  if (v.is_string())
    for (const auto& [n, s] : names)
      if (v.get<std::string>() == n) return s;
  throw SchemaError(path, "expected one of: wightman, detect, joint, diagnostics, oracle, limits");
}

void parse_numerics(const json& n, Scenario& s) {
  const std::string path = "numerics";
  allow_keys(n, path,
             {"threads", "route", "kernel_form", "residue_tolerance", "vacuum_points", "vacuum_extent", "max_pairs",
              "relative_points", "relative_extent", "kolmogorov_threshold", "oracle_tolerance", "wightman_pairs"});
  DensityOptions& d = s.density;
  d.threads = static_cast<int>(integer(n, path, "threads", 1, 1, 1024));
  const std::string route = choice(n, path, "route", "spectral", {"spectral", "wigner", "direct"});
  d.route = route == "spectral" ? DensityRoute::Spectral : route == "wigner" ? DensityRoute::Wigner : DensityRoute::Direct;
  const std::string form =
      choice(n, path, "kernel_form", "sampling_independent",
             {"sampling_independent", "exact_sampled", "smeared", "sampled_probability"});
  s.kernel_form = form == "sampling_independent" ? KernelForm::SamplingIndependent
                  : form == "exact_sampled"      ? KernelForm::ExactSampled
                  : form == "smeared"            ? KernelForm::Smeared
                                                 : KernelForm::SampledProbability;
  if (d.route != DensityRoute::Spectral &&
      (s.kernel_form == KernelForm::Smeared || s.kernel_form == KernelForm::SampledProbability))
    throw SchemaError(at(path, "kernel_form"), "smeared and sampled forms need the spectral route");
  d.residue_tolerance = number(n, path, "residue_tolerance", 1e-8, Bound::Positive);
  d.spectral.vacuum_points = static_cast<std::size_t>(integer(n, path, "vacuum_points", 257, 9, 100000));
  d.spectral.vacuum_extent = number(n, path, "vacuum_extent", 10.0, Bound::Positive);
  d.spectral.wick.max_pairs = static_cast<std::size_t>(integer(n, path, "max_pairs", 5, 1, 8));
  d.relative_points = static_cast<std::size_t>(integer(n, path, "relative_points", 64, 8, 1 << 14));
  d.relative_extent = number(n, path, "relative_extent", 12.0, Bound::Positive);
  s.kolmogorov_threshold = number(n, path, "kolmogorov_threshold", 1e-10, Bound::Positive);
  s.oracle_tolerance = number(n, path, "oracle_tolerance", 1e-4, Bound::Positive);
  if (n.contains("wightman_pairs")) {
    const std::string wp = at(path, "wightman_pairs");
    const json& w = n.at("wightman_pairs");
    if (!w.is_array()) throw SchemaError(wp, "expected an array of [x, x'] pairs");
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (!w[i].is_array() || w[i].size() != 2) throw SchemaError(at(wp, i), "expected [x, x']");
      s.wightman_pairs.emplace_back(vec(w[i][0], at(at(wp, i), 0), s.field.dim), vec(w[i][1], at(at(wp, i), 1), s.field.dim));
    }
  }
}

}  // namespace

bool Scenario::has(Stage s) const { return std::find(pipeline.begin(), pipeline.end(), s) != pipeline.end(); }

Scenario parse_scenario(const json& config) {
  allow_keys(config, "", {"schema_version", "name", "field", "state", "detectors", "pipeline", "numerics", "udw", "outputs"});
  Scenario s;
  if (integer(config, "", "schema_version", std::nullopt, 0, 1 << 20) != kSchemaVersion)
    throw SchemaError("schema_version", "unsupported version (expected " + std::to_string(kSchemaVersion) + ")");
  if (config.contains("name")) {
    if (!config.at("name").is_string()) throw SchemaError("name", "expected a string");
    s.name = config.at("name").get<std::string>();
  } else {
    s.name = "scenario";
  }
  parse_field(need(config, "", "field"), s);
  parse_state(need(config, "", "state"), s);

  const json& dets = need(config, "", "detectors");
  if (!dets.is_array() || dets.empty() || dets.size() > 3) throw SchemaError("detectors", "expected 1 to 3 detectors");
  for (std::size_t i = 0; i < dets.size(); ++i) s.detectors.push_back(parse_detector(dets[i], at("detectors", i), s.field.dim));

  const json& pipe = need(config, "", "pipeline");
  if (!pipe.is_array() || pipe.empty()) throw SchemaError("pipeline", "expected a non-empty array of stages");
  for (std::size_t i = 0; i < pipe.size(); ++i) {
    const Stage st = parse_stage(pipe[i], at("pipeline", i));
    if (s.has(st)) throw SchemaError(at("pipeline", i), "duplicate stage");
    s.pipeline.push_back(st);
  }
  parse_numerics(config.contains("numerics") ? config.at("numerics") : json::object(), s);

  if (config.contains("udw")) {
    const json& u = config.at("udw");
    allow_keys(u, "udw", {"gap", "total_time", "base", "velocity"});
    if (s.field.dim != 2) throw SchemaError("udw", "the sharp-switching response is D = 2 only");
    UdwConfig c;
    c.gap = number(u, "udw", "gap", std::nullopt, Bound::Positive);
    c.total_time = number(u, "udw", "total_time", std::nullopt, Bound::Positive);
    if (u.contains("base")) c.base = vec(u.at("base"), "udw.base", 2);
    if (u.contains("velocity")) c.velocity = vec(u.at("velocity"), "udw.velocity", 2);
    if (!(c.velocity.t() > std::abs(c.velocity[1]))) throw SchemaError("udw.velocity", "must be future timelike");
    s.udw = c;
  }
  if (config.contains("outputs")) {
    allow_keys(config.at("outputs"), "outputs", {"csv"});
    s.write_csv = boolean(config.at("outputs"), "outputs", "csv", true);
  }

  // Cross-references.
  if ((s.has(Stage::Joint) || s.has(Stage::Diagnostics)) && s.detectors.size() < 2)
    throw SchemaError("pipeline", "joint and diagnostics stages need two detectors");
  if (s.has(Stage::Diagnostics) && !(s.has(Stage::Detect) && s.has(Stage::Joint)))
    throw SchemaError("pipeline", "diagnostics needs the detect and joint stages");
  if (s.has(Stage::Oracle) && !s.lattice) throw SchemaError("pipeline", "the oracle stage needs field.lattice");
  if (s.has(Stage::Wightman) && s.wightman_pairs.empty())
    throw SchemaError("numerics.wightman_pairs", "required by the wightman stage");

  s.source = config;
  s.hash = sha256_hex(canonical_json(config));
  return s;
}

Scenario load_scenario(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("$", "cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw SchemaError("$", std::string("malformed JSON: ") + e.what());
  }
  return parse_scenario(j);
}

std::string canonical_json(const json& j) { return j.dump(); }

std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256: digest failed");
  std::string out;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    out += buf;
  }
  return out;
}

const std::string& scenario_schema() {
  static const std::string schema = R"({
  "$schema": "https://json-schema.org/draft/2020-12/schema",
  "title": "qtp scenario",
  "type": "object",
  "required": ["schema_version", "field", "state", "detectors", "pipeline"],
  "additionalProperties": false,
  "$defs": {
    "vector": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 4},
    "complex": {"oneOf": [{"type": "number"}, {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}]},
    "packet": {
      "type": "object",
      "additionalProperties": false,
      "properties": {
        "center": {"type": "array", "items": {"type": "number"}, "description": "central momentum, D - 1 components"},
        "width": {"type": "number", "exclusiveMinimum": 0},
        "points": {"type": "integer", "minimum": 8, "maximum": 4096, "default": 128},
        "span_widths": {"type": "number", "exclusiveMinimum": 0, "default": 10},
        "scale": {"$ref": "#/$defs/complex", "description": "multiplies the normalized profile"},
        "amplitudes": {"type": "array", "items": {"$ref": "#/$defs/complex"}, "description": "Fock amplitudes, one per lattice mode"}
      }
    },
    "detector": {
      "type": "object",
      "required": ["gap", "sigma_e", "sigma_p", "coupling", "sampling", "window"],
      "additionalProperties": false,
      "properties": {
        "gap": {"type": "number", "exclusiveMinimum": 0},
        "sigma_e": {"type": "number", "exclusiveMinimum": 0},
        "sigma_p": {"type": "number", "exclusiveMinimum": 0},
        "coupling": {"type": "number", "exclusiveMinimum": 0},
        "ref_point": {"$ref": "#/$defs/vector"},
        "hard_step": {"type": "boolean", "default": false},
        "pointer": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 9, "description": "increasing bin edges"},
        "sampling": {
          "type": "object",
          "required": ["delta_t", "delta_x"],
          "additionalProperties": false,
          "properties": {
            "delta_t": {"type": "number", "exclusiveMinimum": 0},
            "delta_x": {"type": "number", "exclusiveMinimum": 0},
            "center": {"$ref": "#/$defs/vector"}
          }
        },
        "window": {
          "type": "object",
          "required": ["lower", "upper", "points"],
          "additionalProperties": false,
          "properties": {
            "lower": {"$ref": "#/$defs/vector"},
            "upper": {"$ref": "#/$defs/vector"},
            "points": {"type": "array", "items": {"type": "integer", "minimum": 1, "maximum": 4096}}
          }
        }
      }
    }
  },
  "properties": {
    "schema_version": {"const": 1},
    "name": {"type": "string"},
    "field": {
      "type": "object",
      "required": ["dim"],
      "additionalProperties": false,
      "properties": {
        "dim": {"enum": [2, 4]},
        "mass": {"type": "number", "minimum": 0, "default": 1},
        "epsilon": {"type": "number", "exclusiveMinimum": 0, "default": 1e-4},
        "lattice": {
          "type": "object",
          "required": ["mode_numbers", "box_length"],
          "additionalProperties": false,
          "properties": {
            "mode_numbers": {"type": "array", "items": {"type": "integer"}, "minItems": 1},
            "box_length": {"type": "number", "exclusiveMinimum": 0},
            "cutoff": {"type": "integer", "minimum": 1, "maximum": 12, "default": 3}
          }
        }
      }
    },
    "state": {
      "type": "object",
      "required": ["kind"],
      "additionalProperties": false,
      "properties": {
        "kind": {"enum": ["vacuum", "particles", "coherent"]},
        "packets": {"type": "array", "items": {"$ref": "#/$defs/packet"}, "minItems": 1, "maxItems": 4}
      }
    },
    "detectors": {"type": "array", "items": {"$ref": "#/$defs/detector"}, "minItems": 1, "maxItems": 3},
    "pipeline": {
      "type": "array",
      "minItems": 1,
      "uniqueItems": true,
      "items": {"enum": ["wightman", "detect", "joint", "diagnostics", "oracle", "limits"]}
    },
    "numerics": {
      "type": "object",
      "additionalProperties": false,
      "properties": {
        "threads": {"type": "integer", "minimum": 1, "default": 1},
        "route": {"enum": ["spectral", "wigner", "direct"], "default": "spectral"},
        "kernel_form": {"enum": ["sampling_independent", "exact_sampled", "smeared", "sampled_probability"], "default": "sampling_independent"},
        "residue_tolerance": {"type": "number", "exclusiveMinimum": 0, "default": 1e-8},
        "vacuum_points": {"type": "integer", "minimum": 9, "default": 257},
        "vacuum_extent": {"type": "number", "exclusiveMinimum": 0, "default": 10},
        "max_pairs": {"type": "integer", "minimum": 1, "maximum": 8, "default": 5},
        "relative_points": {"type": "integer", "minimum": 8, "default": 64},
        "relative_extent": {"type": "number", "exclusiveMinimum": 0, "default": 12},
        "kolmogorov_threshold": {"type": "number", "exclusiveMinimum": 0, "default": 1e-10},
        "oracle_tolerance": {"type": "number", "exclusiveMinimum": 0, "default": 1e-4},
        "wightman_pairs": {"type": "array", "items": {"type": "array", "items": {"$ref": "#/$defs/vector"}, "minItems": 2, "maxItems": 2}}
      }
    },
    "udw": {
      "type": "object",
      "required": ["gap", "total_time"],
      "additionalProperties": false,
      "properties": {
        "gap": {"type": "number", "exclusiveMinimum": 0},
        "total_time": {"type": "number", "exclusiveMinimum": 0},
        "base": {"$ref": "#/$defs/vector"},
        "velocity": {"$ref": "#/$defs/vector"}
      }
    },
    "outputs": {
      "type": "object",
      "additionalProperties": false,
      "properties": {"csv": {"type": "boolean", "default": true}}
    }
  }
}
)";
  return schema;
}

// ---------------------------------------------------------------------------
// Output writers
// ---------------------------------------------------------------------------

void write_grid(const fs::path& bin, const std::vector<double>& values) {
  std::ofstream out(bin, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + bin.string());
  for (double v : values) {
    std::uint64_t u = std::bit_cast<std::uint64_t>(v);
    if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap64(u);
    out.write(reinterpret_cast<const char*>(&u), sizeof u);
  }
}

std::vector<double> read_grid(const fs::path& bin) {
  std::ifstream in(bin, std::ios::binary);
  if (!in) throw InvalidInput("cannot read " + bin.string());
  std::vector<double> out;
  std::uint64_t u;
  while (in.read(reinterpret_cast<char*>(&u), sizeof u)) {
    if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap64(u);
    out.push_back(std::bit_cast<double>(u));
  }
  return out;
}

namespace {

const char* axis_name(int k) {
  static const char* names[] = {"t", "x", "y", "z"};
  return names[k];
}

json window_axes(const Window& w, std::size_t bins, const std::vector<double>& edges, const std::string& prefix) {
  json axes = json::array();
  json b = {{"name", prefix + "bin"}, {"n", bins}};
  if (!edges.empty()) b["edges"] = edges;
  axes.push_back(b);
  const auto ax = w.axes();
  for (std::size_t k = 0; k < ax.size(); ++k)
    axes.push_back({{"name", prefix + axis_name(static_cast<int>(k))}, {"lo", ax[k].lo}, {"step", ax[k].step},
                    {"n", ax[k].n}, {"unit", "natural"}});
  return axes;
}

class RunWriter {
 public:
  RunWriter(fs::path dir, std::string hash) : dir_(std::move(dir)), hash_(std::move(hash)) {
    fs::create_directories(dir_);
  }

  void text(const std::string& name, const std::string& content) {
    std::ofstream out(dir_ / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (dir_ / name).string());
    out << content;
    out.close();
    record(name);
  }
  void json_file(const std::string& name, const json& j) { text(name, j.dump(2) + "\n"); }

  void grid(const std::string& name, const std::vector<double>& values, json axes, const std::string& quantity,
            int order, Normalization norm) {
    write_grid(dir_ / (name + ".bin"), values);
    record(name + ".bin");
    std::vector<std::size_t> shape;
    for (const auto& a : axes) shape.push_back(a.at("n").get<std::size_t>());
    json side = {{"format", "qtp-grid"},
                 {"format_version", 1},
                 {"dtype", "float64"},
                 {"byte_order", "little"},
                 {"layout", "row-major"},
                 {"shape", shape},
                 {"axes", std::move(axes)},
                 {"quantity", quantity},
                 {"coupling_order", order},
                 {"normalization", norm == Normalization::Raw ? "raw" : "conditioned"},
                 {"scenario_hash", hash_}};
    json_file(name + ".json", side);
  }

  json manifest_files() const { return files_; }

 private:
  void record(const std::string& name) {
    std::ifstream in(dir_ / name, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string data = ss.str();
    files_.push_back({{"path", name}, {"sha256", sha256_hex(data)}, {"bytes", data.size()}});
  }

  fs::path dir_;
  std::string hash_;
  json files_ = json::array();
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string grid_csv(const ProbabilityGrid& g) {
  const Window& w = g.windows[0];
  std::string out = "bin";
  for (int k = 0; k < w.dim(); ++k) out += std::string(",") + axis_name(k) + " [natural]";
  out += ",P [natural]\n";
  const std::size_t np = w.size();
  for (std::size_t i = 0; i < g.values.size(); ++i) {
    const FourVector x = w.point(i % np);
    out += std::to_string(i / np);
    for (int k = 0; k < w.dim(); ++k) out += "," + fmt(x[k]);
    out += "," + fmt(g.values[i]) + "\n";
  }
  return out;
}

bool is_slice(const Window& w) {
  int sampled = 0;
  for (auto p : w.points) sampled += p > 1;
  return sampled <= 2;
}

json complex_json(cplx v) { return json::array({v.real(), v.imag()}); }

}  // namespace

json run_scenario(const Scenario& s, const RunOptions& opt) {
  RunWriter out(opt.out_dir, s.hash);
  DensityOptions dopt = s.density;
  if (opt.threads > 0) dopt.threads = opt.threads;
  json stages = json::array();
  std::vector<std::string> failures;
  std::vector<ProbabilityGrid> level1;
  std::optional<ProbabilityGrid> level2;
  json summary = json::object();

  auto timed = [&](const char* name, auto&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    stages.push_back({{"stage", name}, {"seconds", sec}});
  };

  for (Stage st : s.pipeline) {
    switch (st) {
      case Stage::Wightman:
        timed("wightman", [&] {
          json rows = json::array();
          for (const auto& [x, xp] : s.wightman_pairs) {
            std::vector<double> a(x.dim()), b(xp.dim());
            for (int k = 0; k < x.dim(); ++k) {
              a[k] = x[k];
              b[k] = xp[k];
            }
            rows.push_back({{"x", a}, {"xp", b}, {"value", complex_json(state_two_point(s.state, s.field, x, xp))}});
          }
          out.json_file("wightman.json", {{"scenario_hash", s.hash}, {"two_point", rows}});
        });
        break;
      case Stage::Detect:
        timed("detect", [&] {
          json dets = json::array();
          for (std::size_t i = 0; i < s.detectors.size(); ++i) {
            const auto& d = s.detectors[i];
            ProbabilityGrid g = density_grid(s.field, d.model, s.state, d.window, dopt, s.kernel_form);
            const double clip = g.negative_mass();
            const std::string name = "detector" + std::to_string(i);
            out.grid(name, g.values, window_axes(d.window, g.bins[0], d.model.pointer.bin_edges, ""), "P", g.order,
                     g.normalization);
            if (s.write_csv && is_slice(d.window)) out.text(name + ".csv", grid_csv(g));
            json entry = {{"detector", i}, {"max_residue", g.max_residue}, {"clip_mass", clip}, {"coupling_order", g.order}};
            const bool full = std::all_of(d.window.points.begin(), d.window.points.end(), [](auto n) { return n > 1; });
            if (s.kernel_form == KernelForm::SampledProbability) {
              entry["peak_probability"] = g.peak();
            } else if (!full) {
              entry["slice_integral"] = g.total();
            } else {
              const auto sum = detection_summary(g);
              entry["p_det"] = sum.p_det;
              entry["p_empty"] = sum.p_empty;
            }
            dets.push_back(entry);
            level1.push_back(std::move(g));
          }
          summary["detectors"] = dets;
        });
        break;
      case Stage::Joint:
        timed("joint", [&] {
          const DetectorModel dets[2] = {s.detectors[0].model, s.detectors[1].model};
          const Window ws[2] = {s.detectors[0].window, s.detectors[1].window};
          ProbabilityGrid g = joint_grid(s.field, dets, s.state, ws, dopt);
          json axes = window_axes(ws[0], g.bins[0], dets[0].pointer.bin_edges, "1.");
          for (const auto& a : window_axes(ws[1], g.bins[1], dets[1].pointer.bin_edges, "2.")) axes.push_back(a);
          out.grid("joint", g.values, axes, "P2", g.order, g.normalization);
          summary["joint"] = {{"total", g.total()}, {"max_residue", g.max_residue}, {"clip_mass", g.negative_mass()},
                              {"coupling_order", g.order}};
          level2 = std::move(g);
        });
        break;
      case Stage::Diagnostics:
        timed("diagnostics", [&] {
          const Hierarchy raw = build_hierarchy({level1[0], level1[1]}, level2);
          const Hierarchy h = conditioned(raw);
          const auto r = diagnose(h, s.detectors[0].model.pointer, s.kolmogorov_threshold, s.hash);
          const auto defect = kolmogorov_defect(h);
          json windows = json::array();
          for (const auto& w : r.windows) {
            std::vector<double> lo(w.dim()), hi(w.dim());
            for (int k = 0; k < w.dim(); ++k) {
              lo[k] = w.lower[k];
              hi[k] = w.upper[k];
            }
            windows.push_back({{"lower", lo}, {"upper", hi}, {"points", w.points}});
          }
          json rep = {{"S_Q", r.s_q},
                      {"S_C", r.s_c},
                      {"kolmogorov_ok", r.kolmogorov_ok},
                      {"threshold", r.threshold},
                      {"scenario_hash", r.scenario_hash},
                      {"convention", r.convention},
                      {"windows", windows},
                      {"defect_field", defect.field},
                      {"raw_min_subtraction", raw.min_subtraction}};
          rep["S_B"] = r.s_b ? json(*r.s_b) : json(nullptr);
          rep["S_C_level1"] = r.s_c_level1 ? json(*r.s_c_level1) : json(nullptr);
          out.json_file("diagnostics.json", rep);
        });
        break;
      case Stage::Oracle:
        timed("oracle", [&] {
          json dets = json::array();
          GoldenTable golden_values, model_values;
          for (std::size_t i = 0; i < s.detectors.size(); ++i) {
            const auto& d = s.detectors[i];
            if (s.field.dim != 2) throw InvalidInput("oracle stage: D = 2 only");
            const std::size_t np = d.window.size(), n = d.model.pointer.bins() * np;
            std::vector<double> model(n), oracle(n);
            parallel_for(n, dopt.threads, [&](std::size_t e) {
              const FourVector x = d.window.point(e % np);
              model[e] = sampled_probability(s.field, d.model, s.state, x, e / np, dopt);
              oracle[e] = oracle_detection_probability(*s.lattice, d.model, s.state, x, e / np);
            });
            double peak = 0.0, dev = 0.0;
            for (std::size_t e = 0; e < n; ++e) {
              peak = std::max(peak, std::abs(oracle[e]));
              dev = std::max(dev, std::abs(model[e] - oracle[e]));
            }
            const double rel = peak > 0.0 ? dev / peak : dev;
            const double tol = s.oracle_tolerance * opt.tolerance_scale;
            if (!(rel <= tol)) failures.push_back("oracle: detector " + std::to_string(i) + " deviation " + fmt(rel));
            const std::string key = s.hash + "/detector" + std::to_string(i);
            golden_values[key] = std::vector<cplx>(oracle.begin(), oracle.end());
            model_values[key] = std::vector<cplx>(model.begin(), model.end());
            json entry = {{"detector", i}, {"model", model}, {"oracle", oracle}, {"max_relative_deviation", rel},
                          {"tolerance", tol}, {"pass", rel <= tol}};
            dets.push_back(entry);
          }
          json rep = {{"scenario_hash", s.hash}, {"detectors", dets}};
          if (opt.golden_dir) {
            const fs::path gp = *opt.golden_dir / (s.hash + ".json");
            if (fs::exists(gp) && !opt.update_golden) {
              const GoldenTable stored = read_golden(gp.string());
              double worst = 0.0;
              for (const auto& [key, vals] : model_values) {
                const auto it = stored.find(key);
                if (it == stored.end() || it->second.size() != vals.size())
                  throw InvalidInput("golden file " + gp.string() + " does not match the scenario");
                double peak = 0.0, dev = 0.0;
                for (std::size_t e = 0; e < vals.size(); ++e) {
                  peak = std::max(peak, std::abs(it->second[e]));
                  dev = std::max(dev, std::abs(vals[e] - it->second[e]));
                }
                worst = std::max(worst, peak > 0.0 ? dev / peak : dev);
              }
              const double tol = s.oracle_tolerance * opt.tolerance_scale;
              rep["golden"] = {{"path", gp.string()}, {"max_relative_deviation", worst}, {"pass", worst <= tol}};
              if (!(worst <= tol)) failures.push_back("oracle: golden deviation " + fmt(worst));
            } else if (opt.update_golden) {
              fs::create_directories(*opt.golden_dir);
              write_golden(gp.string(), golden_values);
              rep["golden"] = {{"path", gp.string()}, {"written", true}};
            } else {
              rep["golden"] = {{"path", gp.string()}, {"missing", true}};
            }
          }
          out.json_file("oracle.json", rep);
        });
        break;
      case Stage::Limits:
        timed("limits", [&] {
          json rep = {{"scenario_hash", s.hash}};
          for (std::size_t i = 0; i < s.detectors.size(); ++i) {
            const auto& w = s.detectors[i].window;
            std::vector<double> g(w.size());
            parallel_for(w.size(), dopt.threads, [&](std::size_t e) { g[e] = glauber_density(s.state, w.point(e)); });
            out.grid("glauber" + std::to_string(i), g, window_axes(w, 1, {}, ""), "glauber", 0, Normalization::Raw);
          }
          if (s.udw) {
            const Worldline line(s.udw->base, s.udw->velocity);
            rep["udw_response"] = udw_response(s.field, s.state, line, s.udw->gap, s.udw->total_time);
          }
          out.json_file("limits.json", rep);
        });
        break;
    }
  }
  if (!summary.empty()) {
    summary["scenario_hash"] = s.hash;
    out.json_file("summary.json", summary);
  }
  json manifest = {{"scenario", s.name},
                   {"scenario_hash", s.hash},
                   {"schema_version", kSchemaVersion},
                   {"qtp_version", "1.0.0"},
                   {"stages", stages},
                   {"failures", failures},
                   {"files", out.manifest_files()}};
  {
    std::ofstream mf(opt.out_dir / "manifest.json");
    mf << manifest.dump(2) << "\n";
  }
  if (!failures.empty()) throw ToleranceFailure(failures.front());
  return manifest;
}

std::vector<GridComparison> compare_runs(const fs::path& a, const fs::path& b, double tolerance) {
  if (!fs::is_directory(a) || !fs::is_directory(b)) throw InvalidInput("compare: run directories required");
  std::vector<fs::path> bins;
  for (const auto& e : fs::directory_iterator(a))
    if (e.path().extension() == ".bin") bins.push_back(e.path().filename());
  std::sort(bins.begin(), bins.end());
  if (bins.empty()) throw InvalidInput("compare: no grids in " + a.string());
  auto shape = [](const fs::path& sidecar) {
    std::ifstream in(sidecar);
    if (!in) throw InvalidInput("compare: missing sidecar " + sidecar.string());
    return json::parse(in).at("shape");
  };
  std::vector<GridComparison> out;
  for (const auto& name : bins) {
    const fs::path side = fs::path(name).replace_extension(".json");
    if (!fs::exists(b / name)) throw InvalidInput("compare: " + name.string() + " missing in " + b.string());
    if (shape(a / side) != shape(b / side)) throw InvalidInput("compare: shape mismatch for " + name.string());
    const auto va = read_grid(a / name), vb = read_grid(b / name);
    if (va.size() != vb.size()) throw InvalidInput("compare: size mismatch for " + name.string());
    double peak = 0.0, dev = 0.0;
    for (std::size_t i = 0; i < va.size(); ++i) {
      peak = std::max(peak, std::abs(vb[i]));
      dev = std::max(dev, std::abs(va[i] - vb[i]));
    }
    GridComparison c;
    c.name = fs::path(name).stem().string();
    c.max_relative_deviation = peak > 0.0 ? dev / peak : dev;
    c.pass = c.max_relative_deviation <= tolerance;
    out.push_back(c);
  }
  return out;
}

}  // namespace qtp
