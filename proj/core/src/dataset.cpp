#include "meshgnn/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "meshgnn/error.hpp"
#include "meshgnn/rng.hpp"

namespace meshgnn {

using nlohmann::json;

namespace {

enum Stream : std::uint64_t {
  kGeometry = 1,
  kJitterPick = 2,
  kJitter = 3,
  kBoundary = 4,
  kSplit = 5,
  kOod = 6,
};

json vec(const Vec2& v) { return json::array({v.x(), v.y()}); }

Vec2 vec(const json& j) {
  if (!j.is_array() || j.size() != 2) throw ConfigError("expected a 2-vector");
  return {j[0].get<double>(), j[1].get<double>()};
}

std::string sample_name(int geom, int variant) {
  return "g" + std::to_string(geom) + "-b" + std::to_string(variant);
}

int variant_of(const std::string& id) {
  const auto pos = id.rfind("-b");
  if (pos == std::string::npos) return 0;
  return std::stoi(id.substr(pos + 2));
}

// Runs body(i) for i in [0, n) on `jobs` threads. Each index writes its own
// slot, so the result does not depend on scheduling.
template <typename Body>
void parallel_for(int n, int jobs, Body body) {
  jobs = std::clamp(jobs, 1, std::max(1, n));
  if (jobs == 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < jobs; ++w)
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) body(i);
    });
  for (auto& t : pool) t.join();
}

}  // namespace

json to_json(const SampleRecord& r) {
  json nodes = json::array(), tris = json::array(), bc = json::array(), disp = json::array(),
       stress = json::array();
  for (const Vec2& p : r.mesh.nodes) nodes.push_back(vec(p));
  for (const Triangle& t : r.mesh.triangles) tris.push_back({t.v[0], t.v[1], t.v[2]});
  for (const NodeBc& b : r.bcs.node_bc)
    bc.push_back({{"kind", to_string(b.kind)}, {"vector", vec(b.vector)}, {"magnitude", b.magnitude}});
  for (const Vec2& u : r.solution.displacement) disp.push_back(vec(u));
  for (const Stress& s : r.solution.stress) stress.push_back({s[0], s[1], s[2]});
  json body = nullptr;
  if (r.bcs.body_force)
    body = {{"center", vec(r.bcs.body_force->center)},
            {"radius", r.bcs.body_force->radius},
            {"density", vec(r.bcs.body_force->density)}};
  const Mat2& R = r.transform.rotation;
  return {
      {"sample_id", r.sample_id},
      {"geom_id", r.geom_id},
      {"seed", r.seed},
      {"nodes", std::move(nodes)},
      {"triangles", std::move(tris)},
      {"boundary", r.mesh.boundary_nodes},
      {"bc", std::move(bc)},
      {"body_force", std::move(body)},
      {"material", {{"E", r.material.youngs_modulus}, {"nu", r.material.poisson_ratio}}},
      {"displacement", std::move(disp)},
      {"stress", std::move(stress)},
      {"transform", {{"t", vec(r.transform.translation)}, {"R", {{R(0, 0), R(0, 1)}, {R(1, 0), R(1, 1)}}}}},
  };
}

SampleRecord record_from_json(const json& j) {
  static const std::set<std::string> fields{"sample_id", "geom_id",  "seed",         "nodes",
                                            "triangles", "boundary", "bc",           "body_force",
                                            "material",  "stress",   "displacement", "transform"};
  for (const auto& [key, _] : j.items())
    if (!fields.count(key)) throw ConfigError("unknown record field '" + key + "'");
  for (const auto& f : fields)
    if (!j.contains(f)) throw ConfigError("record is missing field '" + f + "'");

  SampleRecord r;
  r.sample_id = j.at("sample_id").get<std::string>();
  r.geom_id = j.at("geom_id").get<int>();
  r.variant = variant_of(r.sample_id);
  r.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& p : j.at("nodes")) r.mesh.nodes.push_back(vec(p));
  for (const auto& t : j.at("triangles")) r.mesh.triangles.push_back({{t.at(0), t.at(1), t.at(2)}});
  r.mesh.boundary_nodes = j.at("boundary").get<std::vector<int>>();
  for (const auto& b : j.at("bc"))
    r.bcs.node_bc.push_back(
        {bc_kind_from_string(b.at("kind").get<std::string>()), vec(b.at("vector")), b.at("magnitude").get<double>()});
  if (const json& body = j.at("body_force"); !body.is_null())
    r.bcs.body_force = BodyForce{vec(body.at("center")), body.at("radius").get<double>(), vec(body.at("density"))};
  r.material.youngs_modulus = j.at("material").at("E").get<double>();
  r.material.poisson_ratio = j.at("material").at("nu").get<double>();
  for (const auto& u : j.at("displacement")) r.solution.displacement.push_back(vec(u));
  for (const auto& s : j.at("stress")) r.solution.stress.push_back(Stress(s.at(0), s.at(1), s.at(2)));
  const json& tf = j.at("transform");
  r.transform.translation = vec(tf.at("t"));
  const json& R = tf.at("R");
  r.transform.rotation << R.at(0).at(0).get<double>(), R.at(0).at(1).get<double>(), R.at(1).at(0).get<double>(),
      R.at(1).at(1).get<double>();

  // Derive the characteristic length from the mean boundary edge.
  const auto& b = r.mesh.boundary_nodes;
  double perimeter = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i)
    perimeter += (r.mesh.nodes[b[(i + 1) % b.size()]] - r.mesh.nodes[b[i]]).norm();
  r.mesh.char_length = b.empty() ? 0.0 : perimeter / static_cast<double>(b.size());

  const std::size_t n = r.mesh.nodes.size();
  if (r.bcs.node_bc.size() != n || r.solution.displacement.size() != n || r.solution.stress.size() != n)
    throw ConfigError("record " + r.sample_id + " has inconsistent per-node array lengths");
  return r;
}

void write_jsonl(std::ostream& out, const std::vector<SampleRecord>& records) {
  for (const SampleRecord& r : records) out << to_json(r).dump() << '\n';
}

void write_jsonl(const std::string& path, const std::vector<SampleRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  write_jsonl(out, records);
  if (!out) throw ConfigError("failed writing " + path);
}

std::vector<SampleRecord> read_jsonl(std::istream& in) {
  std::vector<SampleRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      records.push_back(record_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

std::vector<SampleRecord> read_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path);
  return read_jsonl(in);
}

ClosedCurve regenerate_curve(const GenConfig& config, int geom_id) {
  return gen_geometry(mix_seed(config.seed, kGeometry, geom_id), config.n_ctrl, config.radius);
}

std::array<std::vector<int>, 3> partition_geometries(std::vector<int> ids, std::uint64_t seed) {
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  Rng rng(mix_seed(seed, kSplit));
  for (std::size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[rng.index(i)]);
  const auto g = static_cast<double>(ids.size());
  const auto n_train = static_cast<std::size_t>(std::lround(0.7 * g));
  const auto n_val = std::min(ids.size() - n_train, static_cast<std::size_t>(std::lround(0.1 * g)));
  std::array<std::vector<int>, 3> parts;
  parts[0].assign(ids.begin(), ids.begin() + n_train);
  parts[1].assign(ids.begin() + n_train, ids.begin() + n_train + n_val);
  parts[2].assign(ids.begin() + n_train + n_val, ids.end());
  for (auto& p : parts) std::sort(p.begin(), p.end());
  return parts;
}

Split split(const std::vector<SampleRecord>& records, std::uint64_t seed) {
  std::vector<int> ids;
  for (const SampleRecord& r : records) ids.push_back(r.geom_id);
  const auto parts = partition_geometries(ids, seed);
  Split s;
  for (int i = 0; i < static_cast<int>(records.size()); ++i) {
    const int g = records[i].geom_id;
    if (std::binary_search(parts[0].begin(), parts[0].end(), g)) s.train.push_back(i);
    else if (std::binary_search(parts[1].begin(), parts[1].end(), g)) s.val.push_back(i);
    else s.test.push_back(i);
  }
  return s;
}

namespace {

struct Outcome {
  std::optional<SampleRecord> record;
  std::string failure;
};

Outcome solve_record(SampleRecord r, const Material& material) {
  Outcome out;
  try {
    r.material = material;
    r.solution = solve_sample(r.mesh, material, r.bcs);
    r.transform = to_simulation_coords(r.mesh.nodes).transform;
    out.record = std::move(r);
  } catch (const Error& e) {
    out.failure = r.sample_id + ": " + e.what();
  }
  return out;
}

void collect(std::vector<Outcome>& outcomes, std::vector<SampleRecord>& records, GenSummary* summary) {
  for (Outcome& o : outcomes) {
    if (o.record) {
      records.push_back(std::move(*o.record));
      if (summary) ++summary->written;
    } else {
      spdlog::warn("skipped {}", o.failure);
      if (summary) {
        ++summary->failed;
        summary->failures.push_back(std::move(o.failure));
      }
    }
  }
}

}  // namespace

std::vector<SampleRecord> generate_dataset(const GenConfig& c, GenSummary* summary) {
  if (c.n_geoms < 1) throw ConfigError("n_geoms must be >= 1");
  if (c.bcs_per_geom < 1) throw ConfigError("bcs per geometry must be >= 1");
  if (!(c.h > 0.0)) throw ConfigError("h must be positive");
  c.material.validate();

  std::vector<std::optional<Mesh>> meshes(c.n_geoms);
  std::vector<std::string> mesh_failure(c.n_geoms);
  parallel_for(c.n_geoms, c.jobs, [&](int g) {
    try {
      meshes[g] = triangulate(regenerate_curve(c, g), c.h);
    } catch (const Error& e) {
      mesh_failure[g] = e.what();
    }
  });

  std::vector<int> meshed;
  for (int g = 0; g < c.n_geoms; ++g)
    if (meshes[g]) meshed.push_back(g);
  const std::vector<int> train = partition_geometries(meshed, c.seed)[0];

  std::vector<Outcome> outcomes(static_cast<std::size_t>(c.n_geoms) * c.bcs_per_geom);
  parallel_for(c.n_geoms, c.jobs, [&](int g) {
    if (!meshes[g]) {
      for (int b = 0; b < c.bcs_per_geom; ++b)
        outcomes[g * c.bcs_per_geom + b].failure = sample_name(g, b) + ": " + mesh_failure[g];
      return;
    }
    Mesh mesh = *meshes[g];
    Rng pick(mix_seed(c.seed, kJitterPick, g));
    if (std::binary_search(train.begin(), train.end(), g) && pick.bernoulli(c.jitter_fraction))
      mesh = jitter_nodes(mesh, c.jitter_sigma, mix_seed(c.seed, kJitter, g));
    for (int b = 0; b < c.bcs_per_geom; ++b) {
      SampleRecord r;
      r.sample_id = sample_name(g, b);
      r.geom_id = g;
      r.variant = b;
      r.seed = c.seed;
      r.mesh = mesh;
      Outcome& o = outcomes[g * c.bcs_per_geom + b];
      try {
        r.bcs = assign_bcs(mesh, mix_seed(mix_seed(c.seed, kBoundary, g), b), c.bc_sampling);
      } catch (const Error& e) {
        o.failure = r.sample_id + ": " + e.what();
        continue;
      }
      o = solve_record(std::move(r), c.material);
    }
  });

  std::vector<SampleRecord> records;
  GenSummary local;
  collect(outcomes, records, summary ? summary : &local);
  return records;
}

bool failure_budget_exceeded(const GenConfig& config, const GenSummary& summary) {
  const int total = summary.written + summary.failed;
  return summary.written == 0 || summary.failed > config.max_failure_fraction * total;
}

OodVariant ood_variant_from_string(const std::string& s) {
  if (s == "scale-half" || s == "scale_half") return OodVariant::scale_half;
  if (s == "scale-double" || s == "scale_double") return OodVariant::scale_double;
  if (s == "bc" || s == "disconnected-bc" || s == "disconnected_bc") return OodVariant::disconnected_bc;
  if (s == "rot-translate" || s == "rot_translate") return OodVariant::rot_translate;
  throw ConfigError("unknown OOD variant '" + s + "' (expected scale-half, scale-double, disconnected-bc or rot-translate)");
}

const char* to_string(OodVariant v) {
  switch (v) {
    case OodVariant::scale_half: return "scale-half";
    case OodVariant::scale_double: return "scale-double";
    case OodVariant::disconnected_bc: return "disconnected-bc";
    case OodVariant::rot_translate: return "rot-translate";
  }
  return "?";
}

SampleRecord rigid_motion(const SampleRecord& in, const Mat2& Q, const Vec2& b) {
  SampleRecord r = in;
  for (Vec2& p : r.mesh.nodes) p = Q * p + b;
  for (NodeBc& bc : r.bcs.node_bc) bc.vector = Q * bc.vector;
  if (r.bcs.body_force) {
    r.bcs.body_force->center = Q * r.bcs.body_force->center + b;
    r.bcs.body_force->density = Q * r.bcs.body_force->density;
  }
  const FrameTransform motion{Vec2::Zero(), Q};
  for (Vec2& u : r.solution.displacement) u = Q * u;
  for (Stress& s : r.solution.stress) s = map_stress_back(motion, s);
  r.transform = to_simulation_coords(r.mesh.nodes).transform;
  return r;
}

std::vector<SampleRecord> make_ood(const std::vector<SampleRecord>& records, OodVariant variant,
                                   const GenConfig& base, std::uint64_t seed, GenSummary* summary) {
  std::vector<Outcome> outcomes(records.size());
  parallel_for(static_cast<int>(records.size()), base.jobs, [&](int i) {
    const SampleRecord& src = records[i];
    Outcome& o = outcomes[i];
    const std::uint64_t s = mix_seed(mix_seed(seed, kOod, src.geom_id), src.variant);
    try {
      switch (variant) {
        case OodVariant::scale_half:
        case OodVariant::scale_double: {
          const double factor = variant == OodVariant::scale_half ? 0.5 : 2.0;
          GenConfig gc = base;
          gc.seed = src.seed;
          SampleRecord r = src;
          r.mesh = triangulate(scaled(regenerate_curve(gc, src.geom_id), factor), base.h);
          r.bcs = assign_bcs(r.mesh, s, base.bc_sampling);
          o = solve_record(std::move(r), src.material);
          break;
        }
        case OodVariant::disconnected_bc: {
          SampleRecord r = src;
          r.mesh.char_length = base.h;
          BcSampling bs = base.bc_sampling;
          bs.dirichlet_arcs = 2;
          bs.neumann_arcs = 2;
          r.bcs = assign_bcs(r.mesh, s, bs);
          o = solve_record(std::move(r), src.material);
          break;
        }
        case OodVariant::rot_translate: {
          Rng rng(s);
          const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
          Mat2 Q;
          Q << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
          const Vec2 shift(rng.uniform(-10.0, 10.0), rng.uniform(-10.0, 10.0));
          o.record = rigid_motion(src, Q, shift);
          break;
        }
      }
    } catch (const Error& e) {
      o.failure = src.sample_id + ": " + e.what();
    }
  });
  std::vector<SampleRecord> out;
  GenSummary local;
  collect(outcomes, out, summary ? summary : &local);
  return out;
}

}  // namespace meshgnn
