#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "meshgnn/fem.hpp"
#include "meshgnn/geomesh.hpp"
#include "meshgnn/simcoords.hpp"

namespace meshgnn {

// One training example. `seed` is the dataset seed; the geometry and boundary
// conditions are derived from (seed, geom_id, variant). sample_id has the form
// "g<geom_id>-b<variant>" and is the only place the variant is stored.
struct SampleRecord {
  std::string sample_id;
  int geom_id = 0;
  int variant = 0;
  std::uint64_t seed = 0;
  Mesh mesh;
  BoundarySpec bcs;
  Material material;
  FemSolution solution;
  FrameTransform transform;
};

nlohmann::json to_json(const SampleRecord& record);
SampleRecord record_from_json(const nlohmann::json& j);

// JSON Lines I/O. Reading throws ConfigError with the offending line number.
void write_jsonl(std::ostream& out, const std::vector<SampleRecord>& records);
void write_jsonl(const std::string& path, const std::vector<SampleRecord>& records);
std::vector<SampleRecord> read_jsonl(std::istream& in);
std::vector<SampleRecord> read_jsonl(const std::string& path);

struct GenConfig {
  int n_geoms = 200;
  int bcs_per_geom = 3;
  double h = 0.1;
  int n_ctrl = 8;
  Interval radius{0.28, 0.52};
  Material material;
  std::uint64_t seed = 1;
  double jitter_sigma = 0.01;
  double jitter_fraction = 0.5;
  BcSampling bc_sampling;
  // Generation fails when more than this fraction of samples is skipped.
  double max_failure_fraction = 0.25;
  int jobs = 1;
};

struct GenSummary {
  int written = 0;
  int failed = 0;
  std::vector<std::string> failures;  // one diagnostic per skipped sample
};

// Meshes every geometry, jitters a fraction of the training geometries, then
// solves each boundary-condition variant. Failed samples are skipped; check
// the summary against the failure budget with failure_budget_exceeded().
std::vector<SampleRecord> generate_dataset(const GenConfig& config, GenSummary* summary = nullptr);
bool failure_budget_exceeded(const GenConfig& config, const GenSummary& summary);

// The curve generate_dataset() draws for `geom_id`.
ClosedCurve regenerate_curve(const GenConfig& config, int geom_id);

struct Split {
  std::vector<int> train, val, test;  // record indices
};

// Geometry ids shuffled by seed and cut 70/10/20 (rounded); all variants of a
// geometry land in the same partition.
Split split(const std::vector<SampleRecord>& records, std::uint64_t seed);
// Partition of a set of geometry ids into train/val/test, each sorted.
std::array<std::vector<int>, 3> partition_geometries(std::vector<int> geom_ids, std::uint64_t seed);

enum class OodVariant { scale_half, scale_double, disconnected_bc, rot_translate };

OodVariant ood_variant_from_string(const std::string& s);
const char* to_string(OodVariant v);

// Out-of-distribution copies of `records`. Scale variants regenerate the
// geometry scaled about its generation centre and remesh at the same h;
// disconnected_bc splits each boundary condition type over two arcs; rot_translate
// applies a random rigid motion to coordinates and every vector quantity.
// Records that fail to solve are skipped and counted in `summary`.
std::vector<SampleRecord> make_ood(const std::vector<SampleRecord>& records, OodVariant variant,
                                   const GenConfig& base, std::uint64_t seed, GenSummary* summary = nullptr);

// Applies a rigid motion x -> Q x + b to a record, rotating all vectors and
// stresses and recomputing the simulation frame.
SampleRecord rigid_motion(const SampleRecord& record, const Mat2& rotation, const Vec2& shift);

}  // namespace meshgnn
