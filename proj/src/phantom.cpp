#include "osseg/phantom.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "osseg/errors.hpp"
#include "osseg/filters.hpp"
#include "osseg/rng.hpp"
#include "osseg/warp.hpp"

namespace osseg {

namespace {

constexpr double kShellInnerRadius = 0.82;  // normalized boundary of the cortex analog
constexpr double kTemplateBlurSigma = 0.8;

// minimum voxels any class may occupy, scaled with the grid
std::int64_t min_class_voxels(const Shape& size) { return std::max<std::int64_t>(8, numel(size) / 1600); }

struct Ellipsoid {
  double center[3];
  double semi[3];

  double norm_radius(const double* pos, int rank) const {
    double r2 = 0.0;
    for (int d = 0; d < rank; ++d) {
      const double t = (pos[d] - center[d]) / semi[d];
      r2 += t * t;
    }
    return std::sqrt(r2);
  }
};

float class_intensity(int cls, int num_classes) {
  switch (cls) {
    case 0: return 0.02f;
    case 1: return 0.45f;
    case 2: return 0.85f;
    case 3: return 0.10f;
    default: {
      const int blobs = std::max(1, num_classes - 5);
      return 0.30f + 0.70f * static_cast<float>(cls - 4) / static_cast<float>(blobs);
    }
  }
}

}  // namespace

void PhantomSpec::validate() const {
  require(spatial_rank == 2 || spatial_rank == 3, "phantom rank must be 2 or 3");
  require(static_cast<int>(size.size()) == spatial_rank, "phantom size rank mismatch");
  for (int d : size) {
    require(d >= 16, "phantom sizes must be >= 16");
    require(d % 8 == 0, "phantom sizes must be divisible by 8 (default network divisor)");
  }
  require(num_structures >= 2 && num_structures <= 28, "num_structures must be in [2, 28]");
  require(deform_amplitude >= 0.0, "deform_amplitude must be >= 0");
  require(deform_smoothness > 0.0, "deform_smoothness must be > 0");
  require(bias_amplitude >= 0.0 && noise_sigma >= 0.0 && intensity_jitter >= 0.0 &&
              texture_amplitude >= 0.0,
          "intensity effect amplitudes must be >= 0");
  require(lesion_rate >= 0.0 && lesion_rate <= 1.0, "lesion_rate must be in [0, 1]");
}

Atlas make_template(const PhantomSpec& spec) {
  spec.validate();
  const int rank = spec.spatial_rank;
  const int C = spec.num_structures;
  const std::int64_t vox = numel(spec.size);
  Rng rng(hash_combine(spec.seed, 0x7465ULL));

  Ellipsoid head{};
  for (int d = 0; d < rank; ++d) {
    head.center[d] = 0.5 * (spec.size[d] - 1);
    head.semi[d] = 0.40 * spec.size[d] * rng.uniform(0.95, 1.05);
  }
  Ellipsoid cavity{};
  if (C >= 4) {
    for (int d = 0; d < rank; ++d) {
      cavity.center[d] = head.center[d] + rng.uniform(-0.04, 0.04) * head.semi[d];
      cavity.semi[d] = 0.10 * spec.size[d] * rng.uniform(0.85, 1.15);
    }
  }
  // many blobs need smaller radii to fit
  const double blob_lo = C - 4 <= 8 ? 0.060 : 0.045;
  const double blob_hi = C - 4 <= 8 ? 0.090 : 0.065;
  std::vector<Ellipsoid> blobs;
  for (int cls = 4; cls < C; ++cls) {
    bool placed = false;
    for (int attempt = 0; attempt < 500 && !placed; ++attempt) {
      Ellipsoid e{};
      // seeded direction at a bounded normalized radius keeps blobs inside the
      // interior and clear of the shell
      double dir[3] = {0, 0, 0}, norm = 0.0;
      for (int d = 0; d < rank; ++d) {
        dir[d] = rng.normal();
        norm += dir[d] * dir[d];
      }
      norm = std::sqrt(std::max(norm, 1e-12));
      const double radius = rng.uniform(0.28, 0.58);
      for (int d = 0; d < rank; ++d) {
        e.center[d] = head.center[d] + radius * dir[d] / norm * head.semi[d];
        e.semi[d] = spec.size[d] * rng.uniform(blob_lo, blob_hi);
      }
      auto too_close = [&](const Ellipsoid& other) {
        double dist = 0.0;
        for (int d = 0; d < rank; ++d) {
          const double t = e.center[d] - other.center[d];
          dist += t * t;
        }
        dist = std::sqrt(dist);
        double mine = 0.0, theirs = 0.0;
        for (int d = 0; d < rank; ++d) {
          mine = std::max(mine, e.semi[d]);
          theirs = std::max(theirs, other.semi[d]);
        }
        return dist < mine + theirs + 1.0;
      };
      bool collides = C >= 4 && too_close(cavity);
      for (const auto& other : blobs) collides |= too_close(other);
      if (!collides) {
        blobs.push_back(e);
        placed = true;
      }
    }
    if (!placed)
      throw GenerationError("cannot place structure " + std::to_string(cls) + " of " +
                            std::to_string(C));
  }

  std::vector<std::int32_t> labels(static_cast<std::size_t>(vox), 0);
  std::vector<std::int64_t> stride(rank, 1);
  for (int d = rank - 2; d >= 0; --d) stride[d] = stride[d + 1] * spec.size[d + 1];

  for (std::int64_t v = 0; v < vox; ++v) {
    double pos[3];
    for (int d = 0; d < rank; ++d) pos[d] = static_cast<double>((v / stride[d]) % spec.size[d]);
    const double r = head.norm_radius(pos, rank);
    if (r > 1.0) continue;
    if (C == 2) {
      labels[v] = 1;
      continue;
    }
    if (r >= kShellInnerRadius) {
      labels[v] = 1;
      continue;
    }
    std::int32_t cls = 2;
    if (C >= 4 && cavity.norm_radius(pos, rank) <= 1.0) cls = 3;
    for (std::size_t b = 0; b < blobs.size(); ++b)
      if (blobs[b].norm_radius(pos, rank) <= 1.0) cls = static_cast<std::int32_t>(4 + b);
    labels[v] = cls;
  }

  std::vector<std::int64_t> histogram(static_cast<std::size_t>(C), 0);
  for (std::int64_t v = 0; v < vox; ++v) ++histogram[static_cast<std::size_t>(labels[v])];
  for (int c = 0; c < C; ++c)
    if (histogram[static_cast<std::size_t>(c)] < min_class_voxels(spec.size))
      throw GenerationError("template class " + std::to_string(c) + " occupies only " +
                            std::to_string(histogram[static_cast<std::size_t>(c)]) + " voxels");

  Volume image(spec.size);
  for (std::int64_t v = 0; v < vox; ++v) image[v] = class_intensity(labels[v], C);

  // smooth intra-tissue texture so similarity losses see dense structure; part
  // of the template, so it deforms coherently into every subject
  if (spec.texture_amplitude > 0.0) {
    Volume texture(spec.size);
    for (std::int64_t v = 0; v < vox; ++v)
      texture[v] = static_cast<float>(rng.normal());
    gaussian_blur_plane(texture.data(), spec.size, 2.5);
    float peak = 0.0f;
    for (std::int64_t v = 0; v < vox; ++v) peak = std::max(peak, std::abs(texture[v]));
    if (peak > 0.0f)
      for (std::int64_t v = 0; v < vox; ++v)
        if (labels[v] != 0)
          image[v] += static_cast<float>(spec.texture_amplitude) * texture[v] / peak;
  }
  gaussian_blur_plane(image.data(), spec.size, kTemplateBlurSigma);

  return Atlas(std::move(image), LabelMap(spec.size, C, std::move(labels)));
}

DisplacementField population_field(const PhantomSpec& spec, Rng& rng) {
  const double amp_scale = rng.uniform(0.5, 1.0);
  const double amplitude = spec.deform_amplitude * amp_scale;
  const int max_extent = *std::max_element(spec.size.begin(), spec.size.end());

  // local elastic variation plus a near-affine global mode, then one shared
  // rescale so the peak stays within the requested amplitude
  DisplacementField local = smooth_random_field(spec.size, 1.0, spec.deform_smoothness, rng);
  DisplacementField global = smooth_random_field(spec.size, 1.0, max_extent / 2.0, rng);
  Tensor combined(local.tensor().shape());
  for (std::int64_t i = 0; i < combined.size(); ++i)
    combined[i] = 0.5f * local.tensor()[i] + 0.5f * global.tensor()[i];

  float peak = 0.0f;
  for (std::int64_t i = 0; i < combined.size(); ++i)
    peak = std::max(peak, std::abs(combined[i]));
  if (peak > 0.0f && amplitude > 0.0) {
    const float scale = static_cast<float>(amplitude) / peak;
    for (std::int64_t i = 0; i < combined.size(); ++i) combined[i] *= scale;
  } else {
    std::fill(combined.values().begin(), combined.values().end(), 0.0f);
  }
  return DisplacementField(std::move(combined));
}

std::pair<Volume, LabelMap> make_subject(const Atlas& tmpl, const PhantomSpec& spec,
                                         std::uint64_t subject_seed) {
  spec.validate();
  require(tmpl.image.shape() == spec.size, "template shape does not match spec");
  const int rank = spec.spatial_rank;
  const std::int64_t vox = numel(spec.size);
  const int C = tmpl.labels.num_classes();
  Rng base(subject_seed);

  // independent sub-streams per effect: disabling one effect leaves the others
  // unchanged
  Rng field_rng = base.fork(1);
  Rng jitter_rng = base.fork(2);
  Rng bias_rng = base.fork(3);
  Rng lesion_rng = base.fork(4);
  Rng noise_rng = base.fork(5);

  Volume image;
  LabelMap labels;
  for (int attempt = 0;; ++attempt) {
    DisplacementField field = population_field(spec, field_rng);
    image = warp_volume(tmpl.image, field);
    labels = warp_labels(tmpl.labels, field);

    // label conservation: the deformation must not extinguish any class
    std::vector<bool> present(static_cast<std::size_t>(C), false);
    for (std::int64_t v = 0; v < vox; ++v) present[static_cast<std::size_t>(labels[v])] = true;
    if (std::all_of(present.begin(), present.end(), [](bool p) { return p; })) break;
    if (attempt >= 3)
      throw GenerationError("deformation repeatedly extinguished a class (subject seed " +
                            std::to_string(subject_seed) + ")");
  }

  std::vector<float> jitter(static_cast<std::size_t>(C));
  for (int c = 0; c < C; ++c)
    jitter[static_cast<std::size_t>(c)] =
        1.0f + static_cast<float>(spec.intensity_jitter * jitter_rng.uniform(-1.0, 1.0));
  for (std::int64_t v = 0; v < vox; ++v)
    image[v] *= jitter[static_cast<std::size_t>(labels[v])];

  if (spec.bias_amplitude > 0.0) {
    Volume plane(spec.size);
    for (std::int64_t v = 0; v < vox; ++v)
      plane[v] = static_cast<float>(bias_rng.normal());
    const int max_size = *std::max_element(spec.size.begin(), spec.size.end());
    gaussian_blur_plane(plane.data(), spec.size, max_size / 4.0);
    float peak = 0.0f;
    for (std::int64_t v = 0; v < vox; ++v) peak = std::max(peak, std::abs(plane[v]));
    if (peak > 0.0f)
      for (std::int64_t v = 0; v < vox; ++v)
        image[v] *= 1.0f + static_cast<float>(spec.bias_amplitude) * plane[v] / peak;
  }

  if (spec.lesion_rate > 0.0 && lesion_rng.uniform() < spec.lesion_rate) {
    // image-only lesion: a smooth intensity blob inside the labeled anatomy;
    // labels stay untouched, which plants a deliberate label-error trap
    std::vector<std::int64_t> foreground;
    foreground.reserve(static_cast<std::size_t>(vox / 4));
    for (std::int64_t v = 0; v < vox; ++v)
      if (labels[v] != 0) foreground.push_back(v);
    if (!foreground.empty()) {
      const std::int64_t center =
          foreground[static_cast<std::size_t>(lesion_rng.uniform_int(
              static_cast<int>(foreground.size())))];
      const int min_size = *std::min_element(spec.size.begin(), spec.size.end());
      const double radius = lesion_rng.uniform(0.05, 0.09) * min_size;
      const double amp =
          (lesion_rng.uniform() < 0.5 ? -1.0 : 1.0) * lesion_rng.uniform(0.25, 0.45);
      std::vector<std::int64_t> stride(rank, 1);
      for (int d = rank - 2; d >= 0; --d) stride[d] = stride[d + 1] * spec.size[d + 1];
      double cpos[3];
      for (int d = 0; d < rank; ++d)
        cpos[d] = static_cast<double>((center / stride[d]) % spec.size[d]);
      const double sigma = radius / 1.5;
      for (std::int64_t v = 0; v < vox; ++v) {
        double r2 = 0.0;
        for (int d = 0; d < rank; ++d) {
          const double t = static_cast<double>((v / stride[d]) % spec.size[d]) - cpos[d];
          r2 += t * t;
        }
        if (r2 < 9.0 * sigma * sigma)
          image[v] += static_cast<float>(amp * std::exp(-0.5 * r2 / (sigma * sigma)));
      }
    }
  }

  if (spec.noise_sigma > 0.0)
    for (std::int64_t v = 0; v < vox; ++v)
      image[v] += static_cast<float>(spec.noise_sigma * noise_rng.normal());

  return {std::move(image), std::move(labels)};
}

namespace {

nlohmann::json spec_to_json(const PhantomSpec& spec) {
  return nlohmann::json{{"spatial_rank", spec.spatial_rank},
                        {"size", spec.size},
                        {"num_structures", spec.num_structures},
                        {"deform_amplitude", spec.deform_amplitude},
                        {"deform_smoothness", spec.deform_smoothness},
                        {"bias_amplitude", spec.bias_amplitude},
                        {"noise_sigma", spec.noise_sigma},
                        {"intensity_jitter", spec.intensity_jitter},
                        {"texture_amplitude", spec.texture_amplitude},
                        {"lesion_rate", spec.lesion_rate},
                        {"seed", spec.seed}};
}

PhantomSpec spec_from_json(const nlohmann::json& j) {
  PhantomSpec spec;
  spec.spatial_rank = j.at("spatial_rank").get<int>();
  spec.size = j.at("size").get<Shape>();
  spec.num_structures = j.at("num_structures").get<int>();
  spec.deform_amplitude = j.at("deform_amplitude").get<double>();
  spec.deform_smoothness = j.at("deform_smoothness").get<double>();
  spec.bias_amplitude = j.at("bias_amplitude").get<double>();
  spec.noise_sigma = j.at("noise_sigma").get<double>();
  spec.intensity_jitter = j.at("intensity_jitter").get<double>();
  spec.texture_amplitude = j.at("texture_amplitude").get<double>();
  spec.lesion_rate = j.at("lesion_rate").get<double>();
  spec.seed = j.at("seed").get<std::uint64_t>();
  return spec;
}

}  // namespace

Cohort make_cohort(const PhantomSpec& spec, int n_unlabeled, int n_heldout) {
  require(n_unlabeled >= 1 && n_heldout >= 1, "cohort counts must be >= 1");
  Cohort cohort;
  cohort.atlas = make_template(spec);

  std::vector<std::uint64_t> unlabeled_seeds, heldout_seeds;
  for (int i = 0; i < n_unlabeled; ++i)
    unlabeled_seeds.push_back(hash_combine(spec.seed, 1000 + static_cast<std::uint64_t>(i)));
  for (int i = 0; i < n_heldout; ++i)
    heldout_seeds.push_back(hash_combine(spec.seed, 2000 + static_cast<std::uint64_t>(i)));

  for (auto s : unlabeled_seeds)
    cohort.unlabeled.push_back(make_subject(cohort.atlas, spec, s).first);
  for (auto s : heldout_seeds) cohort.heldout.push_back(make_subject(cohort.atlas, spec, s));

  nlohmann::json manifest{{"spec", spec_to_json(spec)},
                          {"unlabeled_seeds", unlabeled_seeds},
                          {"heldout_seeds", heldout_seeds}};
  cohort.manifest = manifest.dump(2);
  return cohort;
}

Cohort cohort_from_manifest(const std::string& manifest) {
  nlohmann::json j = nlohmann::json::parse(manifest);
  const PhantomSpec spec = spec_from_json(j.at("spec"));
  Cohort cohort;
  cohort.atlas = make_template(spec);
  for (auto s : j.at("unlabeled_seeds").get<std::vector<std::uint64_t>>())
    cohort.unlabeled.push_back(make_subject(cohort.atlas, spec, s).first);
  for (auto s : j.at("heldout_seeds").get<std::vector<std::uint64_t>>())
    cohort.heldout.push_back(make_subject(cohort.atlas, spec, s));
  cohort.manifest = manifest;
  return cohort;
}

}  // namespace osseg
