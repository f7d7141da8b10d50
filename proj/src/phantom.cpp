// Copyright 2026 The shape_tta Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "shape_tta/data.hpp"
#include "shape_tta/random.hpp"

namespace shape_tta {
namespace {

// One subject's geometry. Cardiac uses the first seven fields, prostate the
// gland fields.
struct Geometry {
  double lv_u = 0, lv_v = 0, lv_r = 0, myo_t = 0, aa_u = 0, aa_v = 0, aa_r = 0;
  double gland_u = 0, gland_v = 0, gland_a = 0, gland_b = 0;
};

enum class Pick { kSample, kNominal, kLow, kHigh };

double pick(const Jittered& j, Pick mode, Rng& rng) {
  switch (mode) {
    case Pick::kSample: return rng.uniform(j.nominal - j.jitter, j.nominal + j.jitter);
    case Pick::kNominal: return j.nominal;
    case Pick::kLow: return j.nominal - j.jitter;
    case Pick::kHigh: return j.nominal + j.jitter;
  }
  return j.nominal;
}

Geometry make_geometry(const PhantomSpec& spec, Pick mode, Rng& rng) {
  // Sizes follow `mode`; positions stay nominal for the band extremes.
  const Pick position = mode == Pick::kSample ? Pick::kSample : Pick::kNominal;
  Geometry g;
  if (spec.family == PhantomFamily::kCardiac) {
    g.lv_u = pick(spec.lv_center_u, position, rng);
    g.lv_v = pick(spec.lv_center_v, position, rng);
    g.lv_r = pick(spec.lv_radius, mode, rng);
    g.myo_t = pick(spec.myo_thickness, mode, rng);
    g.aa_u = g.lv_u + pick(spec.aa_offset_u, position, rng);
    g.aa_v = g.lv_v + pick(spec.aa_offset_v, position, rng);
    g.aa_r = pick(spec.aa_radius, mode, rng);
  } else {
    g.gland_u = pick(spec.gland_center_u, position, rng);
    g.gland_v = pick(spec.gland_center_v, position, rng);
    g.gland_a = pick(spec.gland_semi_u, mode, rng);
    g.gland_b = pick(spec.gland_semi_v, mode, rng);
  }
  return g;
}

double slice_profile(const PhantomSpec& spec, std::size_t n) {
  if (spec.slices <= 1) return 1.0;
  const double half = 0.5 * static_cast<double>(spec.slices - 1);
  const double z = (static_cast<double>(n) - half) / half;
  return spec.profile_floor + (1.0 - spec.profile_floor) * std::sqrt(std::max(0.0, 1.0 - z * z));
}

bool in_disk(double r, double c, double cu, double cv, double radius) {
  return (r - cu) * (r - cu) + (c - cv) * (c - cv) <= radius * radius;
}

bool in_ellipse(double r, double c, double cu, double cv, double a, double b) {
  const double du = (r - cu) / a;
  const double dv = (c - cv) / b;
  return du * du + dv * dv <= 1.0;
}

// Rasterizes labels; `body` marks pixels inside the body outline.
void rasterize(const PhantomSpec& spec, const Geometry& g, std::vector<std::uint8_t>& labels,
               std::vector<bool>& body) {
  const std::size_t h = spec.height, w = spec.width, plane = h * w;
  labels.assign(spec.slices * plane, 0);
  body.assign(spec.slices * plane, false);
  const double cu = 0.5 * static_cast<double>(h - 1);
  const double cv = 0.5 * static_cast<double>(w - 1);
  const auto aa_slices = static_cast<std::size_t>(
      std::lround(spec.aa_slice_fraction * static_cast<double>(spec.slices)));
  for (std::size_t n = 0; n < spec.slices; ++n) {
    const double f = slice_profile(spec, n);
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < w; ++c) {
        const double ru = static_cast<double>(r), cc = static_cast<double>(c);
        const std::size_t i = n * plane + r * w + c;
        body[i] = in_ellipse(ru, cc, cu, cv, spec.body_semi_u, spec.body_semi_v);
        std::uint8_t k = 0;
        if (spec.family == PhantomFamily::kCardiac) {
          const double lv_r = g.lv_r * f;
          if (in_disk(ru, cc, g.lv_u, g.lv_v, lv_r + g.myo_t)) k = 2;
          if (in_disk(ru, cc, g.lv_u, g.lv_v, lv_r)) k = 1;
          if (n < aa_slices && in_disk(ru, cc, g.aa_u, g.aa_v, g.aa_r)) k = 3;
        } else {
          if (in_ellipse(ru, cc, g.gland_u, g.gland_v, g.gland_a * f, g.gland_b * f)) k = 1;
        }
        labels[i] = k;
      }
    }
  }
}

std::vector<double> label_ratios(const std::vector<std::uint8_t>& labels, std::size_t k) {
  std::vector<double> counts(k, 0.0);
  for (auto l : labels) counts[l] += 1.0;
  for (double& c : counts) c /= static_cast<double>(labels.size());
  return counts;
}

std::vector<double> ratios_for(const PhantomSpec& spec, Pick mode) {
  Rng unused(0);
  const Geometry g = make_geometry(spec, mode, unused);
  std::vector<std::uint8_t> labels;
  std::vector<bool> body;
  rasterize(spec, g, labels, body);
  return label_ratios(labels, spec.num_classes());
}

std::string subject_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "subject_%03zu", i);
  return buf;
}

}  // namespace

const char* to_string(Domain d) { return d == Domain::kSource ? "source" : "target"; }

Domain parse_domain(const std::string& s) {
  if (s == "source") return Domain::kSource;
  if (s == "target") return Domain::kTarget;
  throw std::invalid_argument("unknown domain '" + s + "' (expected source or target)");
}

const char* to_string(PhantomFamily f) {
  return f == PhantomFamily::kCardiac ? "cardiac" : "prostate";
}

PhantomFamily parse_phantom_family(const std::string& s) {
  if (s == "cardiac") return PhantomFamily::kCardiac;
  if (s == "prostate") return PhantomFamily::kProstate;
  throw std::invalid_argument("unknown phantom '" + s + "' (expected cardiac or prostate)");
}

void PhantomSpec::validate() const {
  if (slices == 0 || height < 8 || width < 8) {
    throw std::invalid_argument("phantom: grid must be at least 1 x 8 x 8");
  }
  if (class_intensity.size() != num_classes()) {
    throw std::invalid_argument("phantom: need one intensity per class");
  }
  if (inverted_class >= num_classes()) {
    throw std::invalid_argument("phantom: inverted_class out of range");
  }
  if (!(profile_floor > 0.0 && profile_floor <= 1.0)) {
    throw std::invalid_argument("phantom: profile_floor must be in (0, 1]");
  }
  const double hmax = static_cast<double>(height - 1);
  const double wmax = static_cast<double>(width - 1);
  auto inside = [&](const Jittered& u, const Jittered& v, double ru, double rv, const char* what) {
    if (u.nominal - u.jitter - ru < 0.0 || u.nominal + u.jitter + ru > hmax ||
        v.nominal - v.jitter - rv < 0.0 || v.nominal + v.jitter + rv > wmax) {
      throw std::invalid_argument(std::string("phantom: ") + what + " can leave the grid");
    }
  };
  if (family == PhantomFamily::kCardiac) {
    for (const Jittered* j : {&lv_radius, &myo_thickness, &aa_radius}) {
      if (j->nominal - j->jitter <= 0.0) throw std::invalid_argument("phantom: sizes must stay positive");
    }
    const double outer = lv_radius.nominal + lv_radius.jitter + myo_thickness.nominal + myo_thickness.jitter;
    const double aa_max = aa_radius.nominal + aa_radius.jitter;
    const double du = std::max(0.0, std::abs(aa_offset_u.nominal) - aa_offset_u.jitter);
    const double dv = std::max(0.0, std::abs(aa_offset_v.nominal) - aa_offset_v.jitter);
    if (std::hypot(du, dv) < outer + aa_max + 1.0) {
      throw std::invalid_argument("phantom: AA can overlap the LV/MYO complex");
    }
    inside(lv_center_u, lv_center_v, outer, outer, "LV/MYO complex");
    const Jittered aa_u{lv_center_u.nominal + aa_offset_u.nominal, lv_center_u.jitter + aa_offset_u.jitter};
    const Jittered aa_v{lv_center_v.nominal + aa_offset_v.nominal, lv_center_v.jitter + aa_offset_v.jitter};
    inside(aa_u, aa_v, aa_max, aa_max, "AA");
  } else {
    if (gland_semi_u.nominal - gland_semi_u.jitter <= 0.0 ||
        gland_semi_v.nominal - gland_semi_v.jitter <= 0.0) {
      throw std::invalid_argument("phantom: sizes must stay positive");
    }
    inside(gland_center_u, gland_center_v, gland_semi_u.nominal + gland_semi_u.jitter,
           gland_semi_v.nominal + gland_semi_v.jitter, "gland");
  }
}

PhantomSpec cardiac_phantom() { return PhantomSpec{}; }

PhantomSpec prostate_phantom() {
  PhantomSpec spec;
  spec.family = PhantomFamily::kProstate;
  spec.class_intensity = {0.3, 0.6};
  spec.inverted_class = 1;
  return spec;
}

PhantomSpec phantom_for(PhantomFamily family) {
  return family == PhantomFamily::kCardiac ? cardiac_phantom() : prostate_phantom();
}

std::vector<double> nominal_ratios(const PhantomSpec& spec) {
  spec.validate();
  return ratios_for(spec, Pick::kNominal);
}

std::array<std::vector<double>, 2> nominal_ratio_bands(const PhantomSpec& spec) {
  spec.validate();
  std::vector<double> low = ratios_for(spec, Pick::kLow);
  std::vector<double> high = ratios_for(spec, Pick::kHigh);
  for (std::size_t k = 0; k < low.size(); ++k) {
    if (low[k] > high[k]) std::swap(low[k], high[k]);
  }
  return {low, high};
}

std::vector<SubjectVolume> generate(const PhantomSpec& spec, std::size_t n_subjects,
                                    Domain domain, std::uint64_t seed) {
  spec.validate();
  std::vector<SubjectVolume> out;
  out.reserve(n_subjects);
  for (std::size_t i = 0; i < n_subjects; ++i) {
    const std::uint64_t subject_seed = derive_seed(seed, i);
    Rng geometry_rng(subject_seed);
    const Geometry g = make_geometry(spec, Pick::kSample, geometry_rng);

    SubjectVolume v;
    v.header.subject_id = subject_name(i);
    v.header.slices = spec.slices;
    v.header.height = spec.height;
    v.header.width = spec.width;
    v.header.domain = domain;
    v.header.seed = subject_seed;
    v.header.num_classes = spec.num_classes();
    v.header.phantom = to_string(spec.family);
    v.header.has_image = true;
    v.header.has_labels = true;

    std::vector<bool> body;
    rasterize(spec, g, v.labels, body);

    Rng noise_rng(derive_seed(subject_seed, domain == Domain::kSource ? 1 : 2));
    v.intensities.resize(v.labels.size());
    for (std::size_t j = 0; j < v.labels.size(); ++j) {
      const std::size_t k = v.labels[j];
      double value = (k == 0 && !body[j]) ? spec.outside_intensity : spec.class_intensity[k];
      if (domain == Domain::kSource) {
        value += spec.source_noise * noise_rng.normal();
      } else {
        if (k == spec.inverted_class && (k != 0 || body[j])) value = 1.0 - value;
        value = std::pow(std::clamp(value, 0.0, 1.0), spec.target_gamma);
        value += spec.target_noise * noise_rng.normal();
      }
      v.intensities[j] = static_cast<float>(value);
    }
    out.push_back(std::move(v));
  }
  return out;
}

AffineParams sample_affine(std::uint64_t seed) {
  Rng rng(seed);
  AffineParams p;
  p.rotation_deg = rng.uniform(-10.0, 10.0);
  p.scale = rng.uniform(0.9, 1.1);
  p.shift_u = rng.uniform(-4.0, 4.0);
  p.shift_v = rng.uniform(-4.0, 4.0);
  return p;
}

SubjectVolume augment_affine(const SubjectVolume& volume, const AffineParams& p) {
  const std::size_t h = volume.header.height, w = volume.header.width, plane = h * w;
  const double cu = 0.5 * static_cast<double>(h - 1);
  const double cv = 0.5 * static_cast<double>(w - 1);
  const double theta = p.rotation_deg * std::numbers::pi / 180.0;
  // Inverse map from output to input coordinates: q = c + R(-theta)(o - c - t) / s.
  const double cos_t = std::cos(theta) / p.scale;
  const double sin_t = std::sin(theta) / p.scale;

  SubjectVolume out = volume;
  const bool image = volume.header.has_image && !volume.intensities.empty();
  for (std::size_t n = 0; n < volume.header.slices; ++n) {
    const float* src = image ? volume.intensities.data() + n * plane : nullptr;
    const std::uint8_t* lsrc = volume.has_labels() ? volume.labels.data() + n * plane : nullptr;
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < w; ++c) {
        const double du = static_cast<double>(r) - cu - p.shift_u;
        const double dv = static_cast<double>(c) - cv - p.shift_v;
        const double qu = cu + cos_t * du + sin_t * dv;
        const double qv = cv - sin_t * du + cos_t * dv;
        const std::size_t o = n * plane + r * w + c;
        if (src) {
          const double fu = std::floor(qu), fv = std::floor(qv);
          const double au = qu - fu, av = qv - fv;
          auto sample = [&](double uu, double vv) -> double {
            if (uu < 0 || vv < 0 || uu > static_cast<double>(h - 1) || vv > static_cast<double>(w - 1)) return 0.0;
            return src[static_cast<std::size_t>(uu) * w + static_cast<std::size_t>(vv)];
          };
          double value = (1 - au) * (1 - av) * sample(fu, fv);
          if (av > 0) value += (1 - au) * av * sample(fu, fv + 1);
          if (au > 0) value += au * (1 - av) * sample(fu + 1, fv);
          if (au > 0 && av > 0) value += au * av * sample(fu + 1, fv + 1);
          out.intensities[o] = static_cast<float>(value);
        }
        if (lsrc) {
          const double ru = std::round(qu), rv = std::round(qv);
          const bool ok = ru >= 0 && rv >= 0 && ru <= static_cast<double>(h - 1) && rv <= static_cast<double>(w - 1);
          out.labels[o] = ok ? lsrc[static_cast<std::size_t>(ru) * w + static_cast<std::size_t>(rv)] : 0;
        }
      }
    }
  }
  return out;
}

SubjectVolume augment_affine(const SubjectVolume& volume, std::uint64_t seed) {
  return augment_affine(volume, sample_affine(seed));
}

Tensor normalized_input(const SubjectVolume& volume) {
  const auto& hd = volume.header;
  if (!hd.has_image || volume.intensities.size() != hd.voxels()) {
    throw std::invalid_argument("normalized_input: subject " + hd.subject_id + " has no image");
  }
  double mean = 0.0;
  for (float v : volume.intensities) mean += v;
  mean /= static_cast<double>(volume.intensities.size());
  double var = 0.0;
  for (float v : volume.intensities) var += (v - mean) * (v - mean);
  var /= static_cast<double>(volume.intensities.size());
  const double inv = var > 0.0 ? 1.0 / std::sqrt(var) : 1.0;
  std::vector<double> out(volume.intensities.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (volume.intensities[i] - mean) * inv;
  return Tensor({hd.slices, 1, hd.height, hd.width}, std::move(out));
}

}  // namespace shape_tta
