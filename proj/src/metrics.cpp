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

#include "shape_tta/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace shape_tta {
namespace {

void check_same_size(const char* op, std::size_t a, std::size_t b) {
  if (a != b) {
    throw std::invalid_argument(std::string(op) + ": volumes differ in size (" +
                                std::to_string(a) + " vs " + std::to_string(b) + ")");
  }
}

// Sum over `from` of the distance to the nearest point of `to`.
double nearest_distance_sum(const std::vector<std::array<int, 3>>& from,
                            const std::vector<std::array<int, 3>>& to) {
  double total = 0.0;
  for (const auto& a : from) {
    long best = std::numeric_limits<long>::max();
    for (const auto& b : to) {
      const long d0 = a[0] - b[0], d1 = a[1] - b[1], d2 = a[2] - b[2];
      best = std::min(best, d0 * d0 + d1 * d1 + d2 * d2);
      if (best == 0) break;
    }
    total += std::sqrt(static_cast<double>(best));
  }
  return total;
}

std::string fixed(double v, int precision) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s + " " : s + std::string(width - s.size(), ' ');
}

std::optional<double> mean_of_defined(const std::vector<std::optional<double>>& values) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& v : values) {
    if (v) {
      total += *v;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return total / static_cast<double>(n);
}

}  // namespace

double dice3d(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt,
              std::uint8_t k) {
  check_same_size("dice3d", pred.size(), gt.size());
  std::size_t inter = 0, np = 0, ng = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] == k, g = gt[i] == k;
    np += p;
    ng += g;
    inter += p && g;
  }
  if (np + ng == 0) return 100.0;
  return 200.0 * static_cast<double>(inter) / static_cast<double>(np + ng);
}

std::vector<std::array<int, 3>> surface_voxels(std::span<const std::uint8_t> labels,
                                               VolumeShape shape, std::uint8_t k) {
  check_same_size("surface_voxels", labels.size(), shape.voxels());
  const int n = static_cast<int>(shape.slices);
  const int h = static_cast<int>(shape.height);
  const int w = static_cast<int>(shape.width);
  auto inside = [&](int z, int r, int c) {
    if (z < 0 || z >= n || r < 0 || r >= h || c < 0 || c >= w) return false;
    return labels[(static_cast<std::size_t>(z) * h + r) * w + c] == k;
  };
  std::vector<std::array<int, 3>> out;
  for (int z = 0; z < n; ++z) {
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        if (!inside(z, r, c)) continue;
        if (!inside(z - 1, r, c) || !inside(z + 1, r, c) || !inside(z, r - 1, c) ||
            !inside(z, r + 1, c) || !inside(z, r, c - 1) || !inside(z, r, c + 1)) {
          out.push_back({z, r, c});
        }
      }
    }
  }
  return out;
}

std::optional<double> asd3d(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt,
                            VolumeShape shape, std::uint8_t k) {
  check_same_size("asd3d", pred.size(), gt.size());
  const auto sp = surface_voxels(pred, shape, k);
  const auto sg = surface_voxels(gt, shape, k);
  if (sp.empty() || sg.empty()) return std::nullopt;
  const double total = nearest_distance_sum(sp, sg) + nearest_distance_sum(sg, sp);
  return total / static_cast<double>(sp.size() + sg.size());
}

double MetricReport::mean_dsc() const {
  if (dsc.empty()) return 0.0;
  double total = 0.0;
  for (double d : dsc) total += d;
  return total / static_cast<double>(dsc.size());
}

std::optional<double> MetricReport::mean_asd() const { return mean_of_defined(asd); }

MetricReport evaluate_subject(std::string method, std::string subject,
                              std::span<const std::uint8_t> pred,
                              std::span<const std::uint8_t> gt, VolumeShape shape,
                              std::size_t num_classes) {
  MetricReport r{std::move(method), std::move(subject), {}, {}};
  for (std::size_t k = 1; k < num_classes; ++k) {
    const auto c = static_cast<std::uint8_t>(k);
    r.dsc.push_back(dice3d(pred, gt, c));
    r.asd.push_back(asd3d(pred, gt, shape, c));
  }
  return r;
}

std::string format_asd(const std::optional<double>& asd) { return asd ? fixed(*asd, 4) : "n/a"; }

ResultsTable tabulate(std::span<const MetricReport> reports,
                      const std::vector<std::string>& class_names) {
  const std::size_t nc = class_names.size();
  for (const MetricReport& r : reports) {
    if (r.dsc.size() != nc || r.asd.size() != nc) {
      throw std::invalid_argument("tabulate: report for " + r.method + "/" + r.subject + " has " +
                                  std::to_string(r.dsc.size()) + " classes, expected " +
                                  std::to_string(nc));
    }
  }

  std::ostringstream csv;
  csv << "method,subject,class,dsc,asd\n";
  for (const MetricReport& r : reports) {
    for (std::size_t c = 0; c < nc; ++c) {
      csv << r.method << ',' << r.subject << ',' << class_names[c] << ',' << fixed(r.dsc[c], 4)
          << ',' << format_asd(r.asd[c]) << '\n';
    }
    csv << r.method << ',' << r.subject << ",mean," << fixed(r.mean_dsc(), 4) << ','
        << format_asd(r.mean_asd()) << '\n';
  }

  std::vector<std::string> methods;
  for (const MetricReport& r : reports) {
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) {
      methods.push_back(r.method);
    }
  }

  constexpr std::size_t kName = 10, kCell = 8;
  std::ostringstream text;
  text << pad("Method", kName) << pad("DSC (%)", kCell * (nc + 1)) << "ASD (vox)\n";
  text << pad("", kName);
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& name : class_names) text << pad(name, kCell);
    text << pad("Mean", kCell);
  }
  text << '\n';

  std::size_t missing = 0;
  for (const std::string& m : methods) {
    std::vector<double> dsc_sum(nc, 0.0);
    std::vector<std::vector<std::optional<double>>> asd_cells(nc);
    std::size_t subjects = 0;
    for (const MetricReport& r : reports) {
      if (r.method != m) continue;
      ++subjects;
      for (std::size_t c = 0; c < nc; ++c) {
        dsc_sum[c] += r.dsc[c];
        asd_cells[c].push_back(r.asd[c]);
        if (!r.asd[c]) ++missing;
      }
    }
    std::vector<double> dsc_col(nc);
    std::vector<std::optional<double>> asd_col(nc);
    for (std::size_t c = 0; c < nc; ++c) {
      dsc_col[c] = dsc_sum[c] / static_cast<double>(subjects);
      asd_col[c] = mean_of_defined(asd_cells[c]);
    }
    double dsc_mean = 0.0;
    for (double d : dsc_col) dsc_mean += d;
    dsc_mean /= static_cast<double>(nc);

    text << pad(m, kName);
    for (double d : dsc_col) text << pad(fixed(d, 1), kCell);
    text << pad(fixed(dsc_mean, 1), kCell);
    for (const auto& a : asd_col) text << pad(a ? fixed(*a, 2) : "n/a", kCell);
    const auto asd_mean = mean_of_defined(asd_col);
    text << (asd_mean ? fixed(*asd_mean, 2) : "n/a") << '\n';
  }
  if (missing > 0) {
    text << "n/a: " << missing
         << " subject-class ASD values undefined (empty prediction), excluded from means\n";
  }
  return {csv.str(), text.str()};
}

}  // namespace shape_tta
