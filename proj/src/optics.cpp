#include "htc/optics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace htc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Grow a steep region from `start`: steep points reset the stall counter,
// same-direction non-steep points are tolerated up to min_samples in a row,
// an opposite-direction point ends the region.
int extend_region(const std::vector<char>& steep, const std::vector<char>& opposite,
                  int start, int min_samples) {
  const int n = static_cast<int>(steep.size());
  int non_steep = 0;
  int end = start;
  for (int index = start; index < n; ++index) {
    if (steep[static_cast<size_t>(index)]) {
      non_steep = 0;
      end = index;
    } else if (!opposite[static_cast<size_t>(index)]) {
      if (++non_steep > min_samples) break;
    } else {
      return end;
    }
  }
  return end;
}

struct SteepDownArea {
  int start = 0;
  int end = 0;
  double mib = 0.0;  // maximum reachability seen since the area
};

void update_filter_sdas(std::vector<SteepDownArea>& sdas, double mib,
                        double xi_complement, const std::vector<double>& r_plot) {
  if (std::isinf(mib)) {
    sdas.clear();
    return;
  }
  std::vector<SteepDownArea> kept;
  for (auto& sda : sdas) {
    if (mib <= r_plot[static_cast<size_t>(sda.start)] * xi_complement) {
      sda.mib = std::max(sda.mib, mib);
      kept.push_back(sda);
    }
  }
  sdas = std::move(kept);
}

// Schubert-Gertz predecessor shrink: drop trailing points whose predecessor
// lies outside the candidate cluster. Returns false if the cluster vanishes.
bool correct_predecessor(const std::vector<double>& r_plot,
                         const std::vector<int>& pred_plot,
                         const std::vector<int>& ordering, int& s, int& e) {
  while (s < e) {
    if (r_plot[static_cast<size_t>(s)] > r_plot[static_cast<size_t>(e)]) return true;
    int p_e = pred_plot[static_cast<size_t>(e)];
    bool found = false;
    for (int i = s; i < e; ++i)
      if (p_e == ordering[static_cast<size_t>(i)]) {
        found = true;
        break;
      }
    if (found) return true;
    --e;
  }
  return false;
}

}  // namespace

OpticsResult optics(const MatrixRM& points, int min_samples, double xi,
                    int min_cluster_size, bool predecessor_correction) {
  const int n = static_cast<int>(points.rows());
  if (min_samples < 2) throw std::runtime_error("optics: min_samples must be >= 2");
  if (!(xi > 0.0 && xi < 1.0)) throw std::runtime_error("optics: xi must be in (0,1)");
  if (min_cluster_size < 0) min_cluster_size = min_samples;
  if (n == 0) throw std::runtime_error("optics: empty input");

  OpticsResult res;
  res.core_distance.assign(static_cast<size_t>(n), kInf);
  res.reachability.assign(static_cast<size_t>(n), kInf);
  res.predecessor.assign(static_cast<size_t>(n), -1);
  res.ordering.reserve(static_cast<size_t>(n));

  // full distance matrix; the label sets this runs on are small
  MatrixRM dist(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) {
      double d = (points.row(i) - points.row(j)).norm();
      dist(i, j) = d;
      dist(j, i) = d;
    }

  // core distance = distance to the min_samples-th nearest point, self included
  if (n >= min_samples) {
    std::vector<double> row(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) row[static_cast<size_t>(j)] = dist(i, j);
      std::nth_element(row.begin(), row.begin() + (min_samples - 1), row.end());
      res.core_distance[static_cast<size_t>(i)] = row[static_cast<size_t>(min_samples - 1)];
    }
  }

  // ordering loop: repeatedly take the unprocessed point with the smallest
  // reachability (ties to the lowest index), then relax its neighbors
  std::vector<char> processed(static_cast<size_t>(n), 0);
  for (int step = 0; step < n; ++step) {
    int point = -1;
    double best = kInf;
    for (int i = 0; i < n; ++i) {
      if (processed[static_cast<size_t>(i)]) continue;
      if (point < 0 || res.reachability[static_cast<size_t>(i)] < best) {
        best = res.reachability[static_cast<size_t>(i)];
        point = i;
      }
    }
    processed[static_cast<size_t>(point)] = 1;
    res.ordering.push_back(point);
    double core = res.core_distance[static_cast<size_t>(point)];
    if (std::isinf(core)) continue;
    for (int j = 0; j < n; ++j) {
      if (processed[static_cast<size_t>(j)]) continue;
      double rdist = std::max(dist(point, j), core);
      if (rdist < res.reachability[static_cast<size_t>(j)]) {
        res.reachability[static_cast<size_t>(j)] = rdist;
        res.predecessor[static_cast<size_t>(j)] = point;
      }
    }
  }

  // xi extraction over the reachability plot with a sentinel inf appended,
  // so clusters can close at the end of the plot
  std::vector<double> r_plot(static_cast<size_t>(n) + 1);
  std::vector<int> pred_plot(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    r_plot[static_cast<size_t>(i)] = res.reachability[static_cast<size_t>(res.ordering[static_cast<size_t>(i)])];
    pred_plot[static_cast<size_t>(i)] = res.predecessor[static_cast<size_t>(res.ordering[static_cast<size_t>(i)])];
  }
  r_plot[static_cast<size_t>(n)] = kInf;

  const double xi_complement = 1.0 - xi;
  std::vector<char> steep_up(static_cast<size_t>(n), 0), steep_down(static_cast<size_t>(n), 0);
  std::vector<char> up(static_cast<size_t>(n), 0), down(static_cast<size_t>(n), 0);
  for (int i = 0; i < n; ++i) {
    double ratio = r_plot[static_cast<size_t>(i)] / r_plot[static_cast<size_t>(i) + 1];
    // inf/inf yields NaN: neither steep nor up nor down, matching the intent
    steep_up[static_cast<size_t>(i)] = ratio <= xi_complement;
    steep_down[static_cast<size_t>(i)] = ratio >= 1.0 / xi_complement;
    down[static_cast<size_t>(i)] = ratio > 1.0;
    up[static_cast<size_t>(i)] = ratio < 1.0;
  }

  std::vector<SteepDownArea> sdas;
  int index = 0;
  double mib = 0.0;
  for (int steep_index = 0; steep_index < n; ++steep_index) {
    if (!(steep_up[static_cast<size_t>(steep_index)] || steep_down[static_cast<size_t>(steep_index)]))
      continue;
    if (steep_index < index) continue;

    for (int i = index; i <= steep_index; ++i)
      mib = std::max(mib, r_plot[static_cast<size_t>(i)]);

    if (steep_down[static_cast<size_t>(steep_index)]) {
      update_filter_sdas(sdas, mib, xi_complement, r_plot);
      SteepDownArea d;
      d.start = steep_index;
      d.end = extend_region(steep_down, up, steep_index, min_samples);
      sdas.push_back(d);
      index = d.end + 1;
      mib = r_plot[static_cast<size_t>(index)];
    } else {
      update_filter_sdas(sdas, mib, xi_complement, r_plot);
      int u_start = steep_index;
      int u_end = extend_region(steep_up, down, u_start, min_samples);
      index = u_end + 1;
      mib = r_plot[static_cast<size_t>(index)];

      std::vector<std::pair<int, int>> u_clusters;
      for (const auto& d : sdas) {
        int c_start = d.start;
        int c_end = u_end;

        if (r_plot[static_cast<size_t>(c_end) + 1] * xi_complement < d.mib) continue;

        double d_max = r_plot[static_cast<size_t>(d.start)];
        if (d_max * xi_complement >= r_plot[static_cast<size_t>(c_end) + 1]) {
          // trim the left edge down to the cluster's closing level
          while (r_plot[static_cast<size_t>(c_start) + 1] > r_plot[static_cast<size_t>(c_end) + 1] &&
                 c_start < d.end)
            ++c_start;
        } else if (r_plot[static_cast<size_t>(c_end) + 1] * xi_complement >= d_max) {
          // trim the right edge up to the cluster's opening level
          while (r_plot[static_cast<size_t>(c_end) - 1] > d_max && c_end > u_start)
            --c_end;
        }

        if (predecessor_correction &&
            !correct_predecessor(r_plot, pred_plot, res.ordering, c_start, c_end))
          continue;
        if (c_end - c_start + 1 < min_cluster_size) continue;
        if (c_start > d.end) continue;
        if (c_end < u_start) continue;
        u_clusters.emplace_back(c_start, c_end);
      }
      // smaller (later-discovered) clusters first
      std::reverse(u_clusters.begin(), u_clusters.end());
      for (auto& c : u_clusters) res.clusters.push_back(c);
    }
  }

  // label assignment: first (smallest) cluster covering a stretch wins
  std::vector<int> plot_labels(static_cast<size_t>(n), -1);
  int label = 0;
  for (const auto& [s, e] : res.clusters) {
    bool taken = false;
    for (int i = s; i <= e; ++i)
      if (plot_labels[static_cast<size_t>(i)] != -1) {
        taken = true;
        break;
      }
    if (taken) continue;
    for (int i = s; i <= e; ++i) plot_labels[static_cast<size_t>(i)] = label;
    ++label;
  }
  res.labels.assign(static_cast<size_t>(n), -1);
  for (int i = 0; i < n; ++i)
    res.labels[static_cast<size_t>(res.ordering[static_cast<size_t>(i)])] = plot_labels[static_cast<size_t>(i)];
  res.n_clusters = label;
  return res;
}

}  // namespace htc
