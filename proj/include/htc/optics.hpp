#pragma once

#include <utility>
#include <vector>

#include "htc/embedding.hpp"

namespace htc {

// Density-based ordering plus xi-steepness cluster extraction. Reachability
// uses infinity as the undefined marker (the first processed point of every
// connected sequence keeps it). labels hold -1 for noise.
struct OpticsResult {
  std::vector<int> ordering;           // processing order (original indices)
  std::vector<double> core_distance;   // per point; inf = never core
  std::vector<double> reachability;    // per point; inf = undefined
  std::vector<int> predecessor;        // per point; -1 = seed
  std::vector<std::pair<int, int>> clusters;  // [start,end] inclusive, ordering space
  std::vector<int> labels;             // per point; -1 = noise
  int n_clusters = 0;
};

// min_cluster_size < 0 means "use min_samples".
OpticsResult optics(const MatrixRM& points, int min_samples, double xi,
                    int min_cluster_size = -1, bool predecessor_correction = true);

}  // namespace htc
