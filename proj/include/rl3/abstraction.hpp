#pragma once

#include <functional>
#include <string>
#include <vector>

#include "rl3/util.hpp"

namespace rl3 {

/// Incremental clustering of concrete states into abstract states.
///
/// A new state joins the cluster of the nearest previously visited state
/// within `radius`, unless that cluster is already full; ties go to the
/// earliest-visited candidate. Otherwise it founds a new cluster whose id is
/// its own concrete index, so with radius 0 the abstraction is exactly the
/// identity map. Assignments are permanent.
class StateAbstraction {
public:
    using DistanceFn = std::function<double(int, int)>;

    StateAbstraction(int num_states, int max_cluster_size, double radius, DistanceFn distance)
        : max_cluster_size_(max_cluster_size),
          radius_(radius),
          distance_(std::move(distance)),
          id_of_(num_states, -1),
          cluster_size_(num_states, 0) {}

    bool assigned(int s) const { return id_of_[s] >= 0; }

    int id_of(int s) const {
        if (!assigned(s)) fail("state has no abstract assignment yet");
        return id_of_[s];
    }

    /// Get-or-assign on first visit.
    int assign(int s) {
        if (assigned(s)) return id_of_[s];
        double best_dist = 0.0;
        int best_id = -1;
        for (int prev : visit_order_) {
            const int cluster = id_of_[prev];
            if (cluster_size_[cluster] >= max_cluster_size_) continue;
            const double d = distance_(s, prev);
            if (d > radius_) continue;
            if (best_id < 0 || d < best_dist) {
                best_dist = d;
                best_id = cluster;
            }
        }
        if (best_id < 0) {
            best_id = s;  // founder keeps its concrete index as the cluster id
            ++num_clusters_;
        }
        id_of_[s] = best_id;
        cluster_size_[best_id] += 1;
        visit_order_.push_back(s);
        return best_id;
    }

    int cluster_count() const { return num_clusters_; }
    int visited_count() const { return static_cast<int>(visit_order_.size()); }
    int cluster_size(int id) const { return cluster_size_[id]; }
    const std::vector<int>& visit_order() const { return visit_order_; }

    /// "state,abstract_id" rows for plot emission.
    std::string dump_csv() const {
        std::string out = "state,abstract_id\n";
        for (int s : visit_order_)
            out += std::to_string(s) + "," + std::to_string(id_of_[s]) + "\n";
        return out;
    }

private:
    int max_cluster_size_;
    double radius_;
    DistanceFn distance_;
    std::vector<int> id_of_;
    std::vector<int> cluster_size_;
    std::vector<int> visit_order_;
    int num_clusters_ = 0;
};

/// Manhattan distance between cells of a width x width grid.
inline StateAbstraction::DistanceFn grid_manhattan(int width) {
    return [width](int a, int b) {
        return static_cast<double>(std::abs(a / width - b / width) + std::abs(a % width - b % width));
    };
}

/// Identity metric: nothing ever clusters.
inline StateAbstraction::DistanceFn identity_metric() {
    return [](int a, int b) { return a == b ? 0.0 : 1e300; };
}

struct AbstractionConfig {
    int max_cluster_size = 2;
    double radius = 1.0;
    StateAbstraction::DistanceFn distance;
};

}  // namespace rl3
