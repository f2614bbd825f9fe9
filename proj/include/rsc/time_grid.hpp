#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "rsc/errors.hpp"

namespace rsc {

// Strictly increasing time instants covering [0, T], with the mesh (max
// consecutive gap) cached. Immutable after construction.
class TimeGrid {
  public:
    TimeGrid() = default;

    static TimeGrid from_times(std::vector<double> times) {
        if (times.size() < 2) throw ParameterError("grid needs at least two nodes");
        if (times.front() != 0.0) throw ParameterError("grid must start at 0");
        for (std::size_t k = 1; k < times.size(); ++k) {
            if (!(times[k] > times[k - 1])) throw ParameterError("grid times must be strictly increasing");
        }
        TimeGrid g;
        g.times_ = std::move(times);
        g.mesh_ = 0.0;
        for (std::size_t k = 1; k < g.times_.size(); ++k)
            g.mesh_ = std::max(g.mesh_, g.times_[k] - g.times_[k - 1]);
        return g;
    }

    static TimeGrid uniform(double horizon, std::size_t n_intervals) {
        if (!(horizon > 0.0)) throw ParameterError("horizon must be positive");
        if (n_intervals < 1) throw ParameterError("need at least one interval");
        std::vector<double> t(n_intervals + 1);
        for (std::size_t k = 0; k <= n_intervals; ++k)
            t[k] = horizon * static_cast<double>(k) / static_cast<double>(n_intervals);
        t[0] = 0.0;
        t[n_intervals] = horizon;
        return from_times(std::move(t));
    }

    const std::vector<double>& times() const { return times_; }
    double t(std::size_t k) const { return times_[k]; }
    double dt(std::size_t k) const { return times_[k + 1] - times_[k]; }
    double horizon() const { return times_.back(); }
    double mesh() const { return mesh_; }
    std::size_t nodes() const { return times_.size(); }
    std::size_t intervals() const { return times_.size() - 1; }

    bool same_as(const TimeGrid& other) const { return times_ == other.times_; }

    // Index of the node closest to t; t must lie inside [0, T] up to a
    // mesh-sized tolerance.
    std::size_t nearest(double t) const {
        const double tol = 0.5 * mesh_ + 1e-12;
        if (t < -tol || t > horizon() + tol) throw RangeError("time outside grid");
        auto it = std::lower_bound(times_.begin(), times_.end(), t);
        if (it == times_.end()) return times_.size() - 1;
        std::size_t hi = static_cast<std::size_t>(it - times_.begin());
        if (hi == 0) return 0;
        return (times_[hi] - t <= t - times_[hi - 1]) ? hi : hi - 1;
    }

  private:
    std::vector<double> times_;
    double mesh_ = 0.0;
};

}  // namespace rsc
